#include "scgen/config.hpp"

#include <set>

#include <nlohmann/json.hpp>

#include "scgen/tensor_io.hpp"

namespace scgen {

namespace {

using json = nlohmann::ordered_json;

// Typed view of one JSON object; remembers which keys were read so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& key, std::int64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(key_path(key) + ": expected an integer");
      out = v->get<std::int64_t>();
    }
  }
  void get(const std::string& key, int& out) {
    std::int64_t v = out;
    get(key, v);
    if (v < INT32_MIN || v > INT32_MAX) throw ConfigError(key_path(key) + ": out of range");
    out = static_cast<int>(v);
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(key_path(key) + ": expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(key_path(key) + ": expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(key_path(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(key_path(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::vector<std::int64_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(key_path(key) + ": expected an array of integers");
      std::vector<std::int64_t> vals;
      for (const auto& e : *v) {
        if (!e.is_number_integer()) throw ConfigError(key_path(key) + ": expected an array of integers");
        vals.push_back(e.get<std::int64_t>());
      }
      out = std::move(vals);
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(key_path(it.key()) + ": unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Fn>
void with_section(Section& parent, const std::string& key, Fn fn) {
  if (const json* v = parent.find(key)) {
    Section s(*v, parent.key_path(key));
    fn(s);
    s.finish();
  }
}

json ints(const std::vector<std::int64_t>& v) { return json(v); }

}  // namespace

void ExperimentConfig::validate() const {
  if (preset != "families4" && preset != "paper-full") {
    throw ConfigError("preset: unknown preset '" + preset + "' (expected families4 or paper-full)");
  }
  if (sample_every < 0) throw ConfigError("sample_every: must be >= 0");
  train.validate();
}

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig cfg;
  cfg.preset = name;
  if (name == "families4") {
    cfg.train.generator = GeneratorConfig::families4();
    // 500 steps at the 1e-4 rate barely move a 32px model; a sharper gate
    // keeps the per-class vectors apart under spectrally normalized convs.
    cfg.train.generator.temperature = 5.0;
    cfg.train.lr_g = 1e-3;
    cfg.train.lr_d = 4e-3;
    return cfg;
  }
  if (name == "paper-full") {
    cfg.train.generator = GeneratorConfig::paper_full();
    cfg.train.discriminator.channels = {64, 128, 256, 512};
    cfg.train.batch_size = 8;
    cfg.train.steps = 200000;
    cfg.train.checkpoint_every = 10000;
    return cfg;
  }
  throw ConfigError("preset: unknown preset '" + name + "' (expected families4 or paper-full)");
}

ExperimentConfig parse_experiment_config(const std::string& json_text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": invalid JSON: " + e.what());
  }
  try {
    Section top(doc, "");
    std::string preset = "families4";
    top.get("preset", preset);
    ExperimentConfig cfg = preset_config(preset);
    TrainConfig& t = cfg.train;
    top.get("seed", t.seed);
    top.get("data_dir", cfg.data_dir);
    top.get("sample_every", cfg.sample_every);
    top.get("perceptual_weights_path", t.perceptual.weights_path);

    with_section(top, "generator", [&](Section& s) {
      auto& g = t.generator;
      s.get("svg_channels", g.svg_channels);
      s.get("svg_head_channels", g.svg_head_channels);
      s.get("srg_channels", g.srg_channels);
      s.get("vector_taps", g.vector_taps);
      s.get("candidates", g.candidates);
      s.get("temperature", g.temperature);
      std::string gate = to_string(g.gate);
      s.get("gate", gate);
      try {
        g.gate = parse_gate_mode(gate);
      } catch (const ConfigError& e) {
        throw ConfigError(s.key_path("gate") + ": " + e.what());
      }
      s.get("z_dim", g.z_dim);
      s.get("resolution", g.resolution);
      s.get("classes", g.classes);
      s.get("kernel_size", g.kernel_size);
      s.get("spectral_norm", g.spectral_norm);
    });
    with_section(top, "discriminator", [&](Section& s) {
      s.get("channels", t.discriminator.channels);
      s.get("scales", t.discriminator.scales);
      s.get("kernel_size", t.discriminator.kernel_size);
    });
    with_section(top, "loss", [&](Section& s) {
      s.get("lambda_p", t.loss.perceptual);
      s.get("lambda_gan", t.loss.gan);
      s.get("lambda_fm", t.loss.feature_matching);
      s.get("lambda_s", t.loss.regression);
      s.get("norm_p", t.loss.norm_p);
      std::string space = t.loss.regression_in_feature_space ? "perceptual" : "pixel";
      s.get("regression_space", space);
      if (space != "pixel" && space != "perceptual") {
        throw ConfigError(s.key_path("regression_space") + ": expected \"pixel\" or \"perceptual\"");
      }
      t.loss.regression_in_feature_space = space == "perceptual";
    });
    with_section(top, "perceptual", [&](Section& s) {
      s.get("channels", t.perceptual.channels);
      s.get("seed", t.perceptual.seed);
      s.get("relu", t.perceptual.relu);
    });
    with_section(top, "train", [&](Section& s) {
      s.get("lr_g", t.lr_g);
      s.get("lr_d", t.lr_d);
      s.get("beta1", t.beta1);
      s.get("beta2", t.beta2);
      s.get("adam_eps", t.adam_eps);
      s.get("batch_size", t.batch_size);
      s.get("steps", t.steps);
      s.get("decay_start", t.decay_start);
      s.get("checkpoint_every", t.checkpoint_every);
      s.get("log_every", t.log_every);
      s.get("check_finite", t.check_finite);
    });
    top.finish();
    cfg.validate();
    return cfg;
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return parse_experiment_config(std::string(bytes.begin(), bytes.end()), path);
}

std::string to_json(const ExperimentConfig& cfg) {
  const TrainConfig& t = cfg.train;
  const GeneratorConfig& g = t.generator;
  json doc;
  doc["preset"] = cfg.preset;
  doc["seed"] = t.seed;
  doc["data_dir"] = cfg.data_dir;
  doc["sample_every"] = cfg.sample_every;
  doc["perceptual_weights_path"] = t.perceptual.weights_path;
  doc["generator"] = {
      {"svg_channels", ints(g.svg_channels)},
      {"svg_head_channels", g.svg_head_channels},
      {"srg_channels", ints(g.srg_channels)},
      {"vector_taps", ints(g.vector_taps)},
      {"candidates", g.candidates},
      {"temperature", g.temperature},
      {"gate", to_string(g.gate)},
      {"z_dim", g.z_dim},
      {"resolution", g.resolution},
      {"classes", g.classes},
      {"kernel_size", g.kernel_size},
      {"spectral_norm", g.spectral_norm},
  };
  doc["discriminator"] = {
      {"channels", ints(t.discriminator.channels)},
      {"scales", t.discriminator.scales},
      {"kernel_size", t.discriminator.kernel_size},
  };
  doc["loss"] = {
      {"lambda_p", t.loss.perceptual},
      {"lambda_gan", t.loss.gan},
      {"lambda_fm", t.loss.feature_matching},
      {"lambda_s", t.loss.regression},
      {"norm_p", t.loss.norm_p},
      {"regression_space", t.loss.regression_in_feature_space ? "perceptual" : "pixel"},
  };
  doc["perceptual"] = {
      {"channels", ints(t.perceptual.channels)},
      {"seed", t.perceptual.seed},
      {"relu", t.perceptual.relu},
  };
  doc["train"] = {
      {"lr_g", t.lr_g},
      {"lr_d", t.lr_d},
      {"beta1", t.beta1},
      {"beta2", t.beta2},
      {"adam_eps", t.adam_eps},
      {"batch_size", t.batch_size},
      {"steps", t.steps},
      {"decay_start", t.decay_start},
      {"checkpoint_every", t.checkpoint_every},
      {"log_every", t.log_every},
      {"check_finite", t.check_finite},
  };
  return doc.dump(2) + "\n";
}

}  // namespace scgen
