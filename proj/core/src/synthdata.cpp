#include "scgen/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "scgen/parallel.hpp"
#include "scgen/random.hpp"
#include "scgen/tensor_io.hpp"

namespace fs = std::filesystem;

namespace scgen {

namespace {

std::uint8_t quantize(double unit) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(unit, 0.0, 1.0) * 255.0));
}

float dequantize(std::uint8_t v) { return static_cast<float>(v / 127.5 - 1.0); }

// Uniform in [-1, 1), keyed by position so a texture never depends on which
// class of its family occupies a pixel.
double pixel_jitter(std::uint64_t seed, int family, std::int64_t y, std::int64_t x, int channel) {
  const std::uint64_t h = derive_seed(seed, static_cast<std::uint64_t>(family) + 0x7e, static_cast<std::uint64_t>(y),
                                      static_cast<std::uint64_t>(x) * 4 + static_cast<std::uint64_t>(channel));
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

std::array<std::uint8_t, 3> texel(const SceneSpec& spec, int family, const Texture& t, std::int64_t y, std::int64_t x) {
  bool use_b = false;
  const int half = std::max(1, t.period / 2);
  if (t.kind == TextureKind::checker) {
    use_b = ((y / half) + (x / half)) % 2 == 1;
  } else if (t.kind == TextureKind::stripes) {
    const double rad = t.angle_deg * std::numbers::pi / 180.0;
    const double proj = static_cast<double>(x) * std::cos(rad) + static_cast<double>(y) * std::sin(rad);
    const auto band = static_cast<std::int64_t>(std::floor(proj / half));
    use_b = ((band % 2) + 2) % 2 == 1;
  }
  const auto& c = use_b ? t.color_b : t.color_a;
  std::array<std::uint8_t, 3> out{};
  for (int k = 0; k < 3; ++k) {
    const double j = t.noise > 0.0 ? t.noise * pixel_jitter(spec.seed, family, y, x, k) : 0.0;
    out[static_cast<std::size_t>(k)] = quantize(c[static_cast<std::size_t>(k)] + j);
  }
  return out;
}

std::string kind_name(TextureKind k) {
  switch (k) {
    case TextureKind::flat: return "flat";
    case TextureKind::checker: return "checker";
    case TextureKind::stripes: return "stripes";
  }
  return "flat";
}

TextureKind parse_kind(const std::string& s, const std::string& source) {
  if (s == "flat") return TextureKind::flat;
  if (s == "checker") return TextureKind::checker;
  if (s == "stripes") return TextureKind::stripes;
  throw FormatError(source + ": unknown texture kind '" + s + "'");
}

bool same_texture(const Texture& a, const Texture& b) {
  return a.kind == b.kind && a.color_a == b.color_a && a.color_b == b.color_b && a.period == b.period &&
         a.angle_deg == b.angle_deg && a.noise == b.noise;
}

// Netpbm header: magic, width, height, maxval, one whitespace byte.
struct PnmHeader {
  std::int64_t w = 0;
  std::int64_t h = 0;
  std::int64_t maxval = 0;
  std::size_t data_offset = 0;
};

PnmHeader parse_pnm_header(const std::vector<char>& bytes, const char* magic, const std::string& source) {
  auto fail = [&](const std::string& why, std::size_t at) {
    throw FormatError(source + ": " + why + " at byte " + std::to_string(at));
  };
  if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1]) {
    fail(std::string("expected '") + magic + "' magic", 0);
  }
  std::size_t pos = 2;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; };
  auto next_int = [&](const char* what) -> std::int64_t {
    bool skipped = false;
    while (pos < bytes.size()) {
      if (is_space(bytes[pos])) {
        ++pos;
        skipped = true;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        skipped = true;
      } else {
        break;
      }
    }
    if (!skipped) fail(std::string("missing whitespace before ") + what, pos);
    if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9') fail(std::string("expected ") + what, pos);
    std::int64_t v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1 << 24)) fail(std::string(what) + " out of range", pos);
      ++pos;
    }
    return v;
  };
  PnmHeader hdr;
  hdr.w = next_int("width");
  hdr.h = next_int("height");
  hdr.maxval = next_int("maxval");
  if (hdr.w < 1 || hdr.h < 1) fail("image dimensions must be positive", pos);
  if (hdr.maxval < 1 || hdr.maxval > 255) fail("only 8-bit maxval (1..255) is supported", pos);
  if (pos >= bytes.size() || !is_space(bytes[pos])) fail("expected single whitespace after maxval", pos);
  hdr.data_offset = pos + 1;
  return hdr;
}

}  // namespace

SceneSpec SceneSpec::families4(std::uint64_t seed) {
  SceneSpec s;
  s.resolution = 32;
  s.seed = seed;
  Texture bg{TextureKind::flat, {0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}, 4, 0.0, 0.05};
  Texture checker{TextureKind::checker, {0.9, 0.2, 0.2}, {0.9, 0.8, 0.2}, 4, 0.0, 0.0};
  Texture stripes{TextureKind::stripes, {0.2, 0.3, 0.9}, {0.8, 0.9, 0.9}, 4, 45.0, 0.0};
  s.classes = {
      {"background", 0, bg},
      {"checker_a", 1, checker},
      {"checker_b", 1, checker},
      {"stripes", 2, stripes},
  };
  return s;
}

SceneSpec SceneSpec::preset(const std::string& name, std::uint64_t seed) {
  if (name == "families4") return families4(seed);
  if (name == "paper-full") {
    // Same families at 256x256, with extra classes
    // so the layout carries 19 channels.
    SceneSpec s = families4(seed);
    s.resolution = 256;
    s.min_shapes = 4;
    s.max_shapes = 12;
    const std::array<std::array<double, 3>, 5> palette{{
        {0.1, 0.6, 0.2}, {0.7, 0.4, 0.1}, {0.3, 0.3, 0.3}, {0.6, 0.2, 0.7}, {0.1, 0.7, 0.7}}};
    for (int i = 4; i < 19; ++i) {
      const auto& a = palette[static_cast<std::size_t>(i % 5)];
      Texture t{static_cast<TextureKind>(i % 3), a, {1.0 - a[0], 1.0 - a[1], 1.0 - a[2]}, 4 + 2 * (i % 4),
                15.0 * (i % 6), 0.0};
      s.classes.push_back({"class" + std::to_string(i), i - 1, t});
    }
    return s;
  }
  throw ConfigError("unknown preset '" + name + "' (expected families4 or paper-full)");
}

void SceneSpec::validate() const {
  if (resolution < 4) throw ConfigError("scene.resolution: must be >= 4");
  if (classes.size() < 3) throw ConfigError("scene.classes: need background plus at least two classes");
  if (classes.size() > 255) throw ConfigError("scene.classes: at most 255 classes fit an 8-bit layout");
  if (min_shapes < 1 || max_shapes < min_shapes) throw ConfigError("scene.min_shapes/max_shapes: need 1 <= min <= max");
  std::map<int, std::vector<std::size_t>> by_family;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& t = classes[i].texture;
    if (t.period < 2) throw ConfigError("scene.classes[" + std::to_string(i) + "].texture.period: must be >= 2");
    if (!(t.noise >= 0.0)) throw ConfigError("scene.classes[" + std::to_string(i) + "].texture.noise: must be >= 0");
    by_family[classes[i].family].push_back(i);
  }
  bool shared = false;
  for (const auto& [fam, members] : by_family) {
    for (auto m : members) {
      if (!same_texture(classes[m].texture, classes[members.front()].texture)) {
        throw ConfigError("scene.classes: family " + std::to_string(fam) + " mixes texture parameters");
      }
    }
    if (members.size() >= 2 && !(members.size() == 2 && members.front() == 0)) shared = true;
  }
  if (!shared) throw ConfigError("scene.classes: no two foreground classes share an appearance family");
  if (by_family.size() < 3) throw ConfigError("scene.classes: need a foreground family distinct from the shared one");
}

std::vector<int> SceneSpec::family_of_classes() const {
  std::vector<int> out;
  for (const auto& c : classes) out.push_back(c.family);
  return out;
}

std::vector<std::array<double, 3>> SceneSpec::reference_colors() const {
  std::vector<std::array<double, 3>> out;
  for (const auto& c : classes) {
    std::array<double, 3> acc{0, 0, 0};
    for (std::int64_t y = 0; y < resolution; ++y) {
      for (std::int64_t x = 0; x < resolution; ++x) {
        const auto px = texel(*this, c.family, c.texture, y, x);
        for (int k = 0; k < 3; ++k) acc[static_cast<std::size_t>(k)] += dequantize(px[static_cast<std::size_t>(k)]);
      }
    }
    for (auto& a : acc) a /= static_cast<double>(resolution * resolution);
    out.push_back(acc);
  }
  return out;
}

std::string SceneSpec::to_json() const {
  nlohmann::ordered_json j;
  j["resolution"] = resolution;
  j["seed"] = seed;
  j["min_shapes"] = min_shapes;
  j["max_shapes"] = max_shapes;
  j["classes"] = nlohmann::ordered_json::array();
  for (const auto& c : classes) {
    nlohmann::ordered_json t;
    t["kind"] = kind_name(c.texture.kind);
    t["color_a"] = c.texture.color_a;
    t["color_b"] = c.texture.color_b;
    t["period"] = c.texture.period;
    t["angle_deg"] = c.texture.angle_deg;
    t["noise"] = c.texture.noise;
    j["classes"].push_back({{"name", c.name}, {"family", c.family}, {"texture", t}});
  }
  return j.dump(2) + "\n";
}

SceneSpec SceneSpec::from_json(const std::string& text, const std::string& source) {
  try {
    const auto j = nlohmann::json::parse(text);
    SceneSpec s;
    s.resolution = j.at("resolution").get<std::int64_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.min_shapes = j.at("min_shapes").get<int>();
    s.max_shapes = j.at("max_shapes").get<int>();
    for (const auto& c : j.at("classes")) {
      SceneClass sc;
      sc.name = c.at("name").get<std::string>();
      sc.family = c.at("family").get<int>();
      const auto& t = c.at("texture");
      sc.texture.kind = parse_kind(t.at("kind").get<std::string>(), source);
      sc.texture.color_a = t.at("color_a").get<std::array<double, 3>>();
      sc.texture.color_b = t.at("color_b").get<std::array<double, 3>>();
      sc.texture.period = t.at("period").get<int>();
      sc.texture.angle_deg = t.at("angle_deg").get<double>();
      sc.texture.noise = t.at("noise").get<double>();
      s.classes.push_back(sc);
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": " + e.what());
  }
}

Tensor<float> render_labels(const SceneSpec& spec, const LabelMap& labels) {
  Tensor<float> img(Shape{1, 3, labels.h, labels.w});
  for (std::int64_t y = 0; y < labels.h; ++y) {
    for (std::int64_t x = 0; x < labels.w; ++x) {
      const auto c = labels.at(y, x);
      if (c >= spec.classes.size()) {
        throw ValidityError("render: label " + std::to_string(c) + " at (" + std::to_string(y) + ", " +
                            std::to_string(x) + ") exceeds the class table");
      }
      const auto& cls = spec.classes[c];
      const auto px = texel(spec, cls.family, cls.texture, y, x);
      for (int k = 0; k < 3; ++k) img.at(0, k, y, x) = dequantize(px[static_cast<std::size_t>(k)]);
    }
  }
  return img;
}

SamplePair generate_scene(const SceneSpec& spec, std::int64_t index) {
  std::mt19937_64 rng(derive_seed(spec.seed, 0x5ce, static_cast<std::uint64_t>(index)));
  auto draw = [&](std::int64_t lo, std::int64_t hi) {  // inclusive
    return lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };
  const std::int64_t r = spec.resolution;
  LabelMap lm{r, r, std::vector<std::uint8_t>(static_cast<std::size_t>(r * r), 0)};
  const auto shapes = draw(spec.min_shapes, spec.max_shapes);
  const std::int64_t lo = std::max<std::int64_t>(4, r / 4);
  const std::int64_t hi = std::max(lo, r / 2);
  for (std::int64_t s = 0; s < shapes; ++s) {
    const auto cls = static_cast<std::uint8_t>(draw(1, spec.class_count() - 1));
    const bool ellipse = draw(0, 1) == 1;
    const auto sh = draw(lo, hi);
    const auto sw = draw(lo, hi);
    const auto y0 = draw(0, r - sh);
    const auto x0 = draw(0, r - sw);
    const double cy = y0 + (sh - 1) / 2.0;
    const double cx = x0 + (sw - 1) / 2.0;
    for (std::int64_t y = y0; y < y0 + sh; ++y) {
      for (std::int64_t x = x0; x < x0 + sw; ++x) {
        if (ellipse) {
          const double dy = (y - cy) / (sh / 2.0);
          const double dx = (x - cx) / (sw / 2.0);
          if (dy * dy + dx * dx > 1.0) continue;
        }
        lm.labels[static_cast<std::size_t>(y * r + x)] = cls;
      }
    }
  }
  SamplePair pair;
  pair.image = render_labels(spec, lm);
  pair.labels = std::move(lm);
  return pair;
}

Tensor<float> one_hot(const LabelMap& labels, std::int64_t classes) {
  Tensor<float> t(Shape{1, classes, labels.h, labels.w});
  for (std::int64_t y = 0; y < labels.h; ++y) {
    for (std::int64_t x = 0; x < labels.w; ++x) {
      const auto c = labels.at(y, x);
      if (c >= classes) {
        throw ValidityError("layout: class index " + std::to_string(c) + " at position (" + std::to_string(y) + ", " +
                            std::to_string(x) + ") exceeds the " + std::to_string(classes) + "-class table");
      }
      t.at(0, c, y, x) = 1.0f;
    }
  }
  return t;
}

LabelMap argmax_labels(const Tensor<float>& layout, std::int64_t sample) {
  const Shape s = layout.shape();
  LabelMap lm{s.h, s.w, std::vector<std::uint8_t>(static_cast<std::size_t>(s.h * s.w), 0)};
  for (std::int64_t y = 0; y < s.h; ++y) {
    for (std::int64_t x = 0; x < s.w; ++x) {
      std::int64_t best = 0;
      for (std::int64_t c = 1; c < s.c; ++c) {
        if (layout.at(sample, c, y, x) > layout.at(sample, best, y, x)) best = c;
      }
      lm.labels[static_cast<std::size_t>(y * s.w + x)] = static_cast<std::uint8_t>(best);
    }
  }
  return lm;
}

std::vector<char> encode_ppm(const Tensor<float>& image, std::int64_t sample) {
  const Shape s = image.shape();
  if (s.c != 3) throw ShapeError("ppm: expected a 3-channel image, got " + s.str());
  if (sample < 0 || sample >= s.n) throw ParameterError("ppm: sample index out of range");
  const std::string header = "P6\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
  std::vector<char> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<std::size_t>(3 * s.h * s.w));
  for (std::int64_t y = 0; y < s.h; ++y) {
    for (std::int64_t x = 0; x < s.w; ++x) {
      for (std::int64_t k = 0; k < 3; ++k) {
        const double v = image.at(sample, k, y, x);
        if (!std::isfinite(v)) throw ValidityError("ppm: non-finite pixel value");
        out.push_back(static_cast<char>(quantize((v + 1.0) / 2.0)));
      }
    }
  }
  return out;
}

Tensor<float> decode_ppm(const std::vector<char>& bytes, const std::string& source) {
  const PnmHeader hdr = parse_pnm_header(bytes, "P6", source);
  const auto need = static_cast<std::size_t>(3 * hdr.w * hdr.h);
  if (bytes.size() - hdr.data_offset < need) {
    throw FormatError(source + ": truncated pixel data at byte " + std::to_string(bytes.size()) + " (need " +
                      std::to_string(hdr.data_offset + need) + ")");
  }
  if (bytes.size() - hdr.data_offset > need) {
    throw FormatError(source + ": trailing bytes after pixel data at byte " + std::to_string(hdr.data_offset + need));
  }
  Tensor<float> img(Shape{1, 3, hdr.h, hdr.w});
  std::size_t p = hdr.data_offset;
  const double scale = 255.0 / static_cast<double>(hdr.maxval);
  for (std::int64_t y = 0; y < hdr.h; ++y) {
    for (std::int64_t x = 0; x < hdr.w; ++x) {
      for (std::int64_t k = 0; k < 3; ++k) {
        const auto raw = static_cast<std::uint8_t>(bytes[p++]);
        if (raw > hdr.maxval) throw FormatError(source + ": sample exceeds maxval at byte " + std::to_string(p - 1));
        const auto v = hdr.maxval == 255 ? raw : static_cast<std::uint8_t>(std::lround(raw * scale));
        img.at(0, k, y, x) = dequantize(v);
      }
    }
  }
  return img;
}

std::vector<char> encode_pgm(const LabelMap& labels) {
  const std::string header = "P5\n" + std::to_string(labels.w) + " " + std::to_string(labels.h) + "\n255\n";
  std::vector<char> out(header.begin(), header.end());
  for (auto v : labels.labels) out.push_back(static_cast<char>(v));
  return out;
}

LabelMap decode_pgm(const std::vector<char>& bytes, const std::string& source) {
  const PnmHeader hdr = parse_pnm_header(bytes, "P5", source);
  const auto need = static_cast<std::size_t>(hdr.w * hdr.h);
  if (bytes.size() - hdr.data_offset < need) {
    throw FormatError(source + ": truncated label data at byte " + std::to_string(bytes.size()) + " (need " +
                      std::to_string(hdr.data_offset + need) + ")");
  }
  if (bytes.size() - hdr.data_offset > need) {
    throw FormatError(source + ": trailing bytes after label data at byte " + std::to_string(hdr.data_offset + need));
  }
  LabelMap lm{hdr.h, hdr.w, {}};
  lm.labels.reserve(need);
  for (std::size_t i = 0; i < need; ++i) {
    const auto v = static_cast<std::uint8_t>(bytes[hdr.data_offset + i]);
    if (v > hdr.maxval) throw FormatError(source + ": label exceeds maxval at byte " + std::to_string(hdr.data_offset + i));
    lm.labels.push_back(v);
  }
  return lm;
}

void write_ppm(const std::string& path, const Tensor<float>& image, std::int64_t sample) {
  write_file_bytes(path, encode_ppm(image, sample));
}
Tensor<float> read_ppm(const std::string& path) { return decode_ppm(read_file_bytes(path), path); }
void write_pgm(const std::string& path, const LabelMap& labels) { write_file_bytes(path, encode_pgm(labels)); }
LabelMap read_pgm(const std::string& path) { return decode_pgm(read_file_bytes(path), path); }

std::string image_filename(std::int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%05lld.ppm", static_cast<long long>(index));
  return buf;
}

std::string layout_filename(std::int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seg_%05lld.pgm", static_cast<long long>(index));
  return buf;
}

void write_dataset(const std::string& dir, const SceneSpec& spec, std::int64_t count, bool force) {
  if (count < 1) throw ParameterError("count must be >= 1");
  spec.validate();
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir, ec)) throw IoError(dir + ": exists and is not a directory");
    if (!fs::is_empty(dir, ec) && !force) throw IoError(dir + ": directory is not empty (pass --force to overwrite)");
  } else if (!fs::create_directories(dir, ec)) {
    throw IoError(dir + ": cannot create directory: " + ec.message());
  }
  std::vector<std::string> errors(static_cast<std::size_t>(count));
  parallel_for(count, [&](std::int64_t i) {
    try {
      const SamplePair pair = generate_scene(spec, i);
      write_ppm((fs::path(dir) / image_filename(i)).string(), pair.image);
      write_pgm((fs::path(dir) / layout_filename(i)).string(), pair.labels);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  });
  for (const auto& e : errors) {
    if (!e.empty()) throw IoError(e);
  }
  const std::string json = spec.to_json();
  write_file_bytes((fs::path(dir) / "spec.json").string(), std::vector<char>(json.begin(), json.end()));
}

Dataset load_dataset(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError(dir + ": not a directory");
  const auto spec_path = (fs::path(dir) / "spec.json").string();
  if (!fs::exists(spec_path, ec)) throw IoError(dir + ": missing spec.json");
  const auto spec_bytes = read_file_bytes(spec_path);
  Dataset ds;
  ds.spec = SceneSpec::from_json(std::string(spec_bytes.begin(), spec_bytes.end()), spec_path);

  const std::regex img_re(R"(img_(\d{5,})\.ppm)");
  const std::regex seg_re(R"(seg_(\d{5,})\.pgm)");
  std::set<std::int64_t> imgs;
  std::set<std::int64_t> segs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    std::smatch m;
    if (std::regex_match(name, m, img_re)) imgs.insert(std::stoll(m[1]));
    if (std::regex_match(name, m, seg_re)) segs.insert(std::stoll(m[1]));
  }
  std::string unpaired;
  for (auto i : segs) {
    if (!imgs.count(i)) unpaired += (unpaired.empty() ? "" : ", ") + std::string("missing image for layout ") + std::to_string(i);
  }
  for (auto i : imgs) {
    if (!segs.count(i)) unpaired += (unpaired.empty() ? "" : ", ") + std::string("missing layout for image ") + std::to_string(i);
  }
  if (!unpaired.empty()) throw IoError(dir + ": unpaired files: " + unpaired);
  if (imgs.empty()) throw IoError(dir + ": no img_*.ppm / seg_*.pgm pairs found");

  const std::int64_t r = ds.spec.resolution;
  for (auto i : imgs) {
    const std::string ip = (fs::path(dir) / image_filename(i)).string();
    const std::string sp = (fs::path(dir) / layout_filename(i)).string();
    Tensor<float> img = read_ppm(ip);
    LabelMap lm = read_pgm(sp);
    if (img.shape().h != r || img.shape().w != r) throw FormatError(ip + ": expected " + std::to_string(r) + "x" + std::to_string(r));
    if (lm.h != r || lm.w != r) throw FormatError(sp + ": expected " + std::to_string(r) + "x" + std::to_string(r));
    Tensor<float> layout;
    try {
      layout = one_hot(lm, ds.spec.class_count());
    } catch (const ValidityError& e) {
      throw FormatError(sp + ": " + e.what());
    }
    ds.indices.push_back(i);
    ds.images.push_back(std::move(img));
    ds.layouts.push_back(std::move(layout));
    ds.labels.push_back(std::move(lm));
  }
  return ds;
}

BatchStream::BatchStream(const Dataset& data, std::int64_t batch_size, std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), seed_(seed) {
  if (batch_size < 1) throw ParameterError("batch size must be >= 1");
  per_epoch_ = data.size() / batch_size;
  if (per_epoch_ < 1) {
    throw ParameterError("dataset has " + std::to_string(data.size()) + " samples, fewer than one batch of " +
                         std::to_string(batch_size));
  }
}

std::vector<std::int64_t> BatchStream::epoch_order(std::int64_t epoch) const {
  std::vector<std::int64_t> order(static_cast<std::size_t>(data_->size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);
  std::mt19937_64 rng(derive_seed(seed_, 0xba7c, static_cast<std::uint64_t>(epoch)));
  // Explicit Fisher-Yates so the order does not depend on the library's shuffle.
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<std::int64_t> BatchStream::batch_members(std::int64_t k) const {
  const auto order = epoch_order(k / per_epoch_);
  const std::int64_t start = (k % per_epoch_) * batch_size_;
  return {order.begin() + start, order.begin() + start + batch_size_};
}

std::pair<Tensor<float>, Tensor<float>> BatchStream::batch_at(std::int64_t k) const {
  std::vector<const Tensor<float>*> ls;
  std::vector<const Tensor<float>*> is;
  for (auto i : batch_members(k)) {
    ls.push_back(&data_->layouts[static_cast<std::size_t>(i)]);
    is.push_back(&data_->images[static_cast<std::size_t>(i)]);
  }
  return {stack_batch(ls), stack_batch(is)};
}

Tensor<float> stack_batch(const std::vector<const Tensor<float>*>& parts) {
  if (parts.empty()) throw ParameterError("stack_batch: nothing to stack");
  const Shape s = parts.front()->shape();
  Tensor<float> out(Shape{static_cast<std::int64_t>(parts.size()) * s.n, s.c, s.h, s.w});
  std::int64_t off = 0;
  for (const auto* p : parts) {
    if (!(Shape{s.n, s.c, s.h, s.w} == p->shape())) throw ShapeError("stack_batch: mismatched shapes");
    std::copy(p->data(), p->data() + p->numel(), out.data() + off);
    off += p->numel();
  }
  return out;
}

}  // namespace scgen
