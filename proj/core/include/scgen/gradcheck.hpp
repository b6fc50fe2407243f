#pragma once

#include <cstdint>
#include <functional>

#include "scgen/autodiff.hpp"

namespace scgen {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::int64_t checked = 0;
};

// Builds the scalar objective on a fresh graph around the leaf `x`.
using LeafObjective = std::function<Var<double>(Graph<double>&, const Var<double>&)>;
// Builds the scalar objective on a fresh graph; parameters are bound inside.
using GraphObjective = std::function<Var<double>(Graph<double>&)>;

struct GradCheckOptions {
  double step = 1e-5;
  // Relative error above which a coordinate is re-probed at step / 100.
  double retry_threshold = 1e-6;
  // Coordinates to probe; <= 0 probes all of them. Sampled coordinates are
  // drawn deterministically from `seed`.
  std::int64_t max_coords = 0;
  std::uint64_t seed = 0;
};

// Central differences per coordinate against reverse-mode gradients. The
// relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
GradCheckResult finite_diff_check(const LeafObjective& f, const Tensor<double>& x, GradCheckOptions opts = {});

// Same check with respect to a parameter that `f` binds via Graph::param.
GradCheckResult finite_diff_check(const GraphObjective& f, Parameter<double>& p, GradCheckOptions opts = {});

}  // namespace scgen
