#include "scgen/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace scgen {

namespace {

std::vector<std::int64_t> probe_indices(std::int64_t numel, const GradCheckOptions& opts) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(numel));
  std::iota(idx.begin(), idx.end(), 0);
  if (opts.max_coords > 0 && opts.max_coords < numel) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(opts.max_coords));
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

double finite_value(const Var<double>& v) {
  const double y = v.value().item();
  if (!std::isfinite(y)) {
    std::ostringstream os;
    os << "finite_diff_check: objective evaluated to " << y;
    throw ValidityError(os.str());
  }
  return y;
}

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

// Central difference at `step`; when it disagrees with `analytic`, probe
// again with a much smaller step. A kink of a piecewise-linear activation
// straddled by the first probe is unlikely to survive the second one, while
// a genuinely wrong gradient disagrees at every step size.
template <class Eval>
double numeric_derivative(Eval&& at, double step, double analytic, double retry_threshold) {
  double numeric = (at(step) - at(-step)) / (2.0 * step);
  if (rel_error(analytic, numeric) > retry_threshold && step > 1e-9) {
    const double fine = step * 1e-2;
    const double second = (at(fine) - at(-fine)) / (2.0 * fine);
    if (rel_error(analytic, second) < rel_error(analytic, numeric)) numeric = second;
  }
  return numeric;
}

void compare(GradCheckResult& r, std::int64_t index, double analytic, double numeric) {
  const double err = rel_error(analytic, numeric);
  ++r.checked;
  if (err > r.max_rel_error || r.worst_index < 0) {
    r.max_rel_error = err;
    r.worst_index = index;
    r.analytic = analytic;
    r.numeric = numeric;
  }
}

}  // namespace

GradCheckResult finite_diff_check(const LeafObjective& f, const Tensor<double>& x, GradCheckOptions opts) {
  Tensor<double> analytic;
  {
    Graph<double> g;
    Var<double> leaf = g.variable(x);
    Var<double> y = f(g, leaf);
    finite_value(y);
    g.backward(y);
    analytic = leaf.grad();
  }
  auto eval = [&](const Tensor<double>& at) {
    Graph<double> g;
    return finite_value(f(g, g.constant(at)));
  };
  GradCheckResult r;
  Tensor<double> probe = x;
  for (const auto i : probe_indices(x.numel(), opts)) {
    const double orig = probe[i];
    auto at = [&](double d) {
      probe[i] = orig + d;
      const double y = eval(probe);
      probe[i] = orig;
      return y;
    };
    compare(r, i, analytic[i], numeric_derivative(at, opts.step, analytic[i], opts.retry_threshold));
  }
  return r;
}

GradCheckResult finite_diff_check(const GraphObjective& f, Parameter<double>& p, GradCheckOptions opts) {
  const Tensor<double> saved_grad = p.grad;
  p.zero_grad();
  {
    Graph<double> g;
    Var<double> y = f(g);
    finite_value(y);
    g.backward(y);
  }
  const Tensor<double> analytic = p.grad;
  p.grad = saved_grad;
  auto eval = [&] {
    Graph<double> g;
    return finite_value(f(g));
  };
  GradCheckResult r;
  for (const auto i : probe_indices(p.value.numel(), opts)) {
    const double orig = p.value[i];
    auto at = [&](double d) {
      p.value[i] = orig + d;
      const double y = eval();
      p.value[i] = orig;
      return y;
    };
    compare(r, i, analytic[i], numeric_derivative(at, opts.step, analytic[i], opts.retry_threshold));
  }
  return r;
}

}  // namespace scgen
