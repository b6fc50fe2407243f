#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scgen {

struct GradSuiteEntry {
  std::string op;
  int instances = 0;
  std::int64_t coordinates = 0;
  double max_rel_error = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

struct GradSuiteOptions {
  std::uint64_t seed = 1;
  int instances = 20;
  double tolerance = 1e-4;
  std::int64_t coords_per_instance = 16;
  std::string only;  // run only ops whose name contains this substring
};

// Finite-difference checks of every differentiable operation at 64-bit.
std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& opts);

std::vector<std::string> gradient_suite_ops();

}  // namespace scgen
