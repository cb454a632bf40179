#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace suparc {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t cases = 0;
  bool passed = false;
};

/// max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
double max_rel_error(std::span<const double> analytic, std::span<const double> numeric);

/// Central-difference oracle over every differentiable op and every loss,
/// `trials` seeded random cases each, drawn inside the ops' guarded domains.
/// Backs the gradcheck CLI subcommand and the acceptance suite.
std::vector<GradCheckResult> run_gradient_checks(std::size_t trials, std::uint64_t seed,
                                                 double tolerance = 1e-4);

}  // namespace suparc
