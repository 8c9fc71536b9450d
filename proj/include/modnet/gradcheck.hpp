#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "modnet/rng.hpp"
#include "modnet/tape.hpp"

namespace modnet {

struct GradCheckLine {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  int trials = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckLine> lines;
  bool all_pass() const {
    for (const auto& l : lines)
      if (!l.pass) return false;
    return !lines.empty();
  }
};

/// Central finite-difference check. `run(true)` must rebuild the computation,
/// accumulate analytic gradients into the given parameters and return the
/// loss; `run(false)` only returns the loss. Compares analytic gradients
/// against (f(x+h) - f(x-h)) / 2h on up to coords_per_tensor sampled
/// coordinates per parameter, reporting max |analytic - numeric| / max(1, |numeric|).
double finite_diff_max_rel_err(const std::vector<ad::Parameter*>& params,
                               const std::function<double(bool)>& run, int coords_per_tensor,
                               double h, Rng& rng);

/// Per-op finite-difference suites (random shapes and values) plus the
/// end-to-end check of the full network and loss. Tolerances are 1e-5 for
/// batch normalization, 1e-6 for all other ops, and 1e-4 end to end.
GradCheckReport run_gradcheck(std::uint64_t seed, int trials_per_op = 200, int e2e_batches = 5);

}  // namespace modnet
