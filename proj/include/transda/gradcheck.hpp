#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

// Finite-difference verification of every differentiable op. The suite is
// compiled in double precision regardless of the width of its caller.
namespace transda::gradcheck {

struct Options {
  // Check names to run; empty runs all of them.
  std::vector<std::string> only;
  std::uint64_t seed = 0;
  double step = 1e-3;
  double threshold = 1e-4;
  // Scales the backward rule of this op kind (by its op name) for the whole
  // run. Used to prove the suite catches broken gradients.
  std::optional<std::string> fault_op;
  double fault_factor = 1.5;
};

struct CheckResult {
  std::string name;
  std::size_t cases = 0;
  // Worst ||analytic - numeric||_inf / max(||numeric||_inf, 1e-10).
  double max_rel_error = 0;
  // Coordinates left out because a kink lay within one step.
  std::size_t skipped_coordinates = 0;
  bool passed = true;
};

struct Report {
  std::vector<CheckResult> checks;
  std::size_t total_cases = 0;
  bool passed = true;
};

std::vector<std::string> check_names();
// Throws std::invalid_argument on unknown check or op names.
Report run(const Options& options);

}  // namespace transda::gradcheck
