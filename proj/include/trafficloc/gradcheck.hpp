#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace trafficloc::gradcheck {

struct LossCheck {
  std::string name;
  int trials = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

inline const std::vector<std::string>& loss_names() {
  static const std::vector<std::string> names = {"gal", "det", "icl", "dta", "fine"};
  return names;
}

// Central finite-difference check of one loss's analytic gradients at
// randomized points. ICL runs against the frozen-weight loss (detached
// convention). inject_bug flips the analytic gradient sign, for harness
// self-tests.
LossCheck check_loss(const std::string& name, int trials, double tolerance, std::uint64_t seed,
                     bool inject_bug = false);

std::vector<LossCheck> check_all(int trials, double tolerance, std::uint64_t seed,
                                 bool inject_bug = false);

}  // namespace trafficloc::gradcheck
