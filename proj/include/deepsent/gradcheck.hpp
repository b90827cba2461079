#pragma once

// Central-difference verification of every hand-written backward pass on
// small, seeded instances.

#include <cstdint>
#include <string>
#include <vector>

#include "deepsent/numkernel.hpp"

namespace deepsent {

inline constexpr double kGradcheckTolerance = 1e-4;

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double eps = 1e-6;
  /// Test hook: multiply the analytic gradients of one component by
  /// `corrupt_scale` before comparing.
  std::string corrupt_component;
  double corrupt_scale = 1.0;
};

struct GradcheckRow {
  std::string component;  // lstm, tiny_cnn, projection, fusion, output, model
  GradCheckResult result;
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;
  bool passed(double tolerance = kGradcheckTolerance) const;
  const GradcheckRow& worst() const;
};

std::vector<std::string> gradcheck_components();

GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace deepsent
