#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "saccade/tensor.hpp"

namespace saccade {

/// Compares the analytic gradient of a scalar-valued computation against
/// central finite differences, element by element, over the given leaves.
/// The forward function must rebuild the graph from the leaves' current
/// values on every call. Error metric per element:
///   |analytic - numeric| / max(1, |analytic|, |numeric|)
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::int64_t elements_checked = 0;
};

GradCheckReport check_gradients(std::vector<Tensor> leaves,
                                const std::function<Tensor()>& forward_scalar,
                                double eps = 1e-5);

/// One line of the op-by-op finite-difference suite.
struct OpCheckResult {
  std::string op;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Runs the finite-difference suite over every differentiable op and the
/// composed detector network on a small configuration. `only_op` restricts
/// the run to one op name.
std::vector<OpCheckResult> run_gradient_suite(
    std::uint64_t seed, const std::optional<std::string>& only_op = {});

}  // namespace saccade
