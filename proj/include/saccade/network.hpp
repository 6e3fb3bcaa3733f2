#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saccade/config.hpp"
#include "saccade/encoder.hpp"
#include "saccade/tensor.hpp"

namespace saccade {

enum class Mode { kTrain, kInfer };

/// All learnable weights, addressed by dotted path. Iteration order is the
/// sorted name order, so checkpoints and optimizer walks are deterministic.
class ModelParams {
 public:
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  void insert(const std::string& name, Tensor t);
  std::vector<std::string> names() const;
  std::int64_t total_parameters() const;
  void zero_grads();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

 private:
  std::map<std::string, Tensor> params_;
};

/// Fresh parameter set for the given architecture (He-uniform conv weights,
/// zero biases, heatmap output biases pulled down so initial scores are low).
ModelParams init_params(const NetworkConfig& config, std::uint64_t seed);

struct NetworkOutputs {
  Tensor center_heatmap;   // [num_classes, h_f, w_f], values in (0,1)
  Tensor wh_map;           // [2, h_f, w_f]
  Tensor offset_map;       // [2, h_f, w_f]
  Tensor backbone_features;  // [C_b, h_f, w_f]
  std::optional<Tensor> corner_heatmap;  // [4, h_f, w_f]; train mode only
};

/// The shared two-layer head: 3x3 conv (pad 1) + ReLU, then 1x1 conv with
/// no activation. Spatial dims are preserved.
Tensor head_forward(const Tensor& features, const Tensor& conv1_weight,
                    const Tensor& conv1_bias, const Tensor& conv2_weight,
                    const Tensor& conv2_bias);
Tensor head_forward(const Tensor& features, const ModelParams& params,
                    const std::string& prefix);

/// Learnable-parameter count of one head as a function of its widths.
std::int64_t head_parameter_count(int c_in, int hidden, int c_out);

/// Full forward pass. In infer mode the corner branch is skipped.
NetworkOutputs forward(const Tensor& image, const ModelParams& params,
                       const NetworkConfig& config, Mode mode);

/// The four sampling keypoints for a box of size (width, height) centered
/// at `center`, per the configured keypoint mode. Corner order is
/// top-left, top-right, bottom-left, bottom-right (mid-edge order is
/// left, right, top, bottom).
std::array<Point2, 4> compute_keypoints(Point2 center, double width,
                                        double height, KeypointMode mode,
                                        double t);

/// One aggregation pass: residual tensor plus the (w,h) each object had
/// when its sampling keypoints were placed.
struct RefineStep {
  Tensor residuals;  // [2, 1, P]
  std::vector<std::array<double, 2>> start_wh;
};

struct RefineResult {
  std::vector<RefineStep> steps;                  // one per iteration
  std::vector<std::array<double, 2>> refined_wh;  // final per object
};

/// Samples backbone features at each object's center + 4 keypoints,
/// concatenates them per object and runs the refinement head, iterating
/// `iterations` times; each iteration recomputes keypoints from the
/// previous iteration's refined (w,h). Gradient flows into the features
/// and the head parameters, not into the keypoint coordinates.
RefineResult aggregate_refine(const Tensor& backbone_features,
                              std::span<const Point2> centers,
                              std::span<const std::array<double, 2>> coarse_wh,
                              const ModelParams& params,
                              const NetworkConfig& config, int iterations);

/// Residual prediction paired with its regression target
/// (gt_wh - detached wh at the start of the iteration), both [2,1,P].
struct RefineSupervision {
  Tensor residual;
  Tensor target;
};

/// Training-time refinement: keypoints are placed from ground-truth centers
/// and the detached coarse (w,h) read off wh_map at the ground-truth cells.
std::vector<RefineSupervision> refine_for_training(
    const NetworkOutputs& outputs, const GroundTruthTarget& target,
    const ModelParams& params, const NetworkConfig& config);

}  // namespace saccade
