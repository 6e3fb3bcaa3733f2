#pragma once

#include <vector>

namespace saccade {

/// Which keypoints the corner supervision and the aggregation head use.
/// kCorners is the plain 4-corner layout; kDiagonal places points on the
/// box diagonals at fraction t from the center; kMidEdge does the same
/// toward the four edge midpoints.
enum class KeypointMode { kCorners, kDiagonal, kMidEdge };

struct NetworkConfig {
  int num_classes = 3;
  int input_height = 64;
  int input_width = 64;
  int output_stride = 4;
  int head_hidden_channels = 32;
  // Channel widths of the three stride-2 down blocks; the fused stride-4
  // output has backbone_channels[1] channels.
  std::vector<int> backbone_channels = {16, 32, 64};
  int refine_iterations = 1;
  KeypointMode keypoint_mode = KeypointMode::kCorners;
  double keypoint_t = 1.0;
  // Ablation switches (drop the training-only corner branch / the
  // aggregation refinement head).
  bool use_corner_head = true;
  bool use_aggregation = true;

  int feature_height() const { return input_height / output_stride; }
  int feature_width() const { return input_width / output_stride; }
  int backbone_out_channels() const { return backbone_channels[1]; }

  /// Throws std::invalid_argument on any inconsistent field.
  void validate() const;
};

}  // namespace saccade
