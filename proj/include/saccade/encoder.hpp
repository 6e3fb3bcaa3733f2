#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "saccade/box.hpp"
#include "saccade/config.hpp"
#include "saccade/tensor.hpp"

namespace saccade {

/// One ground-truth object after projection onto the feature map.
struct EncodedObject {
  int class_id = 0;
  int cell_x = 0;
  int cell_y = 0;
  double center_x = 0.0;  // exact center, feature-map units
  double center_y = 0.0;
  double width = 0.0;     // feature-map units
  double height = 0.0;
};

/// Supervision maps for one image. Heatmaps hold exactly 1.0 at keypoint
/// cells; wh/offset targets are nonzero only where keypoint_mask is set.
struct GroundTruthTarget {
  Tensor center_heatmap;  // [num_classes, h_f, w_f]
  Tensor corner_heatmap;  // [4, h_f, w_f]
  Tensor wh_target;       // [2, h_f, w_f]
  Tensor offset_target;   // [2, h_f, w_f]
  std::vector<std::uint8_t> keypoint_mask;  // h_f * w_f
  std::vector<EncodedObject> objects;
  int skipped_boxes = 0;       // boxes fully outside the image
  int center_collisions = 0;   // objects sharing a center cell
};

/// Largest keypoint displacement (in the same units as width/height) such
/// that shifting any single box corner by up to that amount in each axis
/// keeps IoU with the original box at least min_iou. Minimum over the
/// inward/outward/mixed displacement cases, clamped to >= 0.
double gaussian_radius(double width, double height, double min_iou);

/// Splats exp(-d^2 / (2 sigma^2)) around (center_x, center_y) into a
/// h x w channel, combining with existing content by elementwise max.
/// Contributions beyond ceil(3 sigma) cells are dropped.
void render_gaussian(std::span<double> channel, int h, int w, int center_x,
                     int center_y, double sigma);

/// Builds all supervision maps for one image. Corner keypoint positions
/// follow config.keypoint_mode. Boxes fully outside the image are skipped
/// and counted.
GroundTruthTarget encode_targets(std::span<const GtBox> boxes,
                                 const NetworkConfig& config);

/// IoU floor used for the Gaussian radius, following the lineage default.
inline constexpr double kRadiusIou = 0.3;

}  // namespace saccade
