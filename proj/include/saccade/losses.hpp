#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "saccade/encoder.hpp"
#include "saccade/network.hpp"
#include "saccade/tensor.hpp"

namespace saccade {

struct FocalParams {
  double alpha = 2.0;
  double beta = 4.0;
  double epsilon = 1e-7;  // clamp for log
};

struct LossWeights {
  double center = 1.0;
  double corner = 1.0;
  double aggregation = 0.1;
  double wh = 0.1;
  double center_offset = 1.0;
};

/// Heatmap focal loss. Cells where gt == 1 contribute -(1-p)^a log p,
/// all others -(1-y)^b p^a log(1-p); the sum is normalized by the number
/// of positive cells (at least 1). Predictions are clamped to
/// [epsilon, 1-epsilon] before the logs.
Tensor focal_loss(const Tensor& pred, const Tensor& gt,
                  const FocalParams& params);

/// Sum of |pred - target| over every channel of the masked spatial cells,
/// normalized by the masked-cell count (at least 1). `mask` has one entry
/// per spatial cell of pred's trailing dims.
Tensor masked_l1(const Tensor& pred, const Tensor& target,
                 std::span<const std::uint8_t> mask);

struct LossBreakdown {
  Tensor total;  // scalar node for backward
  double total_value = 0.0;
  double center_focal = 0.0;
  double corner_focal = 0.0;
  double wh_l1 = 0.0;
  double offset_l1 = 0.0;
  double refine_l1 = 0.0;
};

/// Weighted combination of all loss terms. Absent branches (no corner
/// heatmap, no refinement supervision) contribute zero. The refinement
/// term is the mean over iterations of the residual L1 losses.
LossBreakdown total_loss(const NetworkOutputs& outputs,
                         std::span<const RefineSupervision> refine,
                         const GroundTruthTarget& target,
                         const LossWeights& weights,
                         const FocalParams& focal);

}  // namespace saccade
