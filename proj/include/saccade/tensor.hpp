#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace saccade {

/// A 2D sample location in feature-map coordinates (x = column, y = row).
struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

namespace detail {
struct TensorNode;
}

/// Dense N-dimensional array of doubles with an optional gradient buffer.
///
/// A Tensor is a cheap handle (shared_ptr) to its storage. Tensors produced
/// by the ops below remember their inputs, forming the computation record
/// that backward() replays in reverse topological order. Leaf tensors
/// created with requires_grad=true accumulate gradients across backward
/// calls until zero_grad() is called.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  std::int64_t numel() const;
  bool requires_grad() const;

  std::span<const double> values() const;
  std::span<double> values();

  /// Gradient buffer; allocated (zero-filled) on first access.
  std::span<const double> grad() const;
  std::span<double> grad();
  bool grad_allocated() const;
  void zero_grad();

  /// Leaf copy of the values, cut off from the computation record.
  Tensor detach() const;

  double value_at(std::span<const int> index) const;

  std::shared_ptr<detail::TensorNode> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode> node)
      : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// Runs the chain rule from a scalar loss back to every reachable tensor
/// with requires_grad, accumulating into their grad buffers. Each recorded
/// operation is visited exactly once. `seed` is the incoming gradient of
/// the loss itself (1 for a plain backward pass).
void backward(const Tensor& loss, double seed = 1.0);

// ---------------------------------------------------------------------------
// Differentiable operations. Shape contracts are exact; mismatches throw
// std::invalid_argument with a descriptive message.
// ---------------------------------------------------------------------------

/// Cross-correlation of input [C_in,H,W] with weight [C_out,C_in,k,k] plus
/// bias [C_out]. k in {1,3}, stride in {1,2}, pad in {0,1}.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad);

Tensor relu(const Tensor& x);

/// Numerically stable logistic; outputs lie strictly inside (0,1) for
/// inputs of moderate magnitude and never produce NaN.
Tensor sigmoid(const Tensor& x);

/// Replicates each pixel of [C,H,W] into a 2x2 block -> [C,2H,2W].
Tensor upsample_nearest2x(const Tensor& x);

/// Samples [C,H,W] features at the given points -> [P,C]. Coordinates are
/// clamped to [0,W-1]x[0,H-1]; gradient flows into the features only, not
/// the point coordinates. An empty point list yields shape [0,C].
Tensor bilinear_sample(const Tensor& features, std::span<const Point2> points);

/// 3x3 neighborhood max with -inf border semantics, same output shape.
/// Inference-only: rejects inputs that require gradient.
Tensor maxpool3x3_same(const Tensor& x);

/// Elementwise sum of two same-shape tensors.
Tensor add(const Tensor& a, const Tensor& b);

/// Concatenates [C_i,H,W] maps along the channel axis.
Tensor concat_channels(std::span<const Tensor> parts);

/// Reinterprets a [P,C] sample matrix as a [C,1,P] feature map.
Tensor transpose_to_map(const Tensor& x);

/// Sum of all elements -> scalar tensor of shape [1].
Tensor sum(const Tensor& x);

/// Weighted sum of scalar tensors -> scalar tensor of shape [1].
Tensor weighted_sum(std::span<const Tensor> terms,
                    std::span<const double> weights);

// ---------------------------------------------------------------------------
// Custom-op escape hatch used by the loss module to register fused nodes
// with analytic backward functions.
// ---------------------------------------------------------------------------

/// View of a node during the backward pass, handed to custom backward fns.
class OpContext {
 public:
  OpContext(detail::TensorNode* self) : self_(self) {}
  std::span<const double> out_values() const;
  std::span<const double> out_grad() const;
  int num_parents() const;
  bool parent_requires_grad(int i) const;
  std::span<const double> parent_values(int i) const;
  /// Gradient accumulation buffer of parent i (allocated on demand).
  std::span<double> parent_grad(int i);

 private:
  detail::TensorNode* self_;
};

using BackwardFn = std::function<void(OpContext&)>;

/// Records an operation node: output values plus a backward function that
/// scatters out_grad into the parents. The output requires grad iff any
/// parent does; otherwise the backward function is dropped.
Tensor make_op(std::vector<int> shape, std::vector<double> values,
               std::vector<Tensor> parents, BackwardFn backward_fn);

std::int64_t shape_numel(std::span<const int> shape);
std::string shape_to_string(std::span<const int> shape);

}  // namespace saccade
