#include "saccade/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace saccade {

namespace detail {

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accessed
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  BackwardFn backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

using detail::TensorNode;

std::int64_t shape_numel(std::span<const int> shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_to_string(std::span<const int> shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(std::span<const int> shape) {
  for (int d : shape) {
    if (d < 0)
      throw std::invalid_argument("tensor shape has negative dimension " +
                                  shape_to_string(shape));
  }
}

std::shared_ptr<TensorNode> new_leaf(std::vector<int> shape,
                                     std::vector<double> values,
                                     bool requires_grad) {
  check_shape(shape);
  if (static_cast<std::int64_t>(values.size()) != shape_numel(shape))
    throw std::invalid_argument("tensor value count " +
                                std::to_string(values.size()) +
                                " does not match shape " +
                                shape_to_string(shape));
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

const TensorNode& deref(const Tensor& t, const char* what) {
  if (!t.defined())
    throw std::invalid_argument(std::string(what) + ": tensor is undefined");
  return *t.node();
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(n, 0.0),
                         requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(n, value),
                         requires_grad));
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values,
                           bool requires_grad) {
  return Tensor(new_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

const std::vector<int>& Tensor::shape() const {
  return deref(*this, "shape").shape;
}

std::int64_t Tensor::numel() const {
  return static_cast<std::int64_t>(deref(*this, "numel").values.size());
}

bool Tensor::requires_grad() const {
  return deref(*this, "requires_grad").requires_grad;
}

std::span<const double> Tensor::values() const {
  return deref(*this, "values").values;
}

std::span<double> Tensor::values() {
  deref(*this, "values");
  return node_->values;
}

std::span<const double> Tensor::grad() const {
  deref(*this, "grad");
  node_->ensure_grad();
  return node_->grad;
}

std::span<double> Tensor::grad() {
  deref(*this, "grad");
  node_->ensure_grad();
  return node_->grad;
}

bool Tensor::grad_allocated() const {
  return defined() && !node_->grad.empty();
}

void Tensor::zero_grad() {
  deref(*this, "zero_grad");
  node_->ensure_grad();
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  const auto& n = deref(*this, "detach");
  return Tensor(new_leaf(n.shape, n.values, false));
}

double Tensor::value_at(std::span<const int> index) const {
  const auto& n = deref(*this, "value_at");
  if (index.size() != n.shape.size())
    throw std::invalid_argument("value_at: index rank mismatch");
  std::int64_t flat = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= n.shape[i])
      throw std::invalid_argument("value_at: index out of range");
    flat = flat * n.shape[i] + index[i];
  }
  return n.values[flat];
}

// --------------------------------------------------------------------------
// OpContext
// --------------------------------------------------------------------------

std::span<const double> OpContext::out_values() const { return self_->values; }

std::span<const double> OpContext::out_grad() const { return self_->grad; }

int OpContext::num_parents() const {
  return static_cast<int>(self_->parents.size());
}

bool OpContext::parent_requires_grad(int i) const {
  return self_->parents[i]->requires_grad;
}

std::span<const double> OpContext::parent_values(int i) const {
  return self_->parents[i]->values;
}

std::span<double> OpContext::parent_grad(int i) {
  self_->parents[i]->ensure_grad();
  return self_->parents[i]->grad;
}

Tensor make_op(std::vector<int> shape, std::vector<double> values,
               std::vector<Tensor> parents, BackwardFn backward_fn) {
  auto node_ptr = new_leaf(std::move(shape), std::move(values), false);
  bool needs = false;
  for (const auto& p : parents) {
    deref(p, "make_op parent");
    needs = needs || p.node()->requires_grad;
  }
  if (needs) {
    node_ptr->requires_grad = true;
    node_ptr->parents.reserve(parents.size());
    for (auto& p : parents) node_ptr->parents.push_back(p.node());
    node_ptr->backward_fn = std::move(backward_fn);
  }
  return Tensor(node_ptr);
}

// --------------------------------------------------------------------------
// backward
// --------------------------------------------------------------------------

void backward(const Tensor& loss, double seed) {
  const auto& n = deref(loss, "backward");
  if (n.values.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_to_string(n.shape));
  if (!n.requires_grad) return;  // nothing reachable requires grad

  // Reverse topological order over the recorded operations, each visited
  // exactly once (iterative DFS; graphs can be deep for big images).
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second)
        stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (!node->backward_fn) continue;
    node->ensure_grad();
    OpContext ctx(node);
    node->backward_fn(ctx);
  }
}

// --------------------------------------------------------------------------
// GEMM kernels for the conv path. A is MxK, B is KxN, C is MxN, all
// row-major and dense; every kernel accumulates into C.
// --------------------------------------------------------------------------

namespace {

void gemm_nn(int m, int n, int k, const double* a, const double* b,
             double* c) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    const double* ai = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[MxN] += A[MxK] * B^T where B is NxK.
void gemm_nt(int m, int n, int k, const double* a, const double* b,
             double* c) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// C[MxN] += A^T * B where A is KxM, B is KxN.
void gemm_tn(int m, int n, int k, const double* a, const double* b,
             double* c) {
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<std::size_t>(p) * m;
    const double* bp = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

struct ConvDims {
  int c_in, h, w;
  int c_out, k;
  int stride, pad;
  int h_out, w_out;
};

ConvDims conv_dims(const TensorNode& input, const TensorNode& weight,
                   const TensorNode& bias, int stride, int pad) {
  if (input.shape.size() != 3)
    throw std::invalid_argument("conv2d: input must be [C,H,W], got " +
                                shape_to_string(input.shape));
  if (weight.shape.size() != 4)
    throw std::invalid_argument("conv2d: weight must be [Cout,Cin,k,k], got " +
                                shape_to_string(weight.shape));
  ConvDims d;
  d.c_in = input.shape[0];
  d.h = input.shape[1];
  d.w = input.shape[2];
  d.c_out = weight.shape[0];
  d.k = weight.shape[2];
  d.stride = stride;
  d.pad = pad;
  if (weight.shape[3] != d.k)
    throw std::invalid_argument("conv2d: kernel must be square, got " +
                                shape_to_string(weight.shape));
  if (weight.shape[1] != d.c_in)
    throw std::invalid_argument(
        "conv2d: weight expects " + std::to_string(weight.shape[1]) +
        " input channels but input has " + std::to_string(d.c_in));
  if (d.k != 1 && d.k != 3)
    throw std::invalid_argument("conv2d: kernel size must be 1 or 3, got " +
                                std::to_string(d.k));
  if (stride != 1 && stride != 2)
    throw std::invalid_argument("conv2d: stride must be 1 or 2, got " +
                                std::to_string(stride));
  if (pad != 0 && pad != 1)
    throw std::invalid_argument("conv2d: pad must be 0 or 1, got " +
                                std::to_string(pad));
  if (bias.shape.size() != 1 || bias.shape[0] != d.c_out)
    throw std::invalid_argument("conv2d: bias must be [Cout]");
  d.h_out = (d.h + 2 * pad - d.k) / stride + 1;
  d.w_out = (d.w + 2 * pad - d.k) / stride + 1;
  if (d.h + 2 * pad - d.k < 0 || d.h_out < 1 || d.w_out < 1)
    throw std::invalid_argument("conv2d: output would be empty for input " +
                                shape_to_string(input.shape));
  return d;
}

// Lowers [C,H,W] into the [C*k*k, Ho*Wo] patch matrix.
void im2col(const double* in, const ConvDims& d, double* cols) {
  const int patch = d.c_in * d.k * d.k;
  const int n = d.h_out * d.w_out;
  for (int c = 0; c < d.c_in; ++c) {
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        const int row = (c * d.k + ky) * d.k + kx;
        double* dst = cols + static_cast<std::size_t>(row) * n;
        for (int oy = 0; oy < d.h_out; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.h) {
            std::fill(dst, dst + d.w_out, 0.0);
            dst += d.w_out;
            continue;
          }
          const double* src = in + (static_cast<std::size_t>(c) * d.h + iy) * d.w;
          for (int ox = 0; ox < d.w_out; ++ox) {
            const int ix = ox * d.stride - d.pad + kx;
            *dst++ = (ix >= 0 && ix < d.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
  (void)patch;
}

// Scatters the [C*k*k, Ho*Wo] gradient matrix back onto the input layout.
void col2im_add(const double* cols, const ConvDims& d, double* din) {
  const int n = d.h_out * d.w_out;
  for (int c = 0; c < d.c_in; ++c) {
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        const int row = (c * d.k + ky) * d.k + kx;
        const double* src = cols + static_cast<std::size_t>(row) * n;
        for (int oy = 0; oy < d.h_out; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.h) {
            src += d.w_out;
            continue;
          }
          double* dst = din + (static_cast<std::size_t>(c) * d.h + iy) * d.w;
          for (int ox = 0; ox < d.w_out; ++ox) {
            const int ix = ox * d.stride - d.pad + kx;
            if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
            ++src;
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad) {
  const auto& in = deref(input, "conv2d input");
  const auto& wt = deref(weight, "conv2d weight");
  const auto& bs = deref(bias, "conv2d bias");
  const ConvDims d = conv_dims(in, wt, bs, stride, pad);

  const int patch = d.c_in * d.k * d.k;
  const int n = d.h_out * d.w_out;

  // 1x1 stride-1 convolutions read the input matrix directly.
  const bool direct = (d.k == 1 && d.stride == 1 && d.pad == 0);
  auto cols = std::make_shared<std::vector<double>>();
  const double* colp = in.values.data();
  if (!direct) {
    cols->resize(static_cast<std::size_t>(patch) * n);
    im2col(in.values.data(), d, cols->data());
    colp = cols->data();
  }

  std::vector<double> out(static_cast<std::size_t>(d.c_out) * n);
  for (int co = 0; co < d.c_out; ++co)
    std::fill_n(out.begin() + static_cast<std::size_t>(co) * n, n,
                bs.values[co]);
  gemm_nn(d.c_out, n, patch, wt.values.data(), colp, out.data());

  return make_op(
      {d.c_out, d.h_out, d.w_out}, std::move(out), {input, weight, bias},
      [d, patch, n, cols, direct](OpContext& ctx) {
        const double* gout = ctx.out_grad().data();
        if (ctx.parent_requires_grad(2)) {
          double* gb = ctx.parent_grad(2).data();
          for (int co = 0; co < d.c_out; ++co) {
            double acc = 0.0;
            const double* g = gout + static_cast<std::size_t>(co) * n;
            for (int j = 0; j < n; ++j) acc += g[j];
            gb[co] += acc;
          }
        }
        const double* colp =
            direct ? ctx.parent_values(0).data() : cols->data();
        if (ctx.parent_requires_grad(1)) {
          // dW[Cout, patch] += dOut[Cout, n] * cols^T
          gemm_nt(d.c_out, patch, n, gout, colp, ctx.parent_grad(1).data());
        }
        if (ctx.parent_requires_grad(0)) {
          if (direct) {
            // dIn[patch, n] += W^T * dOut
            gemm_tn(patch, n, d.c_out, ctx.parent_values(1).data(), gout,
                    ctx.parent_grad(0).data());
          } else {
            std::vector<double> dcols(static_cast<std::size_t>(patch) * n,
                                      0.0);
            gemm_tn(patch, n, d.c_out, ctx.parent_values(1).data(), gout,
                    dcols.data());
            col2im_add(dcols.data(), d, ctx.parent_grad(0).data());
          }
        }
      });
}

Tensor relu(const Tensor& x) {
  const auto& in = deref(x, "relu");
  std::vector<double> out(in.values.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = in.values[i] > 0.0 ? in.values[i] : 0.0;
  return make_op(in.shape, std::move(out), {x}, [](OpContext& ctx) {
    auto gout = ctx.out_grad();
    auto xin = ctx.parent_values(0);
    auto gin = ctx.parent_grad(0);
    for (std::size_t i = 0; i < gout.size(); ++i)
      if (xin[i] > 0.0) gin[i] += gout[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  const auto& in = deref(x, "sigmoid");
  std::vector<double> out(in.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = in.values[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  return make_op(in.shape, std::move(out), {x}, [](OpContext& ctx) {
    auto gout = ctx.out_grad();
    auto s = ctx.out_values();
    auto gin = ctx.parent_grad(0);
    for (std::size_t i = 0; i < gout.size(); ++i)
      gin[i] += gout[i] * s[i] * (1.0 - s[i]);
  });
}

Tensor upsample_nearest2x(const Tensor& x) {
  const auto& in = deref(x, "upsample_nearest2x");
  if (in.shape.size() != 3)
    throw std::invalid_argument("upsample_nearest2x: input must be [C,H,W]");
  const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
  std::vector<double> out(static_cast<std::size_t>(c) * 4 * h * w);
  for (int ch = 0; ch < c; ++ch) {
    const double* src = in.values.data() + static_cast<std::size_t>(ch) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(ch) * 4 * h * w;
    for (int y = 0; y < 2 * h; ++y) {
      const double* row = src + static_cast<std::size_t>(y / 2) * w;
      for (int xx = 0; xx < 2 * w; ++xx) *dst++ = row[xx / 2];
    }
  }
  return make_op({c, 2 * h, 2 * w}, std::move(out), {x},
                 [c, h, w](OpContext& ctx) {
                   auto gout = ctx.out_grad();
                   auto gin = ctx.parent_grad(0);
                   const int wo = 2 * w;
                   for (int ch = 0; ch < c; ++ch)
                     for (int y = 0; y < 2 * h; ++y)
                       for (int xx = 0; xx < wo; ++xx)
                         gin[(static_cast<std::size_t>(ch) * h + y / 2) * w +
                             xx / 2] +=
                             gout[(static_cast<std::size_t>(ch) * 2 * h + y) *
                                      wo +
                                  xx];
                 });
}

Tensor bilinear_sample(const Tensor& features, std::span<const Point2> points) {
  const auto& in = deref(features, "bilinear_sample");
  if (in.shape.size() != 3)
    throw std::invalid_argument("bilinear_sample: features must be [C,H,W]");
  const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
  const int p = static_cast<int>(points.size());

  struct Corner {
    int x0, y0, x1, y1;
    double fx, fy;
  };
  auto corners = std::make_shared<std::vector<Corner>>();
  corners->reserve(points.size());
  for (const auto& pt : points) {
    const double x = std::clamp(pt.x, 0.0, static_cast<double>(w - 1));
    const double y = std::clamp(pt.y, 0.0, static_cast<double>(h - 1));
    Corner cr;
    cr.x0 = std::min(static_cast<int>(std::floor(x)), std::max(w - 2, 0));
    cr.y0 = std::min(static_cast<int>(std::floor(y)), std::max(h - 2, 0));
    cr.x1 = std::min(cr.x0 + 1, w - 1);
    cr.y1 = std::min(cr.y0 + 1, h - 1);
    cr.fx = x - cr.x0;
    cr.fy = y - cr.y0;
    corners->push_back(cr);
  }

  std::vector<double> out(static_cast<std::size_t>(p) * c);
  const double* f = in.values.data();
  for (int i = 0; i < p; ++i) {
    const Corner& cr = (*corners)[i];
    for (int ch = 0; ch < c; ++ch) {
      const double* plane = f + static_cast<std::size_t>(ch) * h * w;
      const double v00 = plane[cr.y0 * w + cr.x0];
      const double v01 = plane[cr.y0 * w + cr.x1];
      const double v10 = plane[cr.y1 * w + cr.x0];
      const double v11 = plane[cr.y1 * w + cr.x1];
      out[static_cast<std::size_t>(i) * c + ch] =
          (1 - cr.fy) * ((1 - cr.fx) * v00 + cr.fx * v01) +
          cr.fy * ((1 - cr.fx) * v10 + cr.fx * v11);
    }
  }

  return make_op({p, c}, std::move(out), {features},
                 [c, h, w, p, corners](OpContext& ctx) {
                   auto gout = ctx.out_grad();
                   auto gin = ctx.parent_grad(0);
                   for (int i = 0; i < p; ++i) {
                     const Corner& cr = (*corners)[i];
                     for (int ch = 0; ch < c; ++ch) {
                       const double g =
                           gout[static_cast<std::size_t>(i) * c + ch];
                       double* plane =
                           gin.data() + static_cast<std::size_t>(ch) * h * w;
                       plane[cr.y0 * w + cr.x0] += g * (1 - cr.fy) * (1 - cr.fx);
                       plane[cr.y0 * w + cr.x1] += g * (1 - cr.fy) * cr.fx;
                       plane[cr.y1 * w + cr.x0] += g * cr.fy * (1 - cr.fx);
                       plane[cr.y1 * w + cr.x1] += g * cr.fy * cr.fx;
                     }
                   }
                 });
}

Tensor maxpool3x3_same(const Tensor& x) {
  const auto& in = deref(x, "maxpool3x3_same");
  if (in.shape.size() != 3)
    throw std::invalid_argument("maxpool3x3_same: input must be [C,H,W]");
  if (in.requires_grad)
    throw std::invalid_argument(
        "maxpool3x3_same is inference-only; detach the input first");
  const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
  std::vector<double> out(in.values.size());
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = in.values.data() + static_cast<std::size_t>(ch) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(ch) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        double best = -std::numeric_limits<double>::infinity();
        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= h) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int xc = xx + dx;
            if (xc < 0 || xc >= w) continue;
            best = std::max(best, plane[yy * w + xc]);
          }
        }
        dst[y * w + xx] = best;
      }
    }
  }
  return Tensor::from_values(in.shape, std::move(out), false);
}

Tensor add(const Tensor& a, const Tensor& b) {
  const auto& an = deref(a, "add");
  const auto& bn = deref(b, "add");
  if (an.shape != bn.shape)
    throw std::invalid_argument("add: shape mismatch " +
                                shape_to_string(an.shape) + " vs " +
                                shape_to_string(bn.shape));
  std::vector<double> out(an.values.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = an.values[i] + bn.values[i];
  return make_op(an.shape, std::move(out), {a, b}, [](OpContext& ctx) {
    auto gout = ctx.out_grad();
    for (int p = 0; p < 2; ++p) {
      if (!ctx.parent_requires_grad(p)) continue;
      auto g = ctx.parent_grad(p);
      for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i];
    }
  });
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty())
    throw std::invalid_argument("concat_channels: no inputs");
  const auto& first = deref(parts[0], "concat_channels");
  if (first.shape.size() != 3)
    throw std::invalid_argument("concat_channels: inputs must be [C,H,W]");
  const int h = first.shape[1], w = first.shape[2];
  int total_c = 0;
  std::vector<Tensor> parents;
  std::vector<int> channels;
  for (const auto& t : parts) {
    const auto& n = deref(t, "concat_channels");
    if (n.shape.size() != 3 || n.shape[1] != h || n.shape[2] != w)
      throw std::invalid_argument(
          "concat_channels: spatial dims differ: " + shape_to_string(n.shape) +
          " vs " + shape_to_string(first.shape));
    channels.push_back(n.shape[0]);
    total_c += n.shape[0];
    parents.push_back(t);
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(total_c) * h * w);
  for (const auto& t : parts) {
    auto v = t.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return make_op({total_c, h, w}, std::move(out), std::move(parents),
                 [channels, h, w](OpContext& ctx) {
                   auto gout = ctx.out_grad();
                   std::size_t off = 0;
                   for (std::size_t p = 0; p < channels.size(); ++p) {
                     const std::size_t len =
                         static_cast<std::size_t>(channels[p]) * h * w;
                     if (ctx.parent_requires_grad(static_cast<int>(p))) {
                       auto g = ctx.parent_grad(static_cast<int>(p));
                       for (std::size_t i = 0; i < len; ++i)
                         g[i] += gout[off + i];
                     }
                     off += len;
                   }
                 });
}

Tensor transpose_to_map(const Tensor& x) {
  const auto& in = deref(x, "transpose_to_map");
  if (in.shape.size() != 2)
    throw std::invalid_argument("transpose_to_map: input must be [P,C]");
  const int p = in.shape[0], c = in.shape[1];
  std::vector<double> out(in.values.size());
  for (int i = 0; i < p; ++i)
    for (int ch = 0; ch < c; ++ch)
      out[static_cast<std::size_t>(ch) * p + i] =
          in.values[static_cast<std::size_t>(i) * c + ch];
  return make_op({c, 1, p}, std::move(out), {x}, [p, c](OpContext& ctx) {
    auto gout = ctx.out_grad();
    auto gin = ctx.parent_grad(0);
    for (int i = 0; i < p; ++i)
      for (int ch = 0; ch < c; ++ch)
        gin[static_cast<std::size_t>(i) * c + ch] +=
            gout[static_cast<std::size_t>(ch) * p + i];
  });
}

Tensor sum(const Tensor& x) {
  const auto& in = deref(x, "sum");
  double acc = 0.0;
  for (double v : in.values) acc += v;
  return make_op({1}, {acc}, {x}, [](OpContext& ctx) {
    const double g = ctx.out_grad()[0];
    auto gin = ctx.parent_grad(0);
    for (auto& v : gin) v += g;
  });
}

Tensor weighted_sum(std::span<const Tensor> terms,
                    std::span<const double> weights) {
  if (terms.size() != weights.size())
    throw std::invalid_argument("weighted_sum: term/weight count mismatch");
  double acc = 0.0;
  std::vector<Tensor> parents;
  std::vector<double> ws(weights.begin(), weights.end());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const auto& n = deref(terms[i], "weighted_sum");
    if (n.values.size() != 1)
      throw std::invalid_argument("weighted_sum: terms must be scalars");
    acc += ws[i] * n.values[0];
    parents.push_back(terms[i]);
  }
  return make_op({1}, {acc}, std::move(parents), [ws](OpContext& ctx) {
    const double g = ctx.out_grad()[0];
    for (std::size_t i = 0; i < ws.size(); ++i)
      if (ctx.parent_requires_grad(static_cast<int>(i)))
        ctx.parent_grad(static_cast<int>(i))[0] += g * ws[i];
  });
}

}  // namespace saccade
