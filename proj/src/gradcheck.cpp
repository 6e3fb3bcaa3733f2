#include "saccade/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

#include "saccade/encoder.hpp"
#include "saccade/losses.hpp"
#include "saccade/network.hpp"
#include "saccade/rng.hpp"

namespace saccade {

GradCheckReport check_gradients(std::vector<Tensor> leaves,
                                const std::function<Tensor()>& forward_scalar,
                                double eps) {
  for (auto& leaf : leaves) leaf.zero_grad();
  Tensor loss = forward_scalar();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto& leaf : leaves) {
    auto g = leaf.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  GradCheckReport report;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto vals = leaves[li].values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + eps;
      const double f_plus = forward_scalar().values()[0];
      vals[i] = saved - eps;
      const double f_minus = forward_scalar().values()[0];
      vals[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double a = analytic[li][i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      report.max_rel_err =
          std::max(report.max_rel_err, std::abs(a - numeric) / denom);
      ++report.elements_checked;
    }
  }
  return report;
}

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo, double hi,
                     bool requires_grad = true) {
  std::vector<double> vals(shape_numel(shape));
  for (auto& v : vals) v = rng.uniform(lo, hi);
  return Tensor::from_values(std::move(shape), std::move(vals), requires_grad);
}

// Reduces an arbitrary op output to a scalar with a fixed random projection
// so the whole Jacobian participates in one finite-difference check.
Tensor project(const Tensor& t, const std::vector<double>& weights) {
  std::vector<double> acc = {0.0};
  auto v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) acc[0] += weights[i] * v[i];
  std::vector<Tensor> parents = {t};
  return make_op({1}, std::move(acc), std::move(parents),
                 [weights](OpContext& ctx) {
                   const double g = ctx.out_grad()[0];
                   auto gin = ctx.parent_grad(0);
                   for (std::size_t i = 0; i < gin.size(); ++i)
                     gin[i] += g * weights[i];
                 });
}

std::vector<double> projection_weights(std::int64_t n, Rng& rng) {
  std::vector<double> w(n);
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return w;
}

struct SuiteCase {
  std::string name;
  double tolerance;
  std::function<GradCheckReport(Rng&)> run;
};

GradCheckReport conv_case(Rng& rng) {
  Tensor input = random_tensor({2, 5, 5}, rng, -1.0, 1.0);
  Tensor weight = random_tensor({4, 2, 3, 3}, rng, -1.0, 1.0);
  Tensor bias = random_tensor({4}, rng, -0.5, 0.5);
  auto w = projection_weights(4 * 5 * 5, rng);
  return check_gradients({input, weight, bias}, [&] {
    return project(conv2d(input, weight, bias, 1, 1), w);
  });
}

GradCheckReport conv_stride2_case(Rng& rng) {
  Tensor input = random_tensor({3, 6, 6}, rng, -1.0, 1.0);
  Tensor weight = random_tensor({2, 3, 3, 3}, rng, -1.0, 1.0);
  Tensor bias = random_tensor({2}, rng, -0.5, 0.5);
  auto w = projection_weights(2 * 3 * 3, rng);
  return check_gradients({input, weight, bias}, [&] {
    return project(conv2d(input, weight, bias, 2, 1), w);
  });
}

GradCheckReport relu_case(Rng& rng) {
  // Keep samples away from the kink so central differences are valid.
  Tensor x = random_tensor({3, 4, 4}, rng, -1.0, 1.0);
  for (auto& v : x.values())
    if (std::abs(v) < 0.05) v += v >= 0 ? 0.1 : -0.1;
  auto w = projection_weights(x.numel(), rng);
  return check_gradients({x}, [&] { return project(relu(x), w); });
}

GradCheckReport sigmoid_case(Rng& rng) {
  Tensor x = random_tensor({2, 3, 5}, rng, -3.0, 3.0);
  auto w = projection_weights(x.numel(), rng);
  return check_gradients({x}, [&] { return project(sigmoid(x), w); });
}

GradCheckReport upsample_case(Rng& rng) {
  Tensor x = random_tensor({2, 3, 4}, rng, -1.0, 1.0);
  auto w = projection_weights(x.numel() * 4, rng);
  return check_gradients({x},
                         [&] { return project(upsample_nearest2x(x), w); });
}

GradCheckReport bilinear_case(Rng& rng) {
  Tensor features = random_tensor({3, 6, 7}, rng, -1.0, 1.0);
  std::vector<Point2> points;
  for (int i = 0; i < 8; ++i)
    points.push_back({rng.uniform(0.0, 6.0), rng.uniform(0.0, 5.0)});
  auto w = projection_weights(static_cast<std::int64_t>(points.size()) * 3,
                              rng);
  return check_gradients(
      {features}, [&] { return project(bilinear_sample(features, points), w); });
}

GradCheckReport add_concat_case(Rng& rng) {
  Tensor a = random_tensor({2, 3, 3}, rng, -1.0, 1.0);
  Tensor b = random_tensor({2, 3, 3}, rng, -1.0, 1.0);
  Tensor c = random_tensor({1, 3, 3}, rng, -1.0, 1.0);
  auto w = projection_weights(3 * 3 * 3, rng);
  return check_gradients({a, b, c}, [&] {
    std::vector<Tensor> parts = {add(a, b), c};
    return project(concat_channels(parts), w);
  });
}

GradCheckReport transpose_case(Rng& rng) {
  Tensor x = random_tensor({5, 4}, rng, -1.0, 1.0);
  auto w = projection_weights(20, rng);
  return check_gradients({x}, [&] { return project(transpose_to_map(x), w); });
}

GradCheckReport focal_case(Rng& rng) {
  // Logits feed a sigmoid so the finite-difference step stays inside (0,1).
  Tensor logits = random_tensor({2, 4, 4}, rng, -2.0, 2.0);
  std::vector<double> gt(2 * 4 * 4);
  for (auto& v : gt) v = rng.uniform(0.0, 0.9);
  gt[rng.uniform_int(0, 15)] = 1.0;
  gt[16 + rng.uniform_int(0, 15)] = 1.0;
  Tensor gt_t = Tensor::from_values({2, 4, 4}, gt);
  FocalParams params;
  return check_gradients(
      {logits}, [&] { return focal_loss(sigmoid(logits), gt_t, params); });
}

GradCheckReport masked_l1_case(Rng& rng) {
  Tensor pred = random_tensor({2, 4, 4}, rng, -2.0, 2.0);
  Tensor target = random_tensor({2, 4, 4}, rng, -2.0, 2.0, false);
  // Separate pred from target so |pred-target| stays away from the kink.
  for (std::size_t i = 0; i < pred.values().size(); ++i) {
    const double d = pred.values()[i] - target.values()[i];
    if (std::abs(d) < 0.05) pred.values()[i] += d >= 0 ? 0.1 : -0.1;
  }
  std::vector<std::uint8_t> mask(16, 0);
  for (int i = 0; i < 5; ++i) mask[rng.uniform_int(0, 15)] = 1;
  return check_gradients({pred},
                         [&] { return masked_l1(pred, target, mask); });
}

GradCheckReport network_case(Rng& rng) {
  NetworkConfig config;
  config.num_classes = 2;
  config.input_height = 16;
  config.input_width = 16;
  config.backbone_channels = {2, 4, 6};
  config.head_hidden_channels = 4;
  config.refine_iterations = 1;
  ModelParams params = init_params(config, rng.next_u64());

  Tensor image = random_tensor({3, 16, 16}, rng, 0.0, 1.0, false);
  std::vector<GtBox> boxes;
  boxes.push_back({0, Box{2.0, 2.0, 9.0, 10.0}});
  boxes.push_back({1, Box{7.0, 6.0, 15.0, 14.0}});
  GroundTruthTarget target = encode_targets(boxes, config);

  std::vector<Tensor> leaves;
  for (const auto& name : params.names()) leaves.push_back(params.at(name));

  LossWeights weights;
  FocalParams focal;
  auto forward_loss = [&] {
    NetworkOutputs outputs = forward(image, params, config, Mode::kTrain);
    auto refine = refine_for_training(outputs, target, params, config);
    return total_loss(outputs, refine, target, weights, focal).total;
  };
  return check_gradients(std::move(leaves), forward_loss);
}

}  // namespace

std::vector<OpCheckResult> run_gradient_suite(
    std::uint64_t seed, const std::optional<std::string>& only_op) {
  const std::vector<SuiteCase> cases = {
      {"conv2d", 1e-4, conv_case},
      {"conv2d_stride2", 1e-4, conv_stride2_case},
      {"relu", 1e-4, relu_case},
      {"sigmoid", 1e-4, sigmoid_case},
      {"upsample_nearest2x", 1e-4, upsample_case},
      {"bilinear_sample", 1e-4, bilinear_case},
      {"add_concat", 1e-4, add_concat_case},
      {"transpose_to_map", 1e-4, transpose_case},
      {"focal_loss", 1e-4, focal_case},
      {"masked_l1", 1e-4, masked_l1_case},
      {"network_composed", 1e-3, network_case},
  };

  std::vector<OpCheckResult> results;
  bool matched = false;
  for (const auto& c : cases) {
    if (only_op && c.name != *only_op) continue;
    matched = true;
    Rng rng(mix_seed(seed) ^ std::hash<std::string>{}(c.name));
    auto report = c.run(rng);
    results.push_back(
        {c.name, report.max_rel_err, c.tolerance,
         report.max_rel_err < c.tolerance});
  }
  if (only_op && !matched)
    throw std::invalid_argument("unknown op for gradient check: " + *only_op);
  return results;
}

}  // namespace saccade
