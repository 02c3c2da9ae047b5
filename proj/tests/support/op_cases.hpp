#pragma once

#include <string>
#include <vector>

#include "fusiongan/layers.hpp"
#include "fusiongan/objective.hpp"
#include "gradcheck.hpp"

namespace fgan::testing {

struct OpInstance {
  OpFn fn;
  std::vector<Tensor> inputs;
  double eps = 1e-3;
};

struct OpCase {
  std::string name;
  std::function<OpInstance(Rng&)> make;
};

inline Shape small_shape(Rng& rng) {
  return {1 + static_cast<int>(rng.below(2)), 1 + static_cast<int>(rng.below(3)),
          2 + static_cast<int>(rng.below(3)), 2 + static_cast<int>(rng.below(3))};
}

inline OpInstance unary(Rng& rng, std::function<Tensor(const Tensor&)> op, float gap = 0.0f) {
  Tensor x = random_tensor(small_shape(rng), rng);
  if (gap > 0.0f) x = away_from_zero(x, gap);
  return {[op](const std::vector<Tensor>& in) { return op(in[0]); }, {x}};
}

inline OpInstance binary(Rng& rng, std::function<Tensor(const Tensor&, const Tensor&)> op) {
  const Shape s = small_shape(rng);
  return {[op](const std::vector<Tensor>& in) { return op(in[0], in[1]); },
          {random_tensor(s, rng), random_tensor(s, rng)}};
}

// Every differentiable primitive plus the two losses.
inline std::vector<OpCase> all_op_cases() {
  std::vector<OpCase> cases;
  cases.push_back({"conv2d", [](Rng& rng) {
    const int k = rng.below(2) == 0 ? 3 : 4;
    const int stride = k == 4 ? 2 : 1 + static_cast<int>(rng.below(2));
    const int cin = 1 + static_cast<int>(rng.below(3));
    const int cout = 1 + static_cast<int>(rng.below(3));
    const int size = k == 4 ? 4 + 2 * static_cast<int>(rng.below(2)) : 4 + static_cast<int>(rng.below(3));
    OpInstance inst;
    inst.inputs = {random_tensor({2, cin, size, size}, rng), random_tensor({cout, cin, k, k}, rng),
                   random_tensor({1, cout, 1, 1}, rng)};
    inst.fn = [stride](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], stride, 1); };
    return inst;
  }});
  cases.push_back({"transposed_conv2d", [](Rng& rng) {
    const int k = rng.below(2) == 0 ? 3 : 4;
    const int stride = k == 4 ? 2 : 1;
    const int cin = 1 + static_cast<int>(rng.below(3));
    const int cout = 1 + static_cast<int>(rng.below(3));
    const int size = 2 + static_cast<int>(rng.below(3));
    OpInstance inst;
    inst.inputs = {random_tensor({2, cin, size, size}, rng), random_tensor({cin, cout, k, k}, rng),
                   random_tensor({1, cout, 1, 1}, rng)};
    inst.fn = [stride](const std::vector<Tensor>& in) {
      return transposed_conv2d(in[0], in[1], in[2], stride, 1);
    };
    return inst;
  }});
  cases.push_back({"relu", [](Rng& rng) { return unary(rng, [](const Tensor& x) { return relu(x); }, 0.05f); }});
  cases.push_back({"leaky_relu", [](Rng& rng) {
    return unary(rng, [](const Tensor& x) { return leaky_relu(x, 0.2f); }, 0.05f);
  }});
  cases.push_back({"elu", [](Rng& rng) { return unary(rng, [](const Tensor& x) { return elu(x, 1.0f); }, 0.05f); }});
  cases.push_back({"tanh", [](Rng& rng) { return unary(rng, [](const Tensor& x) { return tanh_act(x); }); }});
  cases.push_back({"sigmoid", [](Rng& rng) { return unary(rng, [](const Tensor& x) { return sigmoid(x); }); }});
  cases.push_back({"softplus", [](Rng& rng) { return unary(rng, [](const Tensor& x) { return softplus(x); }); }});
  cases.push_back({"abs", [](Rng& rng) { return unary(rng, [](const Tensor& x) { return abs_act(x); }, 0.05f); }});
  cases.push_back({"add", [](Rng& rng) { return binary(rng, [](const Tensor& a, const Tensor& b) { return add(a, b); }); }});
  cases.push_back({"sub", [](Rng& rng) { return binary(rng, [](const Tensor& a, const Tensor& b) { return sub(a, b); }); }});
  cases.push_back({"mul", [](Rng& rng) { return binary(rng, [](const Tensor& a, const Tensor& b) { return mul(a, b); }); }});
  cases.push_back({"scale", [](Rng& rng) {
    const float f = static_cast<float>(rng.uniform(-3.0, 3.0));
    return unary(rng, [f](const Tensor& x) { return scale(x, f); });
  }});
  cases.push_back({"neg", [](Rng& rng) { return unary(rng, [](const Tensor& x) { return neg(x); }); }});
  cases.push_back({"concat_channels", [](Rng& rng) {
    Shape a = small_shape(rng);
    Shape b = a;
    b.c = 1 + static_cast<int>(rng.below(3));
    return OpInstance{[](const std::vector<Tensor>& in) { return concat_channels(in[0], in[1]); },
                      {random_tensor(a, rng), random_tensor(b, rng)}};
  }});
  cases.push_back({"sum", [](Rng& rng) { return unary(rng, [](const Tensor& x) { return sum(x); }); }});
  cases.push_back({"mean", [](Rng& rng) { return unary(rng, [](const Tensor& x) { return mean(x); }); }});
  cases.push_back({"sum_channels", [](Rng& rng) {
    return unary(rng, [](const Tensor& x) { return sum_channels(x); });
  }});
  cases.push_back({"avg_pool", [](Rng& rng) {
    const int k = 1 + static_cast<int>(rng.below(2));
    const int side = k * (1 + static_cast<int>(rng.below(3)));
    const Tensor x = random_tensor({2, 2, side, side}, rng);
    return OpInstance{[k](const std::vector<Tensor>& in) { return avg_pool(in[0], k); }, {x}};
  }});
  cases.push_back({"dropout", [](Rng& rng) {
    const std::uint64_t seed = rng.next_u64();
    return unary(rng, [seed](const Tensor& x) {
      Rng mask_rng(seed);
      return dropout(x, 0.5f, mask_rng);
    });
  }});
  cases.push_back({"divide_by_sigma", [](Rng& rng) {
    const int rows = 2 + static_cast<int>(rng.below(3));
    const Tensor w = random_tensor({rows, 2, 2, 2}, rng);
    std::vector<float> u(rows);
    std::vector<float> v(8);
    for (auto& e : u) e = static_cast<float>(rng.normal());
    for (auto& e : v) e = static_cast<float>(rng.normal());
    return OpInstance{[u, v](const std::vector<Tensor>& in) { return divide_by_sigma(in[0], u, v); },
                      {w}};
  }});
  cases.push_back({"d_loss", [](Rng& rng) {
    const Shape s{2, 1, 3, 3};
    return OpInstance{[](const std::vector<Tensor>& in) { return d_loss(in[0], in[1]); },
                      {random_tensor(s, rng), random_tensor(s, rng)},
                      1e-2};
  }});
  cases.push_back({"g_loss", [](Rng& rng) {
    const Shape s{2, 1, 3, 3};
    const Shape y{2, 2, 4, 4};
    OpInstance inst;
    inst.inputs = {random_tensor(s, rng), away_from_zero(random_tensor(y, rng), 0.05f),
                   Tensor::zeros(y)};
    inst.fn = [](const std::vector<Tensor>& in) { return g_loss(in[0], in[1], in[2], 3.0); };
    inst.eps = 1e-2;
    return inst;
  }});
  cases.push_back({"g_loss_minimax", [](Rng& rng) {
    const Shape s{2, 1, 3, 3};
    const Shape y{2, 2, 4, 4};
    OpInstance inst;
    inst.inputs = {random_tensor(s, rng), away_from_zero(random_tensor(y, rng), 0.05f),
                   Tensor::zeros(y)};
    inst.fn = [](const std::vector<Tensor>& in) {
      return g_loss(in[0], in[1], in[2], 1.0, GeneratorLoss::Minimax);
    };
    inst.eps = 1e-2;
    return inst;
  }});
  return cases;
}

inline constexpr int kGradCheckInstances = 10;
inline constexpr double kGradCheckTolerance = 1e-3;

}  // namespace fgan::testing
