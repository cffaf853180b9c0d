#pragma once

#include "support/gradcheck.hpp"

#include <random>
#include <string>
#include <vector>

namespace stereops::testing {

struct OpCase {
  std::string name;
  ScalarFn fn;
  std::vector<Matrix> inputs;
};

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

/// Values bounded away from zero by `gap`, with random signs.
inline Matrix away_from_zero(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double gap, double hi) {
  Matrix m = random_matrix(rng, r, c, gap, hi);
  std::bernoulli_distribution sign(0.5);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (sign(rng)) m.data()[i] = -m.data()[i];
  return m;
}

/// Every differentiable op, each contracted to a scalar with fixed random
/// weights so the whole Jacobian is exercised.
inline std::vector<OpCase> op_cases(std::uint64_t seed = 7) {
  namespace d = diff;
  std::mt19937_64 rng(seed);
  std::vector<OpCase> cases;
  auto add = [&](std::string name, Eigen::Index out_r, Eigen::Index out_c,
                 std::function<d::Value(d::Tape&, const std::vector<d::Value>&)> op, std::vector<Matrix> in) {
    const Matrix w = random_matrix(rng, out_r, out_c, -1.0, 1.0);
    cases.push_back({std::move(name),
                     [op, w](d::Tape& t, const std::vector<d::Value>& x) { return d::sum_all(op(t, x) * t.constant(w)); },
                     std::move(in)});
  };
  const auto A = [&] { return random_matrix(rng, 3, 4, -1.0, 1.0); };
  const auto P = [&] { return random_matrix(rng, 3, 4, 0.3, 2.0); };

  add("add", 3, 4, [](auto&, auto& x) { return x[0] + x[1]; }, {A(), A()});
  add("add_broadcast_row", 3, 4, [](auto&, auto& x) { return x[0] + x[1]; }, {A(), random_matrix(rng, 1, 4, -1, 1)});
  add("add_broadcast_col", 3, 4, [](auto&, auto& x) { return x[0] + x[1]; }, {A(), random_matrix(rng, 3, 1, -1, 1)});
  add("sub", 3, 4, [](auto&, auto& x) { return x[0] - x[1]; }, {A(), random_matrix(rng, 1, 4, -1, 1)});
  add("mul", 3, 4, [](auto&, auto& x) { return x[0] * x[1]; }, {A(), random_matrix(rng, 3, 1, -1, 1)});
  add("div", 3, 4, [](auto&, auto& x) { return x[0] / x[1]; }, {A(), P()});
  add("neg", 3, 4, [](auto&, auto& x) { return -x[0]; }, {A()});
  add("scale", 3, 4, [](auto&, auto& x) { return 2.5 * x[0]; }, {A()});
  add("add_scalar", 3, 4, [](auto&, auto& x) { return x[0] + 0.7; }, {A()});
  add("matmul", 3, 2, [](auto&, auto& x) { return d::matmul(x[0], x[1]); }, {A(), random_matrix(rng, 4, 2, -1, 1)});
  add("transpose", 4, 3, [](auto&, auto& x) { return d::transpose(x[0]); }, {A()});
  add("sin", 3, 4, [](auto&, auto& x) { return d::sin(x[0]); }, {A()});
  add("cos", 3, 4, [](auto&, auto& x) { return d::cos(x[0]); }, {A()});
  add("exp", 3, 4, [](auto&, auto& x) { return d::exp(x[0]); }, {A()});
  add("log", 3, 4, [](auto&, auto& x) { return d::log(x[0]); }, {P()});
  add("sqrt", 3, 4, [](auto&, auto& x) { return d::sqrt(x[0]); }, {P()});
  add("square", 3, 4, [](auto&, auto& x) { return d::square(x[0]); }, {A()});
  add("abs", 3, 4, [](auto&, auto& x) { return d::abs(x[0]); }, {away_from_zero(rng, 3, 4, 0.1, 1.0)});
  add("relu", 3, 4, [](auto&, auto& x) { return d::relu(x[0]); }, {away_from_zero(rng, 3, 4, 0.1, 1.0)});
  add("sigmoid", 3, 4, [](auto&, auto& x) { return d::sigmoid(x[0]); }, {random_matrix(rng, 3, 4, -3, 3)});
  add("softplus", 3, 4, [](auto&, auto& x) { return d::softplus(x[0]); }, {random_matrix(rng, 3, 4, -3, 3)});
  add("clamp_min", 3, 4, [](auto&, auto& x) { return d::clamp_min(x[0], 0.05); },
      {away_from_zero(rng, 3, 4, 0.15, 1.0)});
  add("power", 3, 4, [](auto&, auto& x) { return d::power(x[0], 2.7); }, {P()});
  add("power_matrix", 3, 4, [](auto&, auto& x) { return d::power(x[0], Matrix::Constant(1, 4, 1.3)); }, {P()});
  add("atan2", 3, 4, [](auto&, auto& x) { return d::atan2(x[0], x[1]); }, {A(), away_from_zero(rng, 3, 4, 0.2, 1.0)});
  add("acos", 3, 4, [](auto&, auto& x) { return d::acos(x[0]); }, {random_matrix(rng, 3, 4, -0.9, 0.9)});
  add("sum_axis0", 1, 4, [](auto&, auto& x) { return d::sum(x[0], 0); }, {A()});
  add("sum_axis1", 3, 1, [](auto&, auto& x) { return d::sum(x[0], 1); }, {A()});
  add("mean_axis0", 1, 4, [](auto&, auto& x) { return d::mean(x[0], 0); }, {A()});
  add("mean_axis1", 3, 1, [](auto&, auto& x) { return d::mean(x[0], 1); }, {A()});
  add("sum_all", 1, 1, [](auto&, auto& x) { return d::sum_all(x[0]); }, {A()});
  add("mean_all", 1, 1, [](auto&, auto& x) { return d::mean_all(x[0]); }, {A()});
  add("softmax_axis0", 3, 4, [](auto&, auto& x) { return d::softmax(x[0], 0); }, {random_matrix(rng, 3, 4, -2, 2)});
  add("softmax_axis1", 3, 4, [](auto&, auto& x) { return d::softmax(x[0], 1); }, {random_matrix(rng, 3, 4, -2, 2)});
  add("dot", 4, 1, [](auto&, auto& x) { return d::dot(x[0], x[1]); },
      {random_matrix(rng, 4, 3, -1, 1), random_matrix(rng, 4, 3, -1, 1)});
  add("cross", 4, 3, [](auto&, auto& x) { return d::cross(x[0], x[1]); },
      {random_matrix(rng, 4, 3, -1, 1), random_matrix(rng, 4, 3, -1, 1)});
  add("norm", 4, 1, [](auto&, auto& x) { return d::norm(x[0]); }, {random_matrix(rng, 4, 3, 0.2, 1)});
  add("normalize", 4, 3, [](auto&, auto& x) { return d::normalize(x[0]); }, {random_matrix(rng, 4, 3, -1, 1)});
  add("concat_axis0", 5, 4, [](auto&, auto& x) { return d::concat({x[0], x[1]}, 0); },
      {A(), random_matrix(rng, 2, 4, -1, 1)});
  add("concat_axis1", 3, 6, [](auto&, auto& x) { return d::concat({x[0], x[1]}, 1); },
      {A(), random_matrix(rng, 3, 2, -1, 1)});
  add("slice_axis0", 2, 4, [](auto&, auto& x) { return d::slice(x[0], 0, 1, 2); }, {A()});
  add("slice_axis1", 3, 2, [](auto&, auto& x) { return d::slice(x[0], 1, 2, 2); }, {A()});
  add("reshape", 2, 6, [](auto&, auto& x) { return d::reshape(x[0], 2, 6); }, {A()});
  add("gather_rows", 4, 4, [](auto&, auto& x) { return d::gather_rows(x[0], {2, 0, 2, 1}); }, {A()});
  add("cumprod_exclusive", 3, 4, [](auto&, auto& x) { return d::cumprod_exclusive(x[0]); },
      {random_matrix(rng, 3, 4, 0.1, 0.9)});
  return cases;
}

}  // namespace stereops::testing
