#pragma once

#include "stereops/diffmath/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace stereops::testing {

/// Worst scaled disagreement between analytic and central-difference
/// gradients. Each component's error is divided by max(|analytic|, |numeric|,
/// floor), where floor = 1e-3 * the largest gradient magnitude, so that
/// components far below the gradient's scale are judged against it.
struct GradCheck {
  double max_error = 0.0;
  std::string worst;  // "input[i]" of the worst component
  long components = 0;
};

inline void accumulate_check(GradCheck& out, const std::vector<double>& analytic, const std::vector<double>& numeric,
                             const std::vector<std::string>& labels) {
  double scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  const double floor = std::max(1e-3 * scale, 1e-12);
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double den = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    const double e = std::abs(analytic[i] - numeric[i]) / den;
    if (e > out.max_error || !std::isfinite(e)) {
      out.max_error = std::isfinite(e) ? e : INFINITY;
      out.worst = labels[i];
    }
  }
  out.components += static_cast<long>(analytic.size());
}

/// f builds a scalar on the tape from leaves holding `inputs`.
using ScalarFn = std::function<diff::Value(diff::Tape&, const std::vector<diff::Value>&)>;

inline GradCheck check_gradients(const ScalarFn& f, const std::vector<Matrix>& inputs, double h = 1e-6) {
  std::vector<double> analytic, numeric;
  std::vector<std::string> labels;
  {
    diff::Tape tape;
    std::vector<diff::Value> leaves;
    for (const Matrix& m : inputs) leaves.push_back(tape.leaf(m));
    diff::Value y = f(tape, leaves);
    tape.backward(y);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const Matrix g = leaves[k].grad();
      for (Eigen::Index i = 0; i < g.size(); ++i) analytic.push_back(g.data()[i]);
    }
  }
  auto eval = [&](const std::vector<Matrix>& in) {
    diff::Tape tape;
    std::vector<diff::Value> leaves;
    for (const Matrix& m : in) leaves.push_back(tape.constant(m));
    return f(tape, leaves).item();
  };
  std::vector<Matrix> work = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double x = inputs[k].data()[i];
      const double step = h * std::max(1.0, std::abs(x));
      work[k].data()[i] = x + step;
      const double fp = eval(work);
      work[k].data()[i] = x - step;
      const double fm = eval(work);
      work[k].data()[i] = x;
      numeric.push_back((fp - fm) / (2.0 * step));
      labels.push_back("input" + std::to_string(k) + "[" + std::to_string(i) + "]");
    }
  GradCheck out;
  accumulate_check(out, analytic, numeric, labels);
  return out;
}

/// Same check over trainable parameters; `loss` records a fresh scalar each call.
inline GradCheck check_parameter_gradients(const std::function<diff::Value(diff::Tape&)>& loss,
                                           const std::vector<diff::Parameter*>& params, double h = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    diff::Tape tape;
    diff::Value y = loss(tape);
    tape.backward(y);
  }
  std::vector<double> analytic, numeric;
  std::vector<std::string> labels;
  for (auto* p : params) {
    const Matrix g = p->grad.size() == p->value.size() ? p->grad : Matrix::Zero(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      analytic.push_back(g.data()[i]);
      const double x = p->value.data()[i];
      const double step = h * std::max(1.0, std::abs(x));
      p->value.data()[i] = x + step;
      double fp, fm;
      {
        diff::Tape tape;
        fp = loss(tape).item();
      }
      p->value.data()[i] = x - step;
      {
        diff::Tape tape;
        fm = loss(tape).item();
      }
      p->value.data()[i] = x;
      numeric.push_back((fp - fm) / (2.0 * step));
      labels.push_back(p->name + "[" + std::to_string(i) + "]");
    }
  }
  for (auto* p : params) p->zero_grad();
  GradCheck out;
  accumulate_check(out, analytic, numeric, labels);
  return out;
}

}  // namespace stereops::testing
