#include "stereops/diffmath/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stereops::diff {
namespace {

using Eigen::Index;

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

Index broadcast_dim(Index a, Index b, bool& ok) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  ok = false;
  return 0;
}

std::pair<Index, Index> broadcast_shape(const Matrix& a, const Matrix& b, const char* op) {
  bool ok = true;
  const Index r = broadcast_dim(a.rows(), b.rows(), ok);
  const Index c = broadcast_dim(a.cols(), b.cols(), ok);
  if (!ok) throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
  return {r, c};
}

// Returns `m` itself when it already has the target shape, otherwise a
// replicated copy held in `storage`.
const Matrix& expand(const Matrix& m, Index r, Index c, Matrix& storage) {
  if (m.rows() == r && m.cols() == c) return m;
  storage = m.replicate(r / m.rows(), c / m.cols());
  return storage;
}

Matrix reduce_to(const Matrix& g, Index r, Index c) {
  if (g.rows() == r && g.cols() == c) return g;
  Matrix out = g;
  if (r == 1 && out.rows() != 1) out = out.colwise().sum().eval();
  if (c == 1 && out.cols() != 1) out = out.rowwise().sum().eval();
  return out;
}

Tape& same_tape(const Value& a, const Value& b) {
  Tape& t = a.tape();
  t.check(b);
  return t;
}

double safe_denominator(double b) {
  if (std::abs(b) >= kEps) return b;
  return b >= 0.0 ? kEps : -kEps;
}

template <class Forward, class Derivative>
Value unary(const Value& a, Forward f, Derivative df) {
  Tape& t = a.tape();
  const Matrix& x = a.data();
  Matrix out = x.unaryExpr(f);
  const int ia = a.index();
  return t.record(std::move(out), {a}, [ia, df](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.data_at(ia);
    tp.accumulate(ia, g.cwiseProduct(x.unaryExpr(df)));
  });
}

}  // namespace

Value add(const Value& a, const Value& b) {
  Tape& t = same_tape(a, b);
  const auto [r, c] = broadcast_shape(a.data(), b.data(), "add");
  Matrix sa, sb;
  Matrix out = expand(a.data(), r, c, sa) + expand(b.data(), r, c, sb);
  const int ia = a.index(), ib = b.index();
  const Index ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  return t.record(std::move(out), {a, b}, [=](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, reduce_to(g, ar, ac));
    if (tp.requires_grad(ib)) tp.accumulate(ib, reduce_to(g, br, bc));
  });
}

Value sub(const Value& a, const Value& b) {
  Tape& t = same_tape(a, b);
  const auto [r, c] = broadcast_shape(a.data(), b.data(), "sub");
  Matrix sa, sb;
  Matrix out = expand(a.data(), r, c, sa) - expand(b.data(), r, c, sb);
  const int ia = a.index(), ib = b.index();
  const Index ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  return t.record(std::move(out), {a, b}, [=](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, reduce_to(g, ar, ac));
    if (tp.requires_grad(ib)) tp.accumulate(ib, reduce_to(-g, br, bc));
  });
}

Value mul(const Value& a, const Value& b) {
  Tape& t = same_tape(a, b);
  const auto [r, c] = broadcast_shape(a.data(), b.data(), "mul");
  Matrix sa, sb;
  Matrix out = expand(a.data(), r, c, sa).cwiseProduct(expand(b.data(), r, c, sb));
  const int ia = a.index(), ib = b.index();
  return t.record(std::move(out), {a, b}, [=](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.data_at(ia);
    const Matrix& y = tp.data_at(ib);
    Matrix s;
    if (tp.requires_grad(ia)) tp.accumulate(ia, reduce_to(g.cwiseProduct(expand(y, r, c, s)), x.rows(), x.cols()));
    if (tp.requires_grad(ib)) tp.accumulate(ib, reduce_to(g.cwiseProduct(expand(x, r, c, s)), y.rows(), y.cols()));
  });
}

Value div(const Value& a, const Value& b) {
  Tape& t = same_tape(a, b);
  const auto [r, c] = broadcast_shape(a.data(), b.data(), "div");
  Matrix sa, sb;
  const Matrix den = expand(b.data(), r, c, sb).unaryExpr(&safe_denominator);
  Matrix out = expand(a.data(), r, c, sa).cwiseQuotient(den);
  const int ia = a.index(), ib = b.index();
  return t.record(std::move(out), {a, b}, [=](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.data_at(ia);
    const Matrix& y = tp.data_at(ib);
    Matrix s;
    const Matrix d = expand(y, r, c, s).unaryExpr(&safe_denominator);
    if (tp.requires_grad(ia)) tp.accumulate(ia, reduce_to(g.cwiseQuotient(d), x.rows(), x.cols()));
    if (tp.requires_grad(ib)) {
      Matrix s2;
      const Matrix& xe = expand(x, r, c, s2);
      Matrix gb = -(g.cwiseProduct(xe)).cwiseQuotient(d.cwiseProduct(d));
      tp.accumulate(ib, reduce_to(gb, y.rows(), y.cols()));
    }
  });
}

Value neg(const Value& a) { return scale(a, -1.0); }

Value scale(const Value& a, double s) {
  Tape& t = a.tape();
  const int ia = a.index();
  return t.record(a.data() * s, {a}, [ia, s](Tape& tp, const Matrix& g) { tp.accumulate(ia, g * s); });
}

Value add_scalar(const Value& a, double s) {
  Tape& t = a.tape();
  const int ia = a.index();
  return t.record(a.data().array() + s, {a}, [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g); });
}

Value matmul(const Value& a, const Value& b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.data()) + " by " + shape_str(b.data()));
  Matrix out = a.data() * b.data();
  const int ia = a.index(), ib = b.index();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.data_at(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.data_at(ia).transpose() * g);
  });
}

Value transpose(const Value& a) {
  Tape& t = a.tape();
  const int ia = a.index();
  return t.record(a.data().transpose(), {a}, [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g.transpose()); });
}

Value sin(const Value& a) {
  return unary(a, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}

Value cos(const Value& a) {
  return unary(a, [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); });
}

Value exp(const Value& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Value log(const Value& a) {
  return unary(a, [](double x) { return std::log(x + kEps); }, [](double x) { return 1.0 / (x + kEps); });
}

Value sqrt(const Value& a) {
  return unary(
      a, [](double x) { return std::sqrt(std::max(x, 0.0)); },
      [](double x) { return 0.5 / (std::sqrt(std::max(x, 0.0)) + kEps); });
}

Value square(const Value& a) {
  return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Value abs(const Value& a) {
  return unary(
      a, [](double x) { return std::abs(x); }, [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Value relu(const Value& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

namespace {
double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Value sigmoid(const Value& a) {
  return unary(a, &logistic, [](double x) {
    const double s = logistic(x);
    return s * (1.0 - s);
  });
}

Value softplus(const Value& a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }, &logistic);
}

Value clamp_min(const Value& a, double lo) {
  return unary(a, [lo](double x) { return x < lo ? lo : x; }, [lo](double x) { return x > lo ? 1.0 : 0.0; });
}

namespace {
double safe_pow(double x, double p) {
  if (x > 0.0) return std::pow(x, p);
  return p == 0.0 ? 1.0 : 0.0;
}
double safe_pow_grad(double x, double p) { return x > 0.0 ? p * std::pow(x, p - 1.0) : 0.0; }
}  // namespace

Value power(const Value& a, double p) {
  return unary(a, [p](double x) { return safe_pow(x, p); }, [p](double x) { return safe_pow_grad(x, p); });
}

Value power(const Value& a, const Matrix& exponent) {
  Tape& t = a.tape();
  const auto [r, c] = broadcast_shape(a.data(), exponent, "power");
  if (r != a.rows() || c != a.cols())
    throw ShapeError("power: exponent " + shape_str(exponent) + " does not broadcast onto " + shape_str(a.data()));
  Matrix se;
  const Matrix e = expand(exponent, r, c, se);
  Matrix out = a.data().binaryExpr(e, &safe_pow);
  const int ia = a.index();
  return t.record(std::move(out), {a}, [ia, e](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.cwiseProduct(tp.data_at(ia).binaryExpr(e, &safe_pow_grad)));
  });
}

Value atan2(const Value& y, const Value& x) {
  Tape& t = same_tape(y, x);
  const auto [r, c] = broadcast_shape(y.data(), x.data(), "atan2");
  Matrix sy, sx;
  const Matrix& ye = expand(y.data(), r, c, sy);
  const Matrix& xe = expand(x.data(), r, c, sx);
  Matrix out = ye.binaryExpr(xe, [](double a, double b) { return std::atan2(a, b); });
  const int iy = y.index(), ix = x.index();
  return t.record(std::move(out), {y, x}, [=](Tape& tp, const Matrix& g) {
    Matrix s1, s2;
    const Matrix& yv = tp.data_at(iy);
    const Matrix& xv = tp.data_at(ix);
    const Matrix& ye = expand(yv, r, c, s1);
    const Matrix& xe = expand(xv, r, c, s2);
    Matrix gy(r, c), gx(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) {
        const double d = ye(i, j) * ye(i, j) + xe(i, j) * xe(i, j);
        if (d == 0.0) {
          gy(i, j) = gx(i, j) = 0.0;
        } else {
          gy(i, j) = g(i, j) * xe(i, j) / d;
          gx(i, j) = -g(i, j) * ye(i, j) / d;
        }
      }
    if (tp.requires_grad(iy)) tp.accumulate(iy, reduce_to(gy, yv.rows(), yv.cols()));
    if (tp.requires_grad(ix)) tp.accumulate(ix, reduce_to(gx, xv.rows(), xv.cols()));
  });
}

Value acos(const Value& a) {
  return unary(
      a, [](double x) { return std::acos(std::clamp(x, -1.0, 1.0)); },
      [](double x) { return -1.0 / std::sqrt(std::max(1.0 - x * x, kEps)); });
}

Value sum(const Value& a, int axis) {
  Tape& t = a.tape();
  const int ia = a.index();
  const Index r = a.rows(), c = a.cols();
  if (axis == 0) {
    return t.record(a.data().colwise().sum(), {a}, [ia, r](Tape& tp, const Matrix& g) {
      tp.accumulate(ia, g.replicate(r, 1));
    });
  }
  if (axis == 1) {
    return t.record(a.data().rowwise().sum(), {a}, [ia, c](Tape& tp, const Matrix& g) {
      tp.accumulate(ia, g.replicate(1, c));
    });
  }
  throw ShapeError("sum: axis must be 0 or 1");
}

Value mean(const Value& a, int axis) {
  const double n = axis == 0 ? static_cast<double>(a.rows()) : static_cast<double>(a.cols());
  return scale(sum(a, axis), 1.0 / n);
}

Value sum_all(const Value& a) {
  Tape& t = a.tape();
  const int ia = a.index();
  const Index r = a.rows(), c = a.cols();
  return t.record(Matrix::Constant(1, 1, a.data().sum()), {a}, [ia, r, c](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

Value mean_all(const Value& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.data().size())); }

Value softmax(const Value& a, int axis) {
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  Tape& t = a.tape();
  const Matrix& x = a.data();
  Matrix out(x.rows(), x.cols());
  if (axis == 1) {
    for (Index i = 0; i < x.rows(); ++i) {
      const double m = x.row(i).maxCoeff();
      out.row(i) = (x.row(i).array() - m).exp();
      out.row(i) /= out.row(i).sum();
    }
  } else {
    for (Index j = 0; j < x.cols(); ++j) {
      const double m = x.col(j).maxCoeff();
      out.col(j) = (x.col(j).array() - m).exp();
      out.col(j) /= out.col(j).sum();
    }
  }
  const int ia = a.index();
  Matrix s = out;
  return t.record(std::move(out), {a}, [ia, axis, s](Tape& tp, const Matrix& g) {
    const Matrix gs = g.cwiseProduct(s);
    Matrix gin(s.rows(), s.cols());
    if (axis == 1) {
      const Eigen::VectorXd tot = gs.rowwise().sum();
      gin = gs - s.cwiseProduct(tot.replicate(1, s.cols()));
    } else {
      const Eigen::RowVectorXd tot = gs.colwise().sum();
      gin = gs - s.cwiseProduct(tot.replicate(s.rows(), 1));
    }
    tp.accumulate(ia, gin);
  });
}

Value dot(const Value& a, const Value& b) { return sum(mul(a, b), 1); }

Value cross(const Value& a, const Value& b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != 3 || b.cols() != 3)
    throw ShapeError("cross: operands must have 3 columns, got " + shape_str(a.data()) + " and " +
                     shape_str(b.data()));
  const auto [r, c] = broadcast_shape(a.data(), b.data(), "cross");
  auto row_cross = [](const Matrix& x, const Matrix& y) {
    Matrix o(x.rows(), 3);
    o.col(0) = x.col(1).cwiseProduct(y.col(2)) - x.col(2).cwiseProduct(y.col(1));
    o.col(1) = x.col(2).cwiseProduct(y.col(0)) - x.col(0).cwiseProduct(y.col(2));
    o.col(2) = x.col(0).cwiseProduct(y.col(1)) - x.col(1).cwiseProduct(y.col(0));
    return o;
  };
  Matrix sa, sb;
  Matrix out = row_cross(expand(a.data(), r, c, sa), expand(b.data(), r, c, sb));
  const int ia = a.index(), ib = b.index();
  return t.record(std::move(out), {a, b}, [=](Tape& tp, const Matrix& g) {
    Matrix s1, s2;
    const Matrix& x = tp.data_at(ia);
    const Matrix& y = tp.data_at(ib);
    const Matrix& xe = expand(x, r, c, s1);
    const Matrix& ye = expand(y, r, c, s2);
    if (tp.requires_grad(ia)) tp.accumulate(ia, reduce_to(row_cross(ye, g), x.rows(), x.cols()));
    if (tp.requires_grad(ib)) tp.accumulate(ib, reduce_to(row_cross(g, xe), y.rows(), y.cols()));
  });
}

Value norm(const Value& a) {
  Tape& t = a.tape();
  Matrix out = a.data().rowwise().norm();
  const int ia = a.index();
  Matrix n = out;
  return t.record(std::move(out), {a}, [ia, n](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.data_at(ia);
    const Eigen::VectorXd f = g.col(0).cwiseQuotient((n.col(0).array() + kEps).matrix());
    tp.accumulate(ia, x.array().colwise() * f.array());
  });
}

Value normalize(const Value& a) { return div(a, norm(a)); }

Value concat(const std::vector<Value>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  Tape& t = parts.front().tape();
  Index r = 0, c = 0;
  std::vector<int> idx;
  std::vector<Index> extent;
  for (const auto& p : parts) {
    t.check(p);
    if (axis == 0) {
      if (c == 0) c = p.cols();
      if (p.cols() != c) throw ShapeError("concat: column mismatch " + shape_str(p.data()));
      r += p.rows();
      extent.push_back(p.rows());
    } else {
      if (r == 0) r = p.rows();
      if (p.rows() != r) throw ShapeError("concat: row mismatch " + shape_str(p.data()));
      c += p.cols();
      extent.push_back(p.cols());
    }
    idx.push_back(p.index());
  }
  Matrix out(r, c);
  Index off = 0;
  for (const auto& p : parts) {
    if (axis == 0) {
      out.middleRows(off, p.rows()) = p.data();
      off += p.rows();
    } else {
      out.middleCols(off, p.cols()) = p.data();
      off += p.cols();
    }
  }
  return t.record(std::move(out), parts, [idx, extent, axis](Tape& tp, const Matrix& g) {
    Index off = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (tp.requires_grad(idx[k])) {
        if (axis == 0)
          tp.accumulate(idx[k], g.middleRows(off, extent[k]));
        else
          tp.accumulate(idx[k], g.middleCols(off, extent[k]));
      }
      off += extent[k];
    }
  });
}

Value slice(const Value& a, int axis, Index start, Index count) {
  Tape& t = a.tape();
  const Index r = a.rows(), c = a.cols();
  const Index limit = axis == 0 ? r : c;
  if ((axis != 0 && axis != 1) || start < 0 || count < 0 || start + count > limit)
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of bounds for " + shape_str(a.data()));
  Matrix out = axis == 0 ? Matrix(a.data().middleRows(start, count)) : Matrix(a.data().middleCols(start, count));
  const int ia = a.index();
  return t.record(std::move(out), {a}, [=](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(r, c);
    if (axis == 0)
      full.middleRows(start, count) = g;
    else
      full.middleCols(start, count) = g;
    tp.accumulate(ia, full);
  });
}

Value reshape(const Value& a, Index rows, Index cols) {
  Tape& t = a.tape();
  if (rows * cols != a.data().size())
    throw ShapeError("reshape: cannot view " + shape_str(a.data()) + " as " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  Matrix out = Eigen::Map<const Matrix>(a.data().data(), rows, cols);
  const int ia = a.index();
  const Index r = a.rows(), c = a.cols();
  return t.record(std::move(out), {a}, [ia, r, c](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, Eigen::Map<const Matrix>(g.data(), r, c));
  });
}

Value gather_rows(const Value& a, const std::vector<Index>& rows) {
  Tape& t = a.tape();
  const Matrix& x = a.data();
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows())
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " + shape_str(x));
    out.row(static_cast<Index>(i)) = x.row(rows[i]);
  }
  const int ia = a.index();
  const Index r = x.rows(), c = x.cols();
  return t.record(std::move(out), {a}, [ia, r, c, rows](Tape& tp, const Matrix& g) {
    Matrix acc = Matrix::Zero(r, c);
    for (std::size_t i = 0; i < rows.size(); ++i) acc.row(rows[i]) += g.row(static_cast<Index>(i));
    tp.accumulate(ia, acc);
  });
}

Value cumprod_exclusive(const Value& a) {
  Tape& t = a.tape();
  const Matrix& u = a.data();
  const Index r = u.rows(), c = u.cols();
  Matrix out(r, c);
  for (Index i = 0; i < r; ++i) {
    double p = 1.0;
    for (Index j = 0; j < c; ++j) {
      out(i, j) = p;
      p *= u(i, j);
    }
  }
  const int ia = a.index();
  Matrix prefix = out;
  return t.record(std::move(out), {a}, [ia, prefix, r, c](Tape& tp, const Matrix& g) {
    // d out(i) / d u(k) = prefix(k) * prod_{k<j<i} u(j) for i > k; the suffix
    // recursion below avoids dividing by u, which may be exactly zero.
    const Matrix& u = tp.data_at(ia);
    Matrix gu(r, c);
    for (Index i = 0; i < r; ++i) {
      double s = 0.0;
      gu(i, c - 1) = 0.0;
      for (Index k = c - 2; k >= 0; --k) {
        s = g(i, k + 1) + u(i, k + 1) * s;
        gu(i, k) = prefix(i, k) * s;
      }
    }
    tp.accumulate(ia, gu);
  });
}

Value detach(const Value& a) { return a.tape().constant(a.data()); }

}  // namespace stereops::diff
