#pragma once

#include "stereops/diffmath/tape.hpp"

#include <vector>

// Differentiable operations on tape Values.
//
// Elementwise binary ops broadcast a dimension of size 1 against any size.
// Row-wise vector ops (dot, cross, norm) treat each row as one vector.
namespace stereops::diff {

/// Guard added to denominators and log/sqrt arguments.
inline constexpr double kEps = 1e-12;

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value div(const Value& a, const Value& b);
Value neg(const Value& a);
Value scale(const Value& a, double s);
Value add_scalar(const Value& a, double s);

Value matmul(const Value& a, const Value& b);
Value transpose(const Value& a);

Value sin(const Value& a);
Value cos(const Value& a);
Value exp(const Value& a);
Value log(const Value& a);
Value sqrt(const Value& a);
Value square(const Value& a);
Value abs(const Value& a);
Value relu(const Value& a);
Value sigmoid(const Value& a);
Value softplus(const Value& a);
Value clamp_min(const Value& a, double lo);
/// Elementwise a^p for a >= 0 (negative bases yield 0, zero gradient).
Value power(const Value& a, double p);
/// Elementwise a^e with `exponent` broadcast against a; not differentiated in e.
Value power(const Value& a, const Matrix& exponent);
/// atan2 with a zero gradient at the origin.
Value atan2(const Value& y, const Value& x);
Value acos(const Value& a);

/// axis 0 reduces over rows (result 1 x cols), axis 1 over columns (rows x 1).
Value sum(const Value& a, int axis);
Value mean(const Value& a, int axis);
Value sum_all(const Value& a);
Value mean_all(const Value& a);
Value softmax(const Value& a, int axis);

Value dot(const Value& a, const Value& b);
Value cross(const Value& a, const Value& b);
Value norm(const Value& a);
Value normalize(const Value& a);

Value concat(const std::vector<Value>& parts, int axis);
Value slice(const Value& a, int axis, Eigen::Index start, Eigen::Index count);
/// Row-major reshape.
Value reshape(const Value& a, Eigen::Index rows, Eigen::Index cols);
Value gather_rows(const Value& a, const std::vector<Eigen::Index>& rows);
/// out(r, i) = prod_{j < i} a(r, j); out(r, 0) = 1.
Value cumprod_exclusive(const Value& a);
/// Same data, no gradient flow.
Value detach(const Value& a);

inline Value operator+(const Value& a, const Value& b) { return add(a, b); }
inline Value operator-(const Value& a, const Value& b) { return sub(a, b); }
inline Value operator*(const Value& a, const Value& b) { return mul(a, b); }
inline Value operator/(const Value& a, const Value& b) { return div(a, b); }
inline Value operator-(const Value& a) { return neg(a); }
inline Value operator*(double s, const Value& a) { return scale(a, s); }
inline Value operator*(const Value& a, double s) { return scale(a, s); }
inline Value operator+(const Value& a, double s) { return add_scalar(a, s); }
inline Value operator-(const Value& a, double s) { return add_scalar(a, -s); }
inline Value operator-(double s, const Value& a) { return add_scalar(neg(a), s); }

}  // namespace stereops::diff
