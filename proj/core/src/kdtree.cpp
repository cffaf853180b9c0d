#include "stereops/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace stereops {

namespace {
constexpr int kLeafSize = 8;
}

KdTree::KdTree(const Matrix& points) : points_(points) {
  if (points.cols() != 3) throw Error("KdTree: points must be N x 3");
  if (!points.allFinite()) throw Error("KdTree: non-finite point");
  order_.resize(static_cast<std::size_t>(points.rows()));
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  if (points.rows() > 0) build(0, static_cast<int>(points.rows()), 0);
}

int KdTree::build(int begin, int end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  nodes_[static_cast<std::size_t>(id)].begin = begin;
  nodes_[static_cast<std::size_t>(id)].end = end;
  if (end - begin <= kLeafSize) return id;

  // Split along the widest extent.
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (int i = begin; i < end; ++i) {
    const Vec3 p = points_.row(order_[static_cast<std::size_t>(i)]).transpose();
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  int axis;
  (hi - lo).maxCoeff(&axis);
  if (hi(axis) - lo(axis) <= 0.0) return id;  // all points coincide
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](Eigen::Index a, Eigen::Index b) { return points_(a, axis) < points_(b, axis); });
  const double split = points_(order_[static_cast<std::size_t>(mid)], axis);
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  Node& n = nodes_[static_cast<std::size_t>(id)];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

void KdTree::search(int id, const Vec3& q, int k, std::vector<Hit>& best) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  auto worst = [&] { return static_cast<int>(best.size()) < k ? std::numeric_limits<double>::infinity() : best.back().distance; };
  if (n.axis < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      const Eigen::Index idx = order_[static_cast<std::size_t>(i)];
      const double d = (points_.row(idx).transpose() - q).norm();
      if (d < worst()) {
        Hit h{idx, d};
        auto pos = std::upper_bound(best.begin(), best.end(), h, [](const Hit& a, const Hit& b) {
          return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
        });
        best.insert(pos, h);
        if (static_cast<int>(best.size()) > k) best.pop_back();
      }
    }
    return;
  }
  const double diff = q(n.axis) - n.split;
  const int first = diff < 0.0 ? n.left : n.right;
  const int second = diff < 0.0 ? n.right : n.left;
  search(first, q, k, best);
  if (std::abs(diff) <= worst()) search(second, q, k, best);
}

KdTree::Hit KdTree::nearest(const Vec3& q) const { return k_nearest(q, 1).front(); }

std::vector<KdTree::Hit> KdTree::k_nearest(const Vec3& q, int k) const {
  if (points_.rows() == 0) throw Error("KdTree: query on an empty tree");
  if (k < 1) throw Error("KdTree: k must be positive");
  std::vector<Hit> best;
  best.reserve(static_cast<std::size_t>(k) + 1);
  search(0, q, k, best);
  return best;
}

}  // namespace stereops
