#pragma once

#include "stereops/common.hpp"

#include <vector>

namespace stereops {

/// Static 3-d tree over the rows of an N x 3 matrix.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const Matrix& points);

  struct Hit {
    Eigen::Index index = -1;
    double distance = 0.0;
  };

  /// Throws on an empty tree.
  Hit nearest(const Vec3& q) const;
  /// The k closest points, nearest first.
  std::vector<Hit> k_nearest(const Vec3& q, int k) const;

  Eigen::Index size() const { return points_.rows(); }
  const Matrix& points() const { return points_; }

 private:
  struct Node {
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;
  };
  int build(int begin, int end, int depth);
  void search(int node, const Vec3& q, int k, std::vector<Hit>& best) const;

  Matrix points_;
  std::vector<Eigen::Index> order_;
  std::vector<Node> nodes_;
};

}  // namespace stereops
