#pragma once

#include "stereops/common.hpp"

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

namespace stereops::diff {

class Tape;

/// Trainable tensor that outlives any single tape. Gradients from every tape
/// the parameter is registered on accumulate into `grad` until zeroed.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Matrix value);

  void zero_grad();
  Eigen::Index size() const { return value.size(); }

  std::string name;
  Matrix value;
  Matrix grad;
};

/// Handle to a node on a tape. Cheap to copy; becomes stale when the tape is
/// cleared.
class Value {
 public:
  Value() = default;

  Eigen::Index rows() const;
  Eigen::Index cols() const;
  const Matrix& data() const;
  /// Gradient accumulated by the last backward pass (zeros if unreached).
  Matrix grad() const;
  /// Data of a 1x1 value.
  double item() const;

  bool valid() const;
  Tape& tape() const;
  int index() const { return index_; }

 private:
  friend class Tape;
  Value(Tape* tape, int index, std::uint64_t generation)
      : tape_(tape), index_(index), generation_(generation) {}

  Tape* tape_ = nullptr;
  int index_ = -1;
  std::uint64_t generation_ = 0;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Append-only record of a computation, replayed in reverse by backward().
class Tape {
 public:
  /// Receives the gradient of the node being processed and pushes
  /// contributions to its parents through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value constant(Matrix data);
  Value constant(double x);
  /// Differentiable input that is not a Parameter; its grad is readable after
  /// backward and accumulates across backward passes.
  Value leaf(Matrix data);
  Value param(Parameter& p);

  /// Populates gradients of everything reachable from the scalar `loss`.
  void backward(const Value& loss);

  /// Drops every node; all outstanding Values become stale.
  void clear();
  std::size_t size() const { return nodes_.size(); }
  std::uint64_t generation() const { return generation_; }

  // Op-author interface.
  Value record(Matrix data, std::initializer_list<Value> parents, BackwardFn fn);
  Value record(Matrix data, const std::vector<Value>& parents, BackwardFn fn);
  const Matrix& data_at(int index) const { return nodes_[index].data; }
  bool requires_grad(int index) const { return nodes_[index].requires_grad; }
  void accumulate(int index, const Matrix& g);
  void check(const Value& v) const;

 private:
  friend class Value;

  struct Node {
    Matrix data;
    Matrix grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool is_leaf = true;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Value push(Node node);

  std::vector<Node> nodes_;
  std::uint64_t generation_ = 1;
};

}  // namespace stereops::diff
