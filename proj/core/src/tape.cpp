#include "stereops/diffmath/tape.hpp"

#include <sstream>

namespace stereops::diff {

Parameter::Parameter(std::string name_, Matrix value_)
    : name(std::move(name_)), value(std::move(value_)), grad(Matrix::Zero(value.rows(), value.cols())) {}

void Parameter::zero_grad() { grad.setZero(value.rows(), value.cols()); }

Eigen::Index Value::rows() const { return data().rows(); }
Eigen::Index Value::cols() const { return data().cols(); }

const Matrix& Value::data() const {
  if (!tape_) throw GenerationError("use of an unbound Value");
  tape_->check(*this);
  return tape_->nodes_[index_].data;
}

Matrix Value::grad() const {
  const Matrix& d = data();
  const auto& node = tape_->nodes_[index_];
  if (!node.has_grad) return Matrix::Zero(d.rows(), d.cols());
  return node.grad;
}

double Value::item() const {
  const Matrix& d = data();
  if (d.size() != 1) {
    std::ostringstream os;
    os << "item() on a " << d.rows() << "x" << d.cols() << " value";
    throw ShapeError(os.str());
  }
  return d(0, 0);
}

bool Value::valid() const {
  return tape_ && generation_ == tape_->generation_ && index_ >= 0 &&
         static_cast<std::size_t>(index_) < tape_->nodes_.size();
}

Tape& Value::tape() const {
  if (!tape_) throw GenerationError("use of an unbound Value");
  return *tape_;
}

void Tape::check(const Value& v) const {
  if (v.tape_ != this) throw GenerationError("Value belongs to a different tape");
  if (v.generation_ != generation_)
    throw GenerationError("Value refers to a cleared tape (generation " + std::to_string(v.generation_) +
                          ", current " + std::to_string(generation_) + ")");
}

Value Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Value(this, static_cast<int>(nodes_.size() - 1), generation_);
}

Value Tape::constant(Matrix data) {
  Node n;
  n.data = std::move(data);
  return push(std::move(n));
}

Value Tape::constant(double x) { return constant(Matrix::Constant(1, 1, x)); }

Value Tape::leaf(Matrix data) {
  Node n;
  n.data = std::move(data);
  n.requires_grad = true;
  return push(std::move(n));
}

Value Tape::param(Parameter& p) {
  Node n;
  n.data = p.value;
  n.requires_grad = true;
  n.param = &p;
  return push(std::move(n));
}

Value Tape::record(Matrix data, std::initializer_list<Value> parents, BackwardFn fn) {
  return record(std::move(data), std::vector<Value>(parents), std::move(fn));
}

Value Tape::record(Matrix data, const std::vector<Value>& parents, BackwardFn fn) {
  Node n;
  n.data = std::move(data);
  n.is_leaf = false;
  for (const auto& p : parents) {
    check(p);
    n.requires_grad = n.requires_grad || nodes_[p.index_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

void Tape::accumulate(int index, const Matrix& g) {
  Node& n = nodes_[index];
  if (!n.requires_grad) return;
  if (g.rows() != n.data.rows() || g.cols() != n.data.cols()) {
    std::ostringstream os;
    os << "gradient shape " << g.rows() << "x" << g.cols() << " does not match value shape " << n.data.rows()
       << "x" << n.data.cols();
    throw ShapeError(os.str());
  }
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Value& loss) {
  check(loss);
  const Matrix& ld = nodes_[loss.index_].data;
  if (ld.size() != 1) {
    std::ostringstream os;
    os << "backward() needs a scalar loss, got " << ld.rows() << "x" << ld.cols();
    throw ShapeError(os.str());
  }
  // Interior and parameter nodes start clean; plain leaves keep accumulating.
  for (int i = 0; i <= loss.index_; ++i) {
    Node& n = nodes_[i];
    if (!n.is_leaf || n.param) n.has_grad = false;
  }
  if (!nodes_[loss.index_].requires_grad) return;
  accumulate(loss.index_, Matrix::Ones(1, 1));
  for (int i = loss.index_; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) {
      // Parents always have lower indices, so n.grad is not aliased.
      n.backward(*this, n.grad);
    } else if (n.param) {
      if (n.param->grad.rows() != n.data.rows() || n.param->grad.cols() != n.data.cols())
        n.param->grad.setZero(n.data.rows(), n.data.cols());
      n.param->grad += n.grad;
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  ++generation_;
}

}  // namespace stereops::diff
