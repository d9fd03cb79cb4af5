#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace hart {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;   // accumulated by Tape::backward for leaves
  bool requires_grad = false;
  bool interior = false;      // produced by a recorded op on some tape
};

// Dense f64 tensor, row-major. Copies are shallow (shared storage); value
// semantics at the data level are obtained with clone().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::size_t rank() const { return d_->shape.size(); }
  std::size_t size() const { return d_->values.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape[i]; }

  double* data() { return d_->values.data(); }
  const double* data() const { return d_->values.data(); }
  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& values() const { return d_->values; }

  double item() const;  // scalar tensors only

  double& at(std::size_t i) { return d_->values[i]; }
  double at(std::size_t i) const { return d_->values[i]; }
  // row-major accessors for the common ranks
  double& at(std::size_t i, std::size_t j) { return d_->values[i * d_->shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return d_->values[i * d_->shape[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return d_->values[(i * d_->shape[1] + j) * d_->shape[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return d_->values[(i * d_->shape[1] + j) * d_->shape[2] + k];
  }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool v) { d_->requires_grad = v; }
  bool is_interior() const { return d_->interior; }
  void mark_interior() { d_->interior = true; }

  // Leaf gradient, sized on first access.
  std::vector<double>& grad();
  const std::vector<double>& grad() const { return d_->grad; }
  void zero_grad();

  Tensor clone() const;  // deep copy, keeps requires_grad, fresh grad

  TensorData* node() const { return d_.get(); }
  const std::shared_ptr<TensorData>& holder() const { return d_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
};

// Per-backward-pass adjoint buffers. Interior adjoints live only here;
// leaves get the result added into Tensor::grad when the pass finishes.
class GradStore {
 public:
  std::vector<double>& of(const Tensor& t);
  const std::vector<double>* find(const Tensor& t) const;

  void flush_leaves();

 private:
  struct Entry {
    std::shared_ptr<TensorData> keep;
    std::vector<double> adj;
  };
  std::unordered_map<const TensorData*, Entry> entries_;
};

// Ordered record of executed operations. Rebuilt every forward pass.
// A tape and the tensors recorded on it are confined to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void(GradStore&)> backward_fn) {
    entries_.push_back(std::move(backward_fn));
  }

  // Seeds d(loss)/d(loss) = 1 and replays entries in reverse execution
  // order. Leaf grads accumulate additively across calls.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  static Tape* current();

 private:
  friend class TapeScope;
  std::vector<std::function<void(GradStore&)>> entries_;
};

// Activates a tape for the current thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

}  // namespace hart
