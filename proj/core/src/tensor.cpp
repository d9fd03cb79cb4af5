#include "hart/tensor.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hart {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->values.assign(shape_numel(d->shape), 0.0);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.values()) v = value;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) + " needs " +
                                std::to_string(shape_numel(shape)) + " values, got " +
                                std::to_string(values.size()));
  }
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::runtime_error("Tensor::item: tensor of shape " + shape_str(shape()) +
                             " is not scalar");
  }
  return d_->values[0];
}

std::vector<double>& Tensor::grad() {
  if (d_->grad.size() != d_->values.size()) d_->grad.assign(d_->values.size(), 0.0);
  return d_->grad;
}

void Tensor::zero_grad() { d_->grad.assign(d_->values.size(), 0.0); }

Tensor Tensor::clone() const {
  auto d = std::make_shared<TensorData>();
  d->shape = d_->shape;
  d->values = d_->values;
  d->requires_grad = d_->requires_grad;
  return Tensor(std::move(d));
}

std::vector<double>& GradStore::of(const Tensor& t) {
  auto it = entries_.find(t.node());
  if (it == entries_.end()) {
    Entry e;
    e.keep = t.holder();
    e.adj.assign(t.size(), 0.0);
    it = entries_.emplace(t.node(), std::move(e)).first;
  }
  return it->second.adj;
}

const std::vector<double>* GradStore::find(const Tensor& t) const {
  auto it = entries_.find(t.node());
  return it == entries_.end() ? nullptr : &it->second.adj;
}

void GradStore::flush_leaves() {
  for (auto& [ptr, e] : entries_) {
    TensorData* td = e.keep.get();
    if (!td->requires_grad || td->interior) continue;
    if (td->grad.size() != td->values.size()) td->grad.assign(td->values.size(), 0.0);
    for (std::size_t i = 0; i < e.adj.size(); ++i) td->grad[i] += e.adj[i];
  }
}

namespace {
thread_local Tape* g_current_tape = nullptr;
}

Tape* Tape::current() { return g_current_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_current_tape) { g_current_tape = &tape; }

TapeScope::~TapeScope() { g_current_tape = prev_; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::runtime_error("Tape::backward: loss must be a scalar tensor, got shape " +
                             (loss.defined() ? shape_str(loss.shape()) : std::string("<empty>")));
  }
  GradStore store;
  store.of(loss)[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)(store);
  store.flush_leaves();
}

}  // namespace hart
