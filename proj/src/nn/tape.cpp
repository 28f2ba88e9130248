#include <stdexcept>

#include "helioflux/nn.hpp"

namespace helioflux::nn {

Param& ParamStore::add(const std::string& name, Mat init) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
  Param p;
  p.name = name;
  p.grad = Mat::Zero(init.rows(), init.cols());
  p.m = Mat::Zero(init.rows(), init.cols());
  p.v = Mat::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return params_[it->second];
}

const Param& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return params_[it->second];
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

Var Tape::constant(Mat value) {
  nodes_.push_back({std::move(value), {}, {}, nullptr, false});
  return {static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Param& p) {
  nodes_.push_back({p.value, {}, {}, &p, record_});
  return {static_cast<int>(nodes_.size() - 1)};
}

Var Tape::push(Mat value, std::function<void(const Mat&)> backward, bool needs_grad) {
  const bool keep = record_ && needs_grad;
  nodes_.push_back(
      {std::move(value), {}, keep ? std::move(backward) : std::function<void(const Mat&)>{}, nullptr, keep});
  return {static_cast<int>(nodes_.size() - 1)};
}

Mat& Tape::grad(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!record_) throw std::logic_error("backward on a non-recording tape");
  if (value(loss).size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  grad(loss)(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(n.grad);
    if (n.param) n.param->grad += n.grad;
  }
}

}  // namespace helioflux::nn
