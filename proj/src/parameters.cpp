#include "cntf/parameters.hpp"

#include <cmath>
#include <stdexcept>

namespace cntf {

int ParameterStore::add(const std::string& name, Matrix value, bool sparse_rows) {
  if (index_.contains(name)) throw std::logic_error("duplicate parameter '" + name + "'");
  const int id = static_cast<int>(values_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
  sparse_.push_back(sparse_rows);
  index_.emplace(name, id);
  return id;
}

int ParameterStore::add_uniform(const std::string& name, int rows, int cols, double scale, Rng& rng,
                                bool sparse_rows) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Matrix m(rows, cols);
  // Column-major fill order is part of the seeded-init contract.
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
  }
  return add(name, std::move(m), sparse_rows);
}

int ParameterStore::add_constant(const std::string& name, int rows, int cols, double value) {
  return add(name, Matrix::Constant(rows, cols, value));
}

int ParameterStore::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

Gradients::Gradients(const ParameterStore& store) {
  tensors.reserve(static_cast<std::size_t>(store.size()));
  for (int i = 0; i < store.size(); ++i) {
    tensors.push_back(Matrix::Zero(store.value(i).rows(), store.value(i).cols()));
  }
}

void Gradients::zero() {
  for (auto& t : tensors) t.setZero();
}

void Gradients::add(const Gradients& other) {
  for (std::size_t i = 0; i < tensors.size(); ++i) tensors[i] += other.tensors[i];
}

void Gradients::scale(double s) {
  for (auto& t : tensors) t *= s;
}

double Gradients::norm() const {
  double sq = 0.0;
  for (const auto& t : tensors) sq += t.squaredNorm();
  return std::sqrt(sq);
}

bool Gradients::finite() const {
  for (const auto& t : tensors) {
    if (!t.allFinite()) return false;
  }
  return true;
}

Binder::Binder(ag::Graph& graph, const ParameterStore& store)
    : graph_(graph), store_(store), bound_(static_cast<std::size_t>(store.size())) {}

Var Binder::operator[](int index) {
  Var& v = bound_.at(static_cast<std::size_t>(index));
  if (!v.valid()) v = graph_.external(store_.value(index), store_.sparse(index));
  return v;
}

void Binder::collect(Gradients& grads) const {
  for (std::size_t i = 0; i < bound_.size(); ++i) {
    const Var& v = bound_[i];
    if (!v.valid() || !graph_.requires_grad(v.id)) continue;
    if (graph_.is_sparse(v)) {
      const Matrix& dense = graph_.grad_ref(v.id);
      if (dense.size() != 0) grads.tensors[i] += dense;
      for (const auto& [row, g] : graph_.sparse_grad(v)) grads.tensors[i].row(row) += g;
    } else {
      const Matrix& g = graph_.grad_ref(v.id);
      if (g.size() != 0) grads.tensors[i] += g;
    }
  }
}

}  // namespace cntf
