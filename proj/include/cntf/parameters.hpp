#pragma once

#include "cntf/autograd.hpp"

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace cntf {

using ag::Matrix;
using ag::Var;
using Rng = std::mt19937_64;

// Named trainable tensors, addressed by the index returned from add().
class ParameterStore {
 public:
  int add(const std::string& name, Matrix value, bool sparse_rows = false);
  // Uniform in [-scale, scale].
  int add_uniform(const std::string& name, int rows, int cols, double scale, Rng& rng, bool sparse_rows = false);
  int add_constant(const std::string& name, int rows, int cols, double value);

  int index(const std::string& name) const;
  bool has(const std::string& name) const { return index_.contains(name); }
  Matrix& value(int i) { return values_.at(static_cast<std::size_t>(i)); }
  const Matrix& value(int i) const { return values_.at(static_cast<std::size_t>(i)); }
  Matrix& value(const std::string& name) { return value(index(name)); }
  const std::string& name(int i) const { return names_.at(static_cast<std::size_t>(i)); }
  bool sparse(int i) const { return sparse_.at(static_cast<std::size_t>(i)); }
  int size() const { return static_cast<int>(values_.size()); }
  std::size_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::vector<bool> sparse_;
  std::unordered_map<std::string, int> index_;
};

// Dense gradient buffers shaped like a ParameterStore.
struct Gradients {
  std::vector<Matrix> tensors;

  explicit Gradients(const ParameterStore& store);
  void zero();
  void add(const Gradients& other);
  void scale(double s);
  double norm() const;
  bool finite() const;
};

// Lazily places parameters into one graph as external leaves.
class Binder {
 public:
  Binder(ag::Graph& graph, const ParameterStore& store);

  Var operator[](int index);
  ag::Graph& graph() { return graph_; }
  const ParameterStore& store() const { return store_; }
  // Adds every gradient that reached a bound parameter into grads.
  void collect(Gradients& grads) const;

 private:
  ag::Graph& graph_;
  const ParameterStore& store_;
  std::vector<Var> bound_;
};

}  // namespace cntf
