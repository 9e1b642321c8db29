#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Graph records every operation applied to its Vars. Column vectors are
// (n x 1) matrices; banks of position states are (positions x hidden) with one
// row per position. Calling backward() on a 1x1 Var propagates gradients to
// every leaf and parameter node that requires them.

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <span>
#include <vector>

namespace cntf::ag {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Graph;

struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Graph {
 public:
  // With recording off no backward closures are stored; used for inference.
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  // Leaf whose gradient is kept and readable through grad().
  Var leaf(Matrix value);
  // Leaf that reads `value` in place; the referenced matrix must outlive the graph.
  // With sparse_rows, row-gather gradients are recorded per row instead of densely.
  Var external(const Matrix& value, bool sparse_rows = false);

  const Matrix& value(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool recording() const { return record_; }

  // Dense gradient of a node; zero matrix when nothing flowed into it.
  Matrix grad(Var v) const;
  // Row-sparse gradient entries of an external sparse leaf.
  const std::map<int, Eigen::RowVectorXd>& sparse_grad(Var v) const {
    return nodes_[v.id].row_grads;
  }
  bool is_sparse(Var v) const { return nodes_[v.id].sparse; }

  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Internal API used by operators.
  using Backward = std::function<void(Graph&, int self)>;
  Var push(Matrix value, bool requires_grad, Backward backward);
  void accumulate(int id, const Matrix& g);
  void accumulate_row(int id, int row, const Eigen::RowVectorXd& g);
  const Matrix& grad_ref(int id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    bool sparse = false;
    std::map<int, Eigen::RowVectorXd> row_grads;
    Backward backward;
  };

  bool record_;
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return graph->value(id); }

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cwise_mul(Var a, Var b);
// Adds column vector b (k x 1) to every row of a (n x k).
Var add_row_broadcast(Var a, Var b);
Var scale(Var a, double s);
// 1 - a, elementwise.
Var one_minus(Var a);
// s (1 x 1) times every entry of a.
Var scalar_mul(Var s, Var a);
Var tanh(Var a);
Var sigmoid(Var a);
// tanh approximation of GELU.
Var gelu(Var a);
Var log(Var a);
// Softmax over all entries of a column vector.
Var softmax(Var a);
Var softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(Var table, std::span<const int> ids);
// Mean over rows, returned as a column vector (cols x 1).
Var mean_rows(Var a);
Var sum(Var a);
// Element i of a column vector, as 1 x 1.
Var pick(Var a, int i);
// out[index[i]] += a[i]; out has `size` rows.
Var scatter_add(Var a, std::span<const int> index, int size);

}  // namespace cntf::ag
