#include "cntf/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace cntf::ag {

namespace {

void require_same_graph(Var a, Var b) {
  if (a.graph != b.graph) throw std::logic_error("autograd: operands from different graphs");
}

void require_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string("autograd: shape mismatch in ") + op);
  }
}

}  // namespace

Var Graph::push(Matrix value, bool requires_grad, Backward backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = record_ && requires_grad;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Graph::leaf(Matrix value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = record_;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::external(const Matrix& value, bool sparse_rows) {
  Node node;
  node.external = &value;
  node.requires_grad = record_;
  node.sparse = sparse_rows;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Graph::value(int id) const {
  const Node& n = nodes_[id];
  return n.external != nullptr ? *n.external : n.value;
}

Matrix Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  const Matrix& val = value(v.id);
  Matrix g = n.grad.size() == 0 ? Matrix::Zero(val.rows(), val.cols()) : n.grad;
  for (const auto& [row, rg] : n.row_grads) g.row(row) += rg;
  return g;
}

void Graph::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Graph::accumulate_row(int id, int row, const Eigen::RowVectorXd& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.sparse) {
    auto [it, inserted] = n.row_grads.try_emplace(row, g);
    if (!inserted) it->second += g;
    return;
  }
  if (n.grad.size() == 0) {
    const Matrix& v = value(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  n.grad.row(row) += g;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw std::logic_error("autograd: loss from another graph");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("autograd: backward needs a 1x1 loss");
  }
  if (!nodes_[loss.id].requires_grad) return;
  accumulate(loss.id, Matrix::Ones(1, 1));
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
}

// Operators. Each backward closure reads the upstream gradient from its own
// node and accumulates into its inputs.

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph;
  if (a.cols() != b.rows()) throw std::invalid_argument("autograd: matmul inner dimension mismatch");
  Matrix out = a.value() * b.value();
  bool rg = g.requires_grad(a.id) || g.requires_grad(b.id);
  return g.push(std::move(out), rg, [ai = a.id, bi = b.id](Graph& gr, int self) {
    const Matrix& up = gr.grad_ref(self);
    if (gr.requires_grad(ai)) gr.accumulate(ai, up * gr.value(bi).transpose());
    if (gr.requires_grad(bi)) gr.accumulate(bi, gr.value(ai).transpose() * up);
  });
}

Var transpose(Var a) {
  Graph& g = *a.graph;
  return g.push(a.value().transpose(), g.requires_grad(a.id), [ai = a.id](Graph& gr, int self) {
    gr.accumulate(ai, gr.grad_ref(self).transpose());
  });
}

Var add(Var a, Var b) {
  require_same_graph(a, b);
  require_shape(a.value(), b.value(), "add");
  Graph& g = *a.graph;
  Matrix out = a.value() + b.value();
  bool rg = g.requires_grad(a.id) || g.requires_grad(b.id);
  return g.push(std::move(out), rg, [ai = a.id, bi = b.id](Graph& gr, int self) {
    gr.accumulate(ai, gr.grad_ref(self));
    gr.accumulate(bi, gr.grad_ref(self));
  });
}

Var sub(Var a, Var b) {
  require_same_graph(a, b);
  require_shape(a.value(), b.value(), "sub");
  Graph& g = *a.graph;
  Matrix out = a.value() - b.value();
  bool rg = g.requires_grad(a.id) || g.requires_grad(b.id);
  return g.push(std::move(out), rg, [ai = a.id, bi = b.id](Graph& gr, int self) {
    gr.accumulate(ai, gr.grad_ref(self));
    gr.accumulate(bi, -gr.grad_ref(self));
  });
}

Var cwise_mul(Var a, Var b) {
  require_same_graph(a, b);
  require_shape(a.value(), b.value(), "cwise_mul");
  Graph& g = *a.graph;
  Matrix out = a.value().cwiseProduct(b.value());
  bool rg = g.requires_grad(a.id) || g.requires_grad(b.id);
  return g.push(std::move(out), rg, [ai = a.id, bi = b.id](Graph& gr, int self) {
    const Matrix& up = gr.grad_ref(self);
    if (gr.requires_grad(ai)) gr.accumulate(ai, up.cwiseProduct(gr.value(bi)));
    if (gr.requires_grad(bi)) gr.accumulate(bi, up.cwiseProduct(gr.value(ai)));
  });
}

Var add_row_broadcast(Var a, Var b) {
  require_same_graph(a, b);
  if (b.cols() != 1 || b.rows() != a.cols()) {
    throw std::invalid_argument("autograd: add_row_broadcast expects a (k x 1) vector");
  }
  Graph& g = *a.graph;
  Matrix out = a.value().rowwise() + b.value().col(0).transpose();
  bool rg = g.requires_grad(a.id) || g.requires_grad(b.id);
  return g.push(std::move(out), rg, [ai = a.id, bi = b.id](Graph& gr, int self) {
    const Matrix& up = gr.grad_ref(self);
    gr.accumulate(ai, up);
    if (gr.requires_grad(bi)) gr.accumulate(bi, up.colwise().sum().transpose());
  });
}

Var scale(Var a, double s) {
  Graph& g = *a.graph;
  return g.push(a.value() * s, g.requires_grad(a.id), [ai = a.id, s](Graph& gr, int self) {
    gr.accumulate(ai, gr.grad_ref(self) * s);
  });
}

Var one_minus(Var a) {
  Graph& g = *a.graph;
  Matrix out = (1.0 - a.value().array()).matrix();
  return g.push(std::move(out), g.requires_grad(a.id), [ai = a.id](Graph& gr, int self) {
    gr.accumulate(ai, -gr.grad_ref(self));
  });
}

Var scalar_mul(Var s, Var a) {
  require_same_graph(s, a);
  if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("autograd: scalar_mul expects 1x1");
  Graph& g = *a.graph;
  Matrix out = a.value() * s.scalar();
  bool rg = g.requires_grad(s.id) || g.requires_grad(a.id);
  return g.push(std::move(out), rg, [si = s.id, ai = a.id](Graph& gr, int self) {
    const Matrix& up = gr.grad_ref(self);
    if (gr.requires_grad(si)) {
      gr.accumulate(si, Matrix::Constant(1, 1, up.cwiseProduct(gr.value(ai)).sum()));
    }
    if (gr.requires_grad(ai)) gr.accumulate(ai, up * gr.value(si)(0, 0));
  });
}

Var tanh(Var a) {
  Graph& g = *a.graph;
  Matrix out = a.value().array().tanh().matrix();
  return g.push(std::move(out), g.requires_grad(a.id), [ai = a.id](Graph& gr, int self) {
    const Matrix& y = gr.value(self);
    gr.accumulate(ai, gr.grad_ref(self).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var sigmoid(Var a) {
  Graph& g = *a.graph;
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return g.push(std::move(out), g.requires_grad(a.id), [ai = a.id](Graph& gr, int self) {
    const Matrix& y = gr.value(self);
    gr.accumulate(ai, gr.grad_ref(self).cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
  });
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluK = 0.044715;

Var gelu(Var a) {
  constexpr double kC = kGeluC;
  constexpr double kK = kGeluK;
  Graph& g = *a.graph;
  const auto x = a.value().array();
  Matrix out = (0.5 * x * (1.0 + (kC * (x + kK * x.cube())).tanh())).matrix();
  return g.push(std::move(out), g.requires_grad(a.id), [ai = a.id](Graph& gr, int self) {
    const Eigen::ArrayXXd x = gr.value(ai).array();
    const Eigen::ArrayXXd t = (kGeluC * (x + kGeluK * x.cube())).tanh();
    const Eigen::ArrayXXd d =
        0.5 * (1.0 + t) + 0.5 * x * (1.0 - t.square()) * kGeluC * (1.0 + 3.0 * kGeluK * x.square());
    gr.accumulate(ai, (gr.grad_ref(self).array() * d).matrix());
  });
}

Var log(Var a) {
  Graph& g = *a.graph;
  Matrix out = a.value().array().log().matrix();
  return g.push(std::move(out), g.requires_grad(a.id), [ai = a.id](Graph& gr, int self) {
    gr.accumulate(ai, gr.grad_ref(self).cwiseQuotient(gr.value(ai)));
  });
}

namespace {

Vector stable_softmax(const Eigen::Ref<const Vector>& x) {
  Vector e = (x.array() - x.maxCoeff()).exp().matrix();
  return e / e.sum();
}

}  // namespace

Var softmax(Var a) {
  if (a.cols() != 1 || a.rows() == 0) throw std::invalid_argument("autograd: softmax expects a non-empty column");
  Graph& g = *a.graph;
  Matrix out = stable_softmax(a.value().col(0));
  return g.push(std::move(out), g.requires_grad(a.id), [ai = a.id](Graph& gr, int self) {
    const Matrix& y = gr.value(self);
    const Matrix& up = gr.grad_ref(self);
    double dot = up.cwiseProduct(y).sum();
    gr.accumulate(ai, (y.array() * (up.array() - dot)).matrix());
  });
}

Var softmax_rows(Var a) {
  Graph& g = *a.graph;
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    out.row(r) = stable_softmax(a.value().row(r).transpose()).transpose();
  }
  return g.push(std::move(out), g.requires_grad(a.id), [ai = a.id](Graph& gr, int self) {
    const Matrix& y = gr.value(self);
    const Matrix& up = gr.grad_ref(self);
    Matrix d(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      double dot = up.row(r).dot(y.row(r));
      d.row(r) = (y.row(r).array() * (up.row(r).array() - dot)).matrix();
    }
    gr.accumulate(ai, d);
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  require_same_graph(x, gain);
  require_same_graph(x, bias);
  Graph& g = *x.graph;
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.rows();
  const Eigen::Index k = xv.cols();
  if (gain.rows() != k || bias.rows() != k) throw std::invalid_argument("autograd: layer_norm gain/bias size");
  Matrix xhat(n, k);
  Vector inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double mean = xv.row(r).mean();
    auto centered = xv.row(r).array() - mean;
    double var = centered.square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (centered * inv_std(r)).matrix();
  }
  Matrix out = (xhat.array().rowwise() * gain.value().col(0).transpose().array()).matrix();
  out.rowwise() += bias.value().col(0).transpose();
  bool rg = g.requires_grad(x.id) || g.requires_grad(gain.id) || g.requires_grad(bias.id);
  return g.push(std::move(out), rg,
                [xi = x.id, gi = gain.id, bi = bias.id, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Graph& gr, int self) {
                  const Matrix& up = gr.grad_ref(self);
                  if (gr.requires_grad(bi)) gr.accumulate(bi, up.colwise().sum().transpose());
                  if (gr.requires_grad(gi)) {
                    gr.accumulate(gi, up.cwiseProduct(xhat).colwise().sum().transpose());
                  }
                  if (gr.requires_grad(xi)) {
                    const auto gamma = gr.value(gi).col(0).transpose().array();
                    const double k = static_cast<double>(xhat.cols());
                    Matrix dx(xhat.rows(), xhat.cols());
                    for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                      Eigen::RowVectorXd dxhat = (up.row(r).array() * gamma).matrix();
                      double m1 = dxhat.sum();
                      double m2 = dxhat.dot(xhat.row(r));
                      dx.row(r) = (inv_std(r) / k) *
                                  (k * dxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
                    }
                    gr.accumulate(xi, dx);
                  }
                });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("autograd: concat_rows of nothing");
  Graph& g = *parts[0].graph;
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  bool rg = false;
  for (const Var& p : parts) {
    if (p.graph != &g) throw std::logic_error("autograd: operands from different graphs");
    if (p.cols() != cols) throw std::invalid_argument("autograd: concat_rows column mismatch");
    rows += p.rows();
    rg = rg || g.requires_grad(p.id);
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    ids.push_back(p.id);
  }
  return g.push(std::move(out), rg, [ids = std::move(ids)](Graph& gr, int self) {
    const Matrix& up = gr.grad_ref(self);
    Eigen::Index at = 0;
    for (int id : ids) {
      const Eigen::Index r = gr.value(id).rows();
      if (gr.requires_grad(id)) gr.accumulate(id, up.middleRows(at, r));
      at += r;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("autograd: concat_cols of nothing");
  Graph& g = *parts[0].graph;
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.graph != &g) throw std::logic_error("autograd: operands from different graphs");
    if (p.rows() != rows) throw std::invalid_argument("autograd: concat_cols row mismatch");
    cols += p.cols();
    rg = rg || g.requires_grad(p.id);
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    ids.push_back(p.id);
  }
  return g.push(std::move(out), rg, [ids = std::move(ids)](Graph& gr, int self) {
    const Matrix& up = gr.grad_ref(self);
    Eigen::Index at = 0;
    for (int id : ids) {
      const Eigen::Index c = gr.value(id).cols();
      if (gr.requires_grad(id)) gr.accumulate(id, up.middleCols(at, c));
      at += c;
    }
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  Graph& g = *table.graph;
  const Matrix& t = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows()) throw std::out_of_range("autograd: gather_rows index");
    out.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
  }
  return g.push(std::move(out), g.requires_grad(table.id),
                [ti = table.id, ids = std::vector<int>(ids.begin(), ids.end())](Graph& gr, int self) {
                  const Matrix& up = gr.grad_ref(self);
                  for (std::size_t i = 0; i < ids.size(); ++i) {
                    gr.accumulate_row(ti, ids[i], up.row(static_cast<Eigen::Index>(i)));
                  }
                });
}

Var mean_rows(Var a) {
  if (a.rows() == 0) throw std::invalid_argument("autograd: mean_rows of empty matrix");
  Graph& g = *a.graph;
  Matrix out = a.value().colwise().mean().transpose();
  return g.push(std::move(out), g.requires_grad(a.id), [ai = a.id](Graph& gr, int self) {
    const Matrix& up = gr.grad_ref(self);
    const Eigen::Index n = gr.value(ai).rows();
    Matrix d = up.transpose().replicate(n, 1) / static_cast<double>(n);
    gr.accumulate(ai, d);
  });
}

Var sum(Var a) {
  Graph& g = *a.graph;
  return g.push(Matrix::Constant(1, 1, a.value().sum()), g.requires_grad(a.id),
                [ai = a.id](Graph& gr, int self) {
                  const Matrix& v = gr.value(ai);
                  gr.accumulate(ai, Matrix::Constant(v.rows(), v.cols(), gr.grad_ref(self)(0, 0)));
                });
}

Var pick(Var a, int i) {
  if (a.cols() != 1 || i < 0 || i >= a.rows()) throw std::out_of_range("autograd: pick index");
  Graph& g = *a.graph;
  return g.push(Matrix::Constant(1, 1, a.value()(i, 0)), g.requires_grad(a.id),
                [ai = a.id, i](Graph& gr, int self) {
                  Matrix d = Matrix::Zero(gr.value(ai).rows(), 1);
                  d(i, 0) = gr.grad_ref(self)(0, 0);
                  gr.accumulate(ai, d);
                });
}

Var scatter_add(Var a, std::span<const int> index, int size) {
  if (a.cols() != 1 || static_cast<std::size_t>(a.rows()) != index.size()) {
    throw std::invalid_argument("autograd: scatter_add expects one index per row");
  }
  Graph& g = *a.graph;
  Matrix out = Matrix::Zero(size, 1);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= size) throw std::out_of_range("autograd: scatter_add index");
    out(index[i], 0) += a.value()(static_cast<Eigen::Index>(i), 0);
  }
  return g.push(std::move(out), g.requires_grad(a.id),
                [ai = a.id, idx = std::vector<int>(index.begin(), index.end())](Graph& gr, int self) {
                  const Matrix& up = gr.grad_ref(self);
                  Matrix d(static_cast<Eigen::Index>(idx.size()), 1);
                  for (std::size_t i = 0; i < idx.size(); ++i) d(static_cast<Eigen::Index>(i), 0) = up(idx[i], 0);
                  gr.accumulate(ai, d);
                });
}

}  // namespace cntf::ag
