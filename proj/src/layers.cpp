#include "cntf/layers.hpp"

namespace cntf {

GruParams add_gru(ParameterStore& store, const std::string& prefix, int input_dim, int hidden_dim,
                  double scale, Rng& rng) {
  GruParams g;
  g.w_r = store.add_uniform(prefix + ".w_r", hidden_dim, input_dim, scale, rng);
  g.w_z = store.add_uniform(prefix + ".w_z", hidden_dim, input_dim, scale, rng);
  g.w_n = store.add_uniform(prefix + ".w_n", hidden_dim, input_dim, scale, rng);
  g.u_r = store.add_uniform(prefix + ".u_r", hidden_dim, hidden_dim, scale, rng);
  g.u_z = store.add_uniform(prefix + ".u_z", hidden_dim, hidden_dim, scale, rng);
  g.u_n = store.add_uniform(prefix + ".u_n", hidden_dim, hidden_dim, scale, rng);
  g.b_r = store.add_uniform(prefix + ".b_r", hidden_dim, 1, scale, rng);
  g.b_z = store.add_constant(prefix + ".b_z", hidden_dim, 1, 0.0);
  g.b_in = store.add_uniform(prefix + ".b_in", hidden_dim, 1, scale, rng);
  g.b_hn = store.add_uniform(prefix + ".b_hn", hidden_dim, 1, scale, rng);
  return g;
}

Var gru_cell(Binder& p, const GruParams& gru, Var x, Var h) {
  Var r = ag::sigmoid(ag::add(ag::add(ag::matmul(p[gru.w_r], x), ag::matmul(p[gru.u_r], h)), p[gru.b_r]));
  Var z = ag::sigmoid(ag::add(ag::add(ag::matmul(p[gru.w_z], x), ag::matmul(p[gru.u_z], h)), p[gru.b_z]));
  Var hn = ag::add(ag::matmul(p[gru.u_n], h), p[gru.b_hn]);
  Var n = ag::tanh(ag::add(ag::add(ag::matmul(p[gru.w_n], x), p[gru.b_in]), ag::cwise_mul(r, hn)));
  return ag::add(ag::cwise_mul(ag::one_minus(z), n), ag::cwise_mul(z, h));
}

Var affine(Binder& p, int weight, int bias, Var x) { return ag::add(ag::matmul(p[weight], x), p[bias]); }

}  // namespace cntf
