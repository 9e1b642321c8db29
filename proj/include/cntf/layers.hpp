#pragma once

#include "cntf/parameters.hpp"

#include <string>

namespace cntf {

// r = sig(W_r x + U_r h + b_r), z = sig(W_z x + U_z h + b_z),
// n = tanh(W_n x + b_in + r * (U_n h + b_hn)), h' = (1 - z) * n + z * h.
struct GruParams {
  int w_r = -1, w_z = -1, w_n = -1;
  int u_r = -1, u_z = -1, u_n = -1;
  int b_r = -1, b_z = -1, b_in = -1, b_hn = -1;
};

// Update-gate bias starts at zero; everything else uniform.
GruParams add_gru(ParameterStore& store, const std::string& prefix, int input_dim, int hidden_dim,
                  double scale, Rng& rng);

// x and h are column vectors.
Var gru_cell(Binder& p, const GruParams& gru, Var x, Var h);

// W x + b for a column vector x.
Var affine(Binder& p, int weight, int bias, Var x);

}  // namespace cntf
