#pragma once

// Multi-hop attention over state banks with forget/add updates of the
// mutable states, and query-updating attention over triple embeddings.

#include "cntf/layers.hpp"
#include "cntf/triples.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace cntf {

// Parameters of one attention round.
struct HopParams {
  int v1 = -1;  // hidden x 1
  int w1 = -1;  // hidden x hidden, applied to the query
  int w2 = -1;  // hidden x hidden, applied to each D_S row
  int w3 = -1;  // forget projection
  int w4 = -1;  // add projection
  GruParams update;  // s~ = GRU(context, query)
};

std::vector<HopParams> add_hops(ParameterStore& store, const std::string& prefix, int hidden_dim, int count,
                                double scale, Rng& rng);

struct HopOutput {
  Var alpha;    // positions x 1
  Var context;  // hidden x 1
};

// e_j = v1' tanh(W1 q + W2 ds_j), alpha = softmax(e), c = sum_j alpha_j dh_j.
HopOutput attend_hop(Binder& p, const HopParams& hop, Var query, Var ds, Var dh);

// Forget/add update of every D_S row, scaled by that row's attention weight.
Var update_state(Binder& p, const HopParams& hop, Var ds, Var alpha, Var context, Var query);

struct HopTrace {
  Eigen::VectorXd alpha;
  double context_norm = 0.0;
};

struct MultiHopOutput {
  Var context;  // last round
  Var alpha;    // last round
  Var ds;       // states after every round's update
  std::vector<HopTrace> trace;
};

// The query stays fixed across rounds; each round attends and then updates ds.
MultiHopOutput multi_hop(Binder& p, std::span<const HopParams> hops, Var query, Var ds, Var dh);

struct TripleHopTrace {
  Eigen::VectorXd alpha;
  double context_norm = 0.0;
  double query_norm = 0.0;
};

struct TripleAttentionOutput {
  bool empty = true;
  Var context;  // zero vector when the store is empty
  Var alpha;    // invalid when empty
  Var query;
  std::vector<TripleHopTrace> trace;
};

// alpha = softmax(E q), c = E' alpha, q <- q + c for each round. With topk > 0
// only the k highest-weighted triples of a round are attended in the next.
TripleAttentionOutput triple_attention(ag::Graph& g, Var query, Var triples, int hops, int topk = 0);

// Mean of the knowledge states as query, multi-hop over the dialogue bank;
// returns the final context. The bank passed in is not modified.
Var interactive_context(Binder& p, std::span<const HopParams> hops, Var ds, Var dh, Var knowledge);

nlohmann::json hop_trace_json(const std::vector<HopTrace>& trace);
nlohmann::json triple_trace_json(const std::vector<TripleHopTrace>& trace, const std::vector<Triple>& triples,
                                 std::size_t top_n = 5);

}  // namespace cntf
