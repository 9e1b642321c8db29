#include "cntf/memory_attention.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace cntf {

std::vector<HopParams> add_hops(ParameterStore& store, const std::string& prefix, int hidden_dim, int count,
                                double scale, Rng& rng) {
  std::vector<HopParams> hops;
  for (int r = 0; r < count; ++r) {
    const std::string hp = prefix + ".hop" + std::to_string(r);
    HopParams h;
    h.v1 = store.add_uniform(hp + ".v1", hidden_dim, 1, scale, rng);
    h.w1 = store.add_uniform(hp + ".w1", hidden_dim, hidden_dim, scale, rng);
    h.w2 = store.add_uniform(hp + ".w2", hidden_dim, hidden_dim, scale, rng);
    h.w3 = store.add_uniform(hp + ".w3", hidden_dim, hidden_dim, scale, rng);
    h.w4 = store.add_uniform(hp + ".w4", hidden_dim, hidden_dim, scale, rng);
    h.update = add_gru(store, hp + ".update", hidden_dim, hidden_dim, scale, rng);
    hops.push_back(h);
  }
  return hops;
}

HopOutput attend_hop(Binder& p, const HopParams& hop, Var query, Var ds, Var dh) {
  if (ds.rows() == 0) throw std::invalid_argument("attend_hop: empty bank");
  if (ds.rows() != dh.rows() || ds.cols() != dh.cols()) {
    throw std::invalid_argument("attend_hop: D_S and D_H shapes differ");
  }
  Var projected_query = ag::matmul(p[hop.w1], query);
  Var projected_states = ag::matmul(ds, ag::transpose(p[hop.w2]));
  Var energies = ag::matmul(ag::tanh(ag::add_row_broadcast(projected_states, projected_query)), p[hop.v1]);
  Var alpha = ag::softmax(energies);
  Var context = ag::matmul(ag::transpose(dh), alpha);
  return {alpha, context};
}

Var update_state(Binder& p, const HopParams& hop, Var ds, Var alpha, Var context, Var query) {
  Var intermediate = gru_cell(p, hop.update, context, query);
  Var forget = ag::sigmoid(ag::matmul(p[hop.w3], intermediate));
  Var add = ag::sigmoid(ag::matmul(p[hop.w4], intermediate));
  Var kept = ag::cwise_mul(ds, ag::one_minus(ag::matmul(alpha, ag::transpose(forget))));
  return ag::add(kept, ag::matmul(alpha, ag::transpose(add)));
}

MultiHopOutput multi_hop(Binder& p, std::span<const HopParams> hops, Var query, Var ds, Var dh) {
  if (hops.empty()) throw std::invalid_argument("multi_hop: needs at least one round");
  MultiHopOutput out;
  out.ds = ds;
  for (const HopParams& hop : hops) {
    HopOutput h = attend_hop(p, hop, query, out.ds, dh);
    out.ds = update_state(p, hop, out.ds, h.alpha, h.context, query);
    out.context = h.context;
    out.alpha = h.alpha;
    out.trace.push_back({h.alpha.value().col(0), h.context.value().norm()});
  }
  return out;
}

TripleAttentionOutput triple_attention(ag::Graph& g, Var query, Var triples, int hops, int topk) {
  if (hops < 1) throw std::invalid_argument("triple_attention: needs at least one round");
  TripleAttentionOutput out;
  out.query = query;
  if (!triples.valid() || triples.rows() == 0) {
    out.context = g.constant(Matrix::Zero(query.rows(), 1));
    return out;
  }
  out.empty = false;
  const int n = static_cast<int>(triples.rows());
  std::vector<int> active(static_cast<std::size_t>(n));
  std::iota(active.begin(), active.end(), 0);
  for (int round = 0; round < hops; ++round) {
    const bool restricted = static_cast<int>(active.size()) < n;
    Var rows = restricted ? ag::gather_rows(triples, active) : triples;
    Var weights = ag::softmax(ag::matmul(rows, out.query));
    Var context = ag::matmul(ag::transpose(rows), weights);
    out.alpha = restricted ? ag::scatter_add(weights, active, n) : weights;
    out.context = context;
    out.query = ag::add(out.query, context);
    out.trace.push_back({out.alpha.value().col(0), context.value().norm(), out.query.value().norm()});

    if (topk > 0 && topk < static_cast<int>(active.size())) {
      const Eigen::VectorXd a = out.alpha.value().col(0);
      std::vector<int> order = active;
      std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return a(x) > a(y); });
      order.resize(static_cast<std::size_t>(topk));
      std::sort(order.begin(), order.end());
      active = std::move(order);
    }
  }
  return out;
}

Var interactive_context(Binder& p, std::span<const HopParams> hops, Var ds, Var dh, Var knowledge) {
  Var query = ag::mean_rows(knowledge);
  return multi_hop(p, hops, query, ds, dh).context;
}

nlohmann::json hop_trace_json(const std::vector<HopTrace>& trace) {
  nlohmann::json out = nlohmann::json::array();
  for (const HopTrace& h : trace) {
    out.push_back({{"alpha", std::vector<double>(h.alpha.data(), h.alpha.data() + h.alpha.size())},
                   {"context_norm", h.context_norm}});
  }
  return out;
}

nlohmann::json triple_trace_json(const std::vector<TripleHopTrace>& trace, const std::vector<Triple>& triples,
                                 std::size_t top_n) {
  nlohmann::json out = nlohmann::json::array();
  for (const TripleHopTrace& h : trace) {
    std::vector<int> order(static_cast<std::size_t>(h.alpha.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return h.alpha(a) > h.alpha(b); });
    nlohmann::json top = nlohmann::json::array();
    for (std::size_t i = 0; i < std::min(top_n, order.size()); ++i) {
      const Triple& t = triples.at(static_cast<std::size_t>(order[i]));
      top.push_back({t.head, t.relation, t.tail, h.alpha(order[i])});
    }
    out.push_back({{"alpha", std::vector<double>(h.alpha.data(), h.alpha.data() + h.alpha.size())},
                   {"context_norm", h.context_norm},
                   {"query_norm", h.query_norm},
                   {"top_triples", top}});
  }
  return out;
}

}  // namespace cntf
