#include "cntf/decoder.hpp"

#include <numeric>
#include <stdexcept>

namespace cntf {

DecoderParams add_decoder(ParameterStore& store, const std::string& prefix, int vocab_size, int embed_dim,
                          int hidden_dim, int hops, double scale, Rng& rng) {
  DecoderParams d;
  d.gru = add_gru(store, prefix + ".gru", embed_dim, hidden_dim, scale, rng);
  d.dialogue_hops = add_hops(store, prefix + ".dialogue", hidden_dim, hops, scale, rng);
  d.knowledge_hops = add_hops(store, prefix + ".knowledge", hidden_dim, hops, scale, rng);
  d.w5 = store.add_uniform(prefix + ".w5", vocab_size, 4 * hidden_dim, scale, rng);
  d.b1 = store.add_uniform(prefix + ".b1", vocab_size, 1, scale, rng);
  d.w8 = store.add_uniform(prefix + ".w8", 1, 2 * hidden_dim, scale, rng);
  d.b2 = store.add_uniform(prefix + ".b2", 1, 1, scale, rng);
  d.w9 = store.add_uniform(prefix + ".w9", 1, 2 * hidden_dim, scale, rng);
  d.b3 = store.add_uniform(prefix + ".b3", 1, 1, scale, rng);
  d.w10 = store.add_uniform(prefix + ".w10", 1, 2 * hidden_dim, scale, rng);
  d.b4 = store.add_uniform(prefix + ".b4", 1, 1, scale, rng);
  return d;
}

int CopyVocabulary::add(const std::string& surface) {
  const std::string key = to_lower(surface);
  if (vocab_->contains(key)) return vocab_->id(key);
  auto it = extra_index_.find(key);
  if (it != extra_index_.end()) return it->second;
  const int id = size();
  extra_.push_back(key);
  extra_index_.emplace(key, id);
  return id;
}

int CopyVocabulary::lookup(const std::string& surface) const {
  const std::string key = to_lower(surface);
  if (vocab_->contains(key)) return vocab_->id(key);
  auto it = extra_index_.find(key);
  return it == extra_index_.end() ? Vocabulary::kUnk : it->second;
}

std::string CopyVocabulary::surface(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("CopyVocabulary: id " + std::to_string(id));
  if (id < vocab_->size()) return vocab_->token(id);
  return extra_.at(static_cast<std::size_t>(id - vocab_->size()));
}

Var fuse(Binder& p, const DecoderParams& dec, Var state, Var c_dialogue, Var c_knowledge, Var c_triples) {
  const Var parts[] = {state, c_dialogue, c_knowledge, c_triples};
  return ag::softmax(affine(p, dec.w5, dec.b1, ag::concat_rows(parts)));
}

CopyDistributions copy_distributions(Var alpha_dialogue, Var alpha_knowledge, Var alpha_triples,
                                     const CopyIndex& index, int extended_size) {
  CopyDistributions out;
  out.dialogue = ag::scatter_add(alpha_dialogue, index.dialogue, extended_size);
  out.knowledge = ag::scatter_add(alpha_knowledge, index.knowledge, extended_size);
  if (alpha_triples.valid()) out.triples = ag::scatter_add(alpha_triples, index.triples, extended_size);
  return out;
}

namespace {

Var gate(Binder& p, int weight, int bias, Var state, Var context) {
  const Var parts[] = {state, context};
  return ag::sigmoid(affine(p, weight, bias, ag::concat_rows(parts)));
}

Var mix(Var g, Var a, Var b) { return ag::add(ag::scalar_mul(g, a), ag::scalar_mul(ag::one_minus(g), b)); }

}  // namespace

Gates gate_values(Binder& p, const DecoderParams& dec, Var state, Var c_dialogue, Var c_knowledge,
                  Var c_triples, bool has_triples) {
  Gates g;
  g.g1 = gate(p, dec.w8, dec.b2, state, c_dialogue);
  g.g2 = gate(p, dec.w9, dec.b3, state, c_knowledge);
  if (has_triples) g.g3 = gate(p, dec.w10, dec.b4, state, c_triples);
  return g;
}

Var gate_cascade(Var p_vocab, Var p_dialogue, Var p_knowledge, Var p_triples, Var g1, Var g2, Var g3) {
  const int extended = static_cast<int>(p_dialogue.rows());
  if (p_vocab.rows() > extended) throw std::invalid_argument("gate_cascade: vocabulary exceeds extended size");
  if (p_vocab.rows() < extended) {
    std::vector<int> ids(static_cast<std::size_t>(p_vocab.rows()));
    std::iota(ids.begin(), ids.end(), 0);
    p_vocab = ag::scatter_add(p_vocab, ids, extended);
  }
  Var p_kn = mix(g1, p_vocab, p_dialogue);
  Var p_tp = mix(g2, p_knowledge, p_kn);
  if (!p_triples.valid()) return p_tp;
  return mix(g3, p_triples, p_tp);
}

DecoderState init_decoder(Var weighted_dialogue_context, Var ds, Var kb_s) {
  return {weighted_dialogue_context, ds, kb_s, true};
}

StepOutput step(Binder& p, const DecoderParams& dec, int embedding, const DecoderState& prev, int prev_token,
                const StepContext& ctx) {
  if (!prev.initialized) throw std::logic_error("decoder step before initialization");
  if (ctx.index == nullptr) throw std::invalid_argument("decoder step without copy index");
  StepOutput out;
  const int ids[] = {prev_token};
  Var x = ag::transpose(ag::gather_rows(p[embedding], ids));
  Var s = gru_cell(p, dec.gru, x, prev.s);

  MultiHopOutput dlg = multi_hop(p, dec.dialogue_hops, s, prev.ds, ctx.dh);
  MultiHopOutput kb = multi_hop(p, dec.knowledge_hops, s, prev.kb_s, ctx.kb_h);
  TripleAttentionOutput tri = triple_attention(p.graph(), s, ctx.triples, ctx.triple_hops, ctx.triple_topk);

  out.p_vocab = fuse(p, dec, s, dlg.context, kb.context, tri.context);
  out.alpha_dialogue = dlg.alpha;
  out.alpha_knowledge = kb.alpha;
  out.alpha_triples = tri.alpha;
  out.copies = copy_distributions(dlg.alpha, kb.alpha, tri.alpha, *ctx.index, ctx.extended_size);
  out.gates = gate_values(p, dec, s, dlg.context, kb.context, tri.context, !tri.empty);
  out.p_final = gate_cascade(out.p_vocab, out.copies.dialogue, out.copies.knowledge, out.copies.triples,
                             out.gates.g1, out.gates.g2, out.gates.g3);
  out.next = {s, dlg.ds, kb.ds, true};
  out.dialogue_trace = std::move(dlg.trace);
  out.knowledge_trace = std::move(kb.trace);
  out.triple_trace = std::move(tri.trace);
  return out;
}

Var sequence_loss(std::span<const Var> distributions, std::span<const int> targets) {
  if (distributions.empty() || distributions.size() != targets.size()) {
    throw std::invalid_argument("sequence_loss: need one distribution per target token");
  }
  std::vector<Var> picked;
  picked.reserve(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) picked.push_back(ag::pick(distributions[t], targets[t]));
  Var total = ag::sum(ag::log(ag::concat_rows(picked)));
  return ag::scale(total, -1.0 / static_cast<double>(targets.size()));
}

nlohmann::json to_json(const TraceRecord& r) {
  nlohmann::json triples = nlohmann::json::array();
  for (const TripleWeight& t : r.alpha_t) triples.push_back({t.head, t.relation, t.tail, t.weight});
  return {{"token", r.token}, {"g1", r.g1},           {"g2", r.g2},           {"g3", r.g3},
          {"source", r.source}, {"alpha_d", r.alpha_d}, {"alpha_kb", r.alpha_kb}, {"alpha_t", triples}};
}

TraceRecord trace_record_from_json(const nlohmann::json& j) {
  TraceRecord r;
  r.token = j.at("token").get<std::string>();
  r.g1 = j.at("g1").get<double>();
  r.g2 = j.at("g2").get<double>();
  r.g3 = j.at("g3").get<double>();
  r.source = j.at("source").get<std::string>();
  r.alpha_d = j.at("alpha_d").get<std::vector<double>>();
  r.alpha_kb = j.at("alpha_kb").get<std::vector<double>>();
  for (const auto& t : j.at("alpha_t")) {
    r.alpha_t.push_back({t.at(0).get<std::string>(), t.at(1).get<std::string>(), t.at(2).get<std::string>(),
                         t.at(3).get<double>()});
  }
  return r;
}

namespace {

std::vector<double> column(Var v) {
  const Matrix& m = v.value();
  return std::vector<double>(m.data(), m.data() + m.rows());
}

}  // namespace

TraceRecord make_trace_record(const StepOutput& out, int token, const CopyVocabulary& words,
                              const std::vector<Triple>& triples) {
  TraceRecord r;
  r.token = words.surface(token);
  r.g1 = out.gates.g1.scalar();
  r.g2 = out.gates.g2.scalar();
  r.g3 = out.gates.g3.valid() ? out.gates.g3.scalar() : 0.0;
  r.alpha_d = column(out.alpha_dialogue);
  r.alpha_kb = column(out.alpha_knowledge);
  if (out.alpha_triples.valid()) {
    const Matrix& a = out.alpha_triples.value();
    for (std::size_t i = 0; i < triples.size(); ++i) {
      r.alpha_t.push_back({triples[i].head, triples[i].relation, triples[i].tail,
                           a(static_cast<Eigen::Index>(i), 0)});
    }
  }

  const double rest = (1.0 - r.g3) * (1.0 - r.g2);
  const double p_vocab = token < out.p_vocab.rows() ? out.p_vocab.value()(token, 0) : 0.0;
  const double masses[] = {
      rest * r.g1 * p_vocab,
      rest * (1.0 - r.g1) * out.copies.dialogue.value()(token, 0),
      (1.0 - r.g3) * r.g2 * out.copies.knowledge.value()(token, 0),
      out.copies.triples.valid() ? r.g3 * out.copies.triples.value()(token, 0) : 0.0,
  };
  static const char* const kSources[] = {"vocab", "dialogue", "knowledge", "triple"};
  r.source = kSources[std::max_element(std::begin(masses), std::end(masses)) - std::begin(masses)];
  return r;
}

}  // namespace cntf
