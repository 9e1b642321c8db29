#pragma once

// GRU response decoder: per-step attention over the dialogue bank, knowledge
// states and triples, vocabulary fusion, and a three-gate copy cascade.

#include "cntf/corpus.hpp"
#include "cntf/memory_attention.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cntf {

struct DecoderParams {
  GruParams gru;  // input embed_dim, state hidden_dim
  int w5 = -1;    // vocab x 4*hidden
  int b1 = -1;    // vocab x 1
  int w8 = -1, b2 = -1;   // dialogue-copy gate
  int w9 = -1, b3 = -1;   // knowledge-copy gate
  int w10 = -1, b4 = -1;  // triple-copy gate
  std::vector<HopParams> dialogue_hops;
  std::vector<HopParams> knowledge_hops;
};

DecoderParams add_decoder(ParameterStore& store, const std::string& prefix, int vocab_size, int embed_dim,
                          int hidden_dim, int hops, double scale, Rng& rng);

// Vocabulary extended with the source words that the vocabulary lacks.
// Copy keys are lowercased surfaces; a surface equal to a regular vocabulary
// token shares that token's id.
class CopyVocabulary {
 public:
  explicit CopyVocabulary(const Vocabulary& vocab) : vocab_(&vocab) {}

  int add(const std::string& surface);
  // Vocabulary id, extended id, or unk.
  int lookup(const std::string& surface) const;
  std::string surface(int id) const;
  int size() const { return vocab_->size() + static_cast<int>(extra_.size()); }
  int vocab_size() const { return vocab_->size(); }

 private:
  const Vocabulary* vocab_;
  std::vector<std::string> extra_;
  std::unordered_map<std::string, int> extra_index_;
};

// Extended ids of every copyable position.
struct CopyIndex {
  std::vector<int> dialogue;
  std::vector<int> knowledge;
  std::vector<int> triples;
};

// P_g = softmax(W5 [s; c_D; c_K; c_T] + b1).
Var fuse(Binder& p, const DecoderParams& dec, Var state, Var c_dialogue, Var c_knowledge, Var c_triples);

struct CopyDistributions {
  Var dialogue;
  Var knowledge;
  Var triples;  // invalid when there are no triples
};

// Attention mass summed per extended id.
CopyDistributions copy_distributions(Var alpha_dialogue, Var alpha_knowledge, Var alpha_triples,
                                     const CopyIndex& index, int extended_size);

struct Gates {
  Var g1;
  Var g2;
  Var g3;  // invalid when there are no triples
};

Gates gate_values(Binder& p, const DecoderParams& dec, Var state, Var c_dialogue, Var c_knowledge,
                  Var c_triples, bool has_triples);

// P_kn = g1 P_g + (1-g1) P_D; P_tp = g2 P_Kb + (1-g2) P_kn;
// P = g3 P_T + (1-g3) P_tp, or P = P_tp when p_triples is invalid.
// p_vocab may be shorter than the other distributions; it is zero-extended.
Var gate_cascade(Var p_vocab, Var p_dialogue, Var p_knowledge, Var p_triples, Var g1, Var g2, Var g3);

// Decoder state threaded through steps. ds and kb_s evolve with every round.
struct DecoderState {
  Var s;
  Var ds;
  Var kb_s;
  bool initialized = false;
};

DecoderState init_decoder(Var weighted_dialogue_context, Var ds, Var kb_s);

struct StepContext {
  Var dh;
  Var kb_h;
  Var triples;  // triple embeddings, invalid when empty
  const CopyIndex* index = nullptr;
  int extended_size = 0;
  int triple_hops = 1;
  int triple_topk = 0;
};

struct StepOutput {
  DecoderState next;
  Var p_final;
  Var p_vocab;
  CopyDistributions copies;
  Gates gates;
  Var alpha_dialogue;
  Var alpha_knowledge;
  Var alpha_triples;
  std::vector<HopTrace> dialogue_trace;
  std::vector<HopTrace> knowledge_trace;
  std::vector<TripleHopTrace> triple_trace;
};

// s_t = GRU(e(y_prev), s_prev), then attention, fusion and the copy cascade.
StepOutput step(Binder& p, const DecoderParams& dec, int embedding, const DecoderState& prev, int prev_token,
                const StepContext& ctx);

// Mean over steps of -log P(y_t*).
Var sequence_loss(std::span<const Var> distributions, std::span<const int> targets);

struct TripleWeight {
  std::string head;
  std::string relation;
  std::string tail;
  double weight = 0.0;
};

// Per emitted token.
struct TraceRecord {
  std::string token;
  double g1 = 0.0;
  double g2 = 0.0;
  double g3 = 0.0;
  std::string source;  // vocab | dialogue | knowledge | triple
  std::vector<double> alpha_d;
  std::vector<double> alpha_kb;
  std::vector<TripleWeight> alpha_t;
};

nlohmann::json to_json(const TraceRecord& r);
TraceRecord trace_record_from_json(const nlohmann::json& j);

// Builds the record for `token` emitted from step output `out`.
TraceRecord make_trace_record(const StepOutput& out, int token, const CopyVocabulary& words,
                              const std::vector<Triple>& triples);

template <class State>
struct BeamHypothesis {
  std::vector<int> tokens;
  double log_prob = 0.0;
  bool finished = false;
  State state;

  double normalized() const {
    return tokens.empty() ? log_prob : log_prob / static_cast<double>(tokens.size());
  }
};

// Length-normalized beam search. `expand(state, last_token)` returns the
// log-probabilities of every next token and the successor state shared by all
// children. Returns the best finished hypothesis, or the best unfinished one
// when nothing finished within max_len.
template <class State, class Expand>
BeamHypothesis<State> beam_search(State initial, int bos, int eos, int width, int max_len, Expand expand) {
  if (width < 1) throw std::invalid_argument("beam_search: width must be >= 1");
  struct Candidate {
    std::size_t parent;
    int token;
    double log_prob;
  };
  std::vector<BeamHypothesis<State>> alive;
  alive.push_back({{}, 0.0, false, std::move(initial)});
  std::vector<BeamHypothesis<State>> finished;

  for (int t = 0; t < max_len && !alive.empty(); ++t) {
    std::vector<Candidate> candidates;
    std::vector<State> successors;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      const int last = alive[h].tokens.empty() ? bos : alive[h].tokens.back();
      auto [log_probs, next] = expand(alive[h].state, last);
      successors.push_back(std::move(next));
      for (Eigen::Index w = 0; w < log_probs.size(); ++w) {
        candidates.push_back({h, static_cast<int>(w), alive[h].log_prob + log_probs(w)});
      }
    }
    const std::size_t keep = std::min(candidates.size(), static_cast<std::size_t>(width));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<BeamHypothesis<State>> next_alive;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = candidates[i];
      BeamHypothesis<State> child{alive[c.parent].tokens, c.log_prob, c.token == eos, successors[c.parent]};
      child.tokens.push_back(c.token);
      (child.finished ? finished : next_alive).push_back(std::move(child));
    }
    alive = std::move(next_alive);
    if (static_cast<int>(finished.size()) >= width) break;
  }

  auto best_of = [](std::vector<BeamHypothesis<State>>& pool) {
    return std::max_element(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
      return a.normalized() < b.normalized();
    });
  };
  if (!finished.empty()) return std::move(*best_of(finished));
  if (alive.empty()) throw std::logic_error("beam_search: no hypotheses");
  return std::move(*best_of(alive));
}

// Argmax decoding with the same contract as beam_search at width 1.
template <class State, class Expand>
BeamHypothesis<State> greedy_search(State initial, int bos, int eos, int max_len, Expand expand) {
  BeamHypothesis<State> hyp{{}, 0.0, false, std::move(initial)};
  for (int t = 0; t < max_len; ++t) {
    const int last = hyp.tokens.empty() ? bos : hyp.tokens.back();
    auto [log_probs, next] = expand(hyp.state, last);
    Eigen::Index best = 0;
    for (Eigen::Index w = 1; w < log_probs.size(); ++w) {
      if (log_probs(w) > log_probs(best)) best = w;
    }
    hyp.tokens.push_back(static_cast<int>(best));
    hyp.log_prob += log_probs(best);
    hyp.state = std::move(next);
    if (best == eos) {
      hyp.finished = true;
      break;
    }
  }
  return hyp;
}

}  // namespace cntf
