#pragma once

// The full dialogue model: parameters, per-turn teacher-forced loss and
// beam/greedy response generation with per-token traces.

#include "cntf/config.hpp"
#include "cntf/decoder.hpp"
#include "cntf/encoder.hpp"

#include <map>
#include <memory>

namespace cntf {

struct TurnInput {
  Tokens dialogue;   // [previous reply; current utterance]
  Tokens knowledge;  // selected knowledge tokens; may be empty
  std::vector<Triple> triples;
  int window = 0;  // 0: use the model's configured window
};

// Entity strings of all triples, sorted; ids follow the Vocabulary layout.
Vocabulary build_entity_vocab(const std::map<std::string, TripleStore>& stores);

// Everything a turn needs before the first decoder step.
struct TurnSetup {
  StateBank bank;  // after push_turn; ds holds the pre-decoding values
  Tokens knowledge;
  std::vector<Triple> triples;
  CopyVocabulary words;
  CopyIndex index;
  StepContext context;
  DecoderState initial;
  Var weighted_context;
};

struct TurnLoss {
  Var loss;
  std::vector<Var> distributions;
  std::vector<int> targets;  // extended ids, eos last
  StateBank bank;            // bank carried into the next turn
};

struct Generation {
  std::vector<int> ids;  // extended ids, eos included when finished
  Tokens words;          // surfaces without eos
  std::vector<TraceRecord> trace;
  double log_prob = 0.0;
  double score = 0.0;  // log_prob / ids.size()
  bool finished = false;
  StateBank bank;
};

class CntfModel {
 public:
  CntfModel(ModelConfig config, Vocabulary vocab, Vocabulary entities, std::uint64_t seed);
  CntfModel(const CntfModel&) = delete;
  CntfModel& operator=(const CntfModel&) = delete;

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const Vocabulary& entities() const { return entities_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  TurnSetup setup(Binder& p, const StateBank& bank, const TurnInput& input) const;

  // Teacher-forced mean negative log-likelihood of target + eos.
  TurnLoss turn_loss(Binder& p, const StateBank& bank, const TurnInput& input, const Tokens& target) const;

  Generation generate(const StateBank& bank, const TurnInput& input, int beam_width, int max_len) const;
  Generation greedy(const StateBank& bank, const TurnInput& input, int max_len) const;

  // Copy id of each target token: vocabulary, then copy sources, then unk.
  std::vector<int> target_ids(const TurnSetup& setup, const Tokens& target) const;

 private:
  Var triple_embeddings(Binder& p, const std::vector<Triple>& triples) const;
  int input_id(int extended_id) const { return extended_id < vocab_.size() ? extended_id : Vocabulary::kUnk; }
  template <class Search>
  Generation run_search(const StateBank& bank, const TurnInput& input, Search search) const;

  ModelConfig config_;
  Vocabulary vocab_;
  Vocabulary entities_;
  ParameterStore params_;
  int embedding_ = -1;
  int entity_embedding_ = -1;
  int triple_projection_ = -1;
  EncoderParams dialogue_encoder_;
  EncoderParams knowledge_encoder_;
  std::vector<HopParams> interactive_hops_;
  DecoderParams decoder_;
};

}  // namespace cntf
