#pragma once

// Contextual encoder for dialogue and knowledge inputs, plus the dialogue
// state bank (mutable D_S, fixed D_H) and per-turn knowledge states.

#include "cntf/config.hpp"
#include "cntf/parameters.hpp"
#include "cntf/text.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cntf {

struct EncoderLayerParams {
  int ln1_gain = -1, ln1_bias = -1;
  std::vector<int> w_query, w_key, w_value;  // one (hidden x head_dim) matrix per head
  int w_out = -1;
  int ln2_gain = -1, ln2_bias = -1;
  int ff_w1 = -1, ff_b1 = -1, ff_w2 = -1, ff_b2 = -1;
};

// Pre-norm transformer: x += attn(ln1(x)); x += ffn(ln2(x)). The input is the
// projected word embedding plus sinusoidal positions; there is no final norm.
struct EncoderParams {
  int input_proj = -1;  // embed_dim x hidden_dim
  std::vector<EncoderLayerParams> layers;
};

EncoderParams add_encoder(ParameterStore& store, const std::string& prefix, const ModelConfig& config,
                          Rng& rng);

Matrix sinusoidal_positions(int count, int dim);

struct HiddenStates {
  Var states;  // tokens x hidden_dim
  Tokens tokens;
};

// `embedding` is the shared (vocab x embed_dim) word embedding parameter.
HiddenStates encode(Binder& p, int embedding, const EncoderParams& encoder, std::span<const int> ids,
                    const Tokens& tokens);

struct StateBank {
  Matrix ds;  // mutable states, updated by attention rounds
  Matrix dh;  // encoder outputs, never modified
  Tokens tokens;
  std::vector<int> turn_sizes;  // oldest first

  int positions() const { return static_cast<int>(tokens.size()); }
  bool empty() const { return tokens.empty(); }
};

// Appends a turn and evicts the oldest ones so that at most `window` turn
// inputs remain. Retained D_S rows keep their current values.
StateBank push_turn(const StateBank& bank, const Matrix& h_new, const Tokens& tokens, int window);

struct KnowledgeStates {
  Matrix kb_s;
  Matrix kb_h;
  Tokens tokens;
};

// Replaces the knowledge states with fresh copies of h_kb.
KnowledgeStates set_knowledge(const KnowledgeStates& previous, const Matrix& h_kb, const Tokens& tokens);

// Externally produced hidden states: {"tokens": [...], "states": [[...], ...]}.
struct ExternalStates {
  Matrix states;
  Tokens tokens;
};
ExternalStates load_external_states(const std::filesystem::path& path, int hidden_dim);

}  // namespace cntf
