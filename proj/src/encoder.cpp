#include "cntf/encoder.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace cntf {

EncoderParams add_encoder(ParameterStore& store, const std::string& prefix, const ModelConfig& config,
                          Rng& rng) {
  const int h = config.hidden_dim;
  const int head_dim = h / config.encoder_heads;
  const double s = config.init_scale;
  EncoderParams enc;
  enc.input_proj = store.add_uniform(prefix + ".input_proj", config.embed_dim, h, s, rng);
  for (int l = 0; l < config.encoder_layers; ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    EncoderLayerParams layer;
    layer.ln1_gain = store.add_constant(lp + ".ln1_gain", h, 1, 1.0);
    layer.ln1_bias = store.add_constant(lp + ".ln1_bias", h, 1, 0.0);
    for (int k = 0; k < config.encoder_heads; ++k) {
      const std::string hp = lp + ".head" + std::to_string(k);
      layer.w_query.push_back(store.add_uniform(hp + ".w_query", h, head_dim, s, rng));
      layer.w_key.push_back(store.add_uniform(hp + ".w_key", h, head_dim, s, rng));
      layer.w_value.push_back(store.add_uniform(hp + ".w_value", h, head_dim, s, rng));
    }
    layer.w_out = store.add_uniform(lp + ".w_out", h, h, s, rng);
    layer.ln2_gain = store.add_constant(lp + ".ln2_gain", h, 1, 1.0);
    layer.ln2_bias = store.add_constant(lp + ".ln2_bias", h, 1, 0.0);
    layer.ff_w1 = store.add_uniform(lp + ".ff_w1", h, config.ffn_dim, s, rng);
    layer.ff_b1 = store.add_uniform(lp + ".ff_b1", config.ffn_dim, 1, s, rng);
    layer.ff_w2 = store.add_uniform(lp + ".ff_w2", config.ffn_dim, h, s, rng);
    layer.ff_b2 = store.add_uniform(lp + ".ff_b2", h, 1, s, rng);
    enc.layers.push_back(std::move(layer));
  }
  return enc;
}

Matrix sinusoidal_positions(int count, int dim) {
  Matrix pos(count, dim);
  for (int p = 0; p < count; ++p) {
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      pos(p, i) = (i % 2 == 0) ? std::sin(p * rate) : std::cos(p * rate);
    }
  }
  return pos;
}

HiddenStates encode(Binder& p, int embedding, const EncoderParams& encoder, std::span<const int> ids,
                    const Tokens& tokens) {
  if (ids.empty()) throw std::invalid_argument("encode: empty input");
  if (ids.size() != tokens.size()) throw std::invalid_argument("encode: ids and tokens differ in length");
  ag::Graph& g = p.graph();
  const int n = static_cast<int>(ids.size());
  Var words = ag::gather_rows(p[embedding], ids);
  Var x = ag::matmul(words, p[encoder.input_proj]);
  x = ag::add(x, g.constant(sinusoidal_positions(n, static_cast<int>(x.cols()))));

  for (const EncoderLayerParams& layer : encoder.layers) {
    Var normed = ag::layer_norm_rows(x, p[layer.ln1_gain], p[layer.ln1_bias]);
    std::vector<Var> heads;
    for (std::size_t k = 0; k < layer.w_query.size(); ++k) {
      Var q = ag::matmul(normed, p[layer.w_query[k]]);
      Var key = ag::matmul(normed, p[layer.w_key[k]]);
      Var v = ag::matmul(normed, p[layer.w_value[k]]);
      const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.cols()));
      Var weights = ag::softmax_rows(ag::scale(ag::matmul(q, ag::transpose(key)), inv_sqrt));
      heads.push_back(ag::matmul(weights, v));
    }
    Var attn = ag::matmul(ag::concat_cols(heads), p[layer.w_out]);
    x = ag::add(x, attn);

    Var normed2 = ag::layer_norm_rows(x, p[layer.ln2_gain], p[layer.ln2_bias]);
    Var hidden = ag::gelu(ag::add_row_broadcast(ag::matmul(normed2, p[layer.ff_w1]), p[layer.ff_b1]));
    Var ff = ag::add_row_broadcast(ag::matmul(hidden, p[layer.ff_w2]), p[layer.ff_b2]);
    x = ag::add(x, ff);
  }
  return {x, tokens};
}

StateBank push_turn(const StateBank& bank, const Matrix& h_new, const Tokens& tokens, int window) {
  if (window < 1) throw std::invalid_argument("push_turn: window must be >= 1");
  if (h_new.rows() != static_cast<Eigen::Index>(tokens.size())) {
    throw std::invalid_argument("push_turn: states and tokens differ in length");
  }
  if (!bank.empty() && bank.ds.cols() != h_new.cols()) {
    throw std::invalid_argument("push_turn: hidden size mismatch");
  }
  std::size_t keep_turns = std::min(bank.turn_sizes.size(), static_cast<std::size_t>(window - 1));
  std::size_t first_kept = bank.turn_sizes.size() - keep_turns;
  int drop_rows = 0;
  for (std::size_t i = 0; i < first_kept; ++i) drop_rows += bank.turn_sizes[i];
  const int keep_rows = bank.positions() - drop_rows;

  StateBank out;
  const Eigen::Index total = keep_rows + h_new.rows();
  out.ds.resize(total, h_new.cols());
  out.dh.resize(total, h_new.cols());
  if (keep_rows > 0) {
    out.ds.topRows(keep_rows) = bank.ds.bottomRows(keep_rows);
    out.dh.topRows(keep_rows) = bank.dh.bottomRows(keep_rows);
  }
  out.ds.bottomRows(h_new.rows()) = h_new;
  out.dh.bottomRows(h_new.rows()) = h_new;
  out.tokens.assign(bank.tokens.begin() + drop_rows, bank.tokens.end());
  out.tokens.insert(out.tokens.end(), tokens.begin(), tokens.end());
  out.turn_sizes.assign(bank.turn_sizes.begin() + static_cast<std::ptrdiff_t>(first_kept), bank.turn_sizes.end());
  out.turn_sizes.push_back(static_cast<int>(tokens.size()));
  return out;
}

KnowledgeStates set_knowledge(const KnowledgeStates&, const Matrix& h_kb, const Tokens& tokens) {
  if (h_kb.rows() == 0) throw std::invalid_argument("set_knowledge: empty knowledge states");
  if (h_kb.rows() != static_cast<Eigen::Index>(tokens.size())) {
    throw std::invalid_argument("set_knowledge: states and tokens differ in length");
  }
  return KnowledgeStates{h_kb, h_kb, tokens};
}

ExternalStates load_external_states(const std::filesystem::path& path, int hidden_dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open hidden-state file " + path.string());
  auto j = nlohmann::json::parse(in);
  ExternalStates out;
  out.tokens = j.at("tokens").get<Tokens>();
  const auto& rows = j.at("states");
  if (rows.size() != out.tokens.size()) {
    throw std::runtime_error(path.string() + ": states and tokens differ in length");
  }
  out.states.resize(static_cast<Eigen::Index>(rows.size()), hidden_dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto row = rows[r].get<std::vector<double>>();
    if (static_cast<int>(row.size()) != hidden_dim) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(r) + " has wrong width");
    }
    for (int c = 0; c < hidden_dim; ++c) out.states(static_cast<Eigen::Index>(r), c) = row[static_cast<std::size_t>(c)];
  }
  return out;
}

}  // namespace cntf
