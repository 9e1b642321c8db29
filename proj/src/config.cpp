#include "cntf/config.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace cntf {

namespace {

const char* combine_name(TripleCombine c) {
  switch (c) {
    case TripleCombine::kMean: return "mean";
    case TripleCombine::kSum: return "sum";
    case TripleCombine::kConcatProjection: return "concat_projection";
  }
  return "mean";
}

TripleCombine combine_from(const std::string& s) {
  if (s == "mean") return TripleCombine::kMean;
  if (s == "sum") return TripleCombine::kSum;
  if (s == "concat_projection") return TripleCombine::kConcatProjection;
  throw std::invalid_argument("unknown triple_combine '" + s + "'");
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw std::invalid_argument(std::string("model config: ") + name + " must be positive");
  };
  positive(embed_dim, "embed_dim");
  positive(hidden_dim, "hidden_dim");
  positive(hops, "hops");
  positive(triple_hops, "triple_hops");
  positive(window, "window");
  positive(encoder_layers, "encoder_layers");
  positive(encoder_heads, "encoder_heads");
  positive(ffn_dim, "ffn_dim");
  positive(vocab_size, "vocab_size");
  positive(triple_vocab_size, "triple_vocab_size");
  positive(max_dialogue_tokens, "max_dialogue_tokens");
  positive(max_knowledge_tokens, "max_knowledge_tokens");
  positive(triple_cap, "triple_cap");
  if (hidden_dim % encoder_heads != 0) {
    throw std::invalid_argument("model config: hidden_dim must be divisible by encoder_heads");
  }
  if (triple_topk < 0) throw std::invalid_argument("model config: triple_topk must be >= 0");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"embed_dim", embed_dim},
          {"hidden_dim", hidden_dim},
          {"hops", hops},
          {"triple_hops", triple_hops},
          {"window", window},
          {"encoder_layers", encoder_layers},
          {"encoder_heads", encoder_heads},
          {"ffn_dim", ffn_dim},
          {"vocab_size", vocab_size},
          {"triple_vocab_size", triple_vocab_size},
          {"max_dialogue_tokens", max_dialogue_tokens},
          {"max_knowledge_tokens", max_knowledge_tokens},
          {"triple_cap", triple_cap},
          {"triple_combine", combine_name(triple_combine)},
          {"triple_copy_word", triple_copy_word == CopyWord::kTail ? "tail" : "head"},
          {"triple_topk", triple_topk},
          {"init_scale", init_scale}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.hops = j.value("hops", c.hops);
  c.triple_hops = j.value("triple_hops", c.triple_hops);
  c.window = j.value("window", c.window);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.encoder_heads = j.value("encoder_heads", c.encoder_heads);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.triple_vocab_size = j.value("triple_vocab_size", c.triple_vocab_size);
  c.max_dialogue_tokens = j.value("max_dialogue_tokens", c.max_dialogue_tokens);
  c.max_knowledge_tokens = j.value("max_knowledge_tokens", c.max_knowledge_tokens);
  c.triple_cap = j.value("triple_cap", c.triple_cap);
  c.triple_combine = combine_from(j.value("triple_combine", std::string("mean")));
  std::string copy = j.value("triple_copy_word", std::string("tail"));
  if (copy != "tail" && copy != "head") throw std::invalid_argument("unknown triple_copy_word '" + copy + "'");
  c.triple_copy_word = copy == "tail" ? CopyWord::kTail : CopyWord::kHead;
  c.triple_topk = j.value("triple_topk", c.triple_topk);
  c.init_scale = j.value("init_scale", c.init_scale);
  return c;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model config " + path.string());
  return from_json(nlohmann::json::parse(in));
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t ModelConfig::hash() const {
  const std::string dump = to_json().dump();
  return fnv1a(dump.data(), dump.size());
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace cntf
