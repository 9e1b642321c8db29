#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace cntf {

enum class TripleCombine { kMean, kSum, kConcatProjection };
enum class CopyWord { kTail, kHead };

struct ModelConfig {
  int embed_dim = 300;
  int hidden_dim = 128;
  int hops = 2;         // rounds over dialogue and knowledge banks
  int triple_hops = 2;  // rounds over the triple embeddings
  int window = 2;       // current turn plus window - 1 previous turn inputs
  int encoder_layers = 1;
  int encoder_heads = 4;
  int ffn_dim = 256;
  int vocab_size = 0;
  int triple_vocab_size = 0;
  int max_dialogue_tokens = 200;
  int max_knowledge_tokens = 400;
  int triple_cap = 400;
  TripleCombine triple_combine = TripleCombine::kMean;
  CopyWord triple_copy_word = CopyWord::kTail;
  // Keep only the k highest-weighted triples between triple hops; 0 disables.
  int triple_topk = 0;
  double init_scale = 0.1;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  static ModelConfig load(const std::filesystem::path& path);
  // FNV-1a over the canonical JSON dump.
  std::uint64_t hash() const;
};

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 14695981039346656037ULL);
std::string hex64(std::uint64_t v);

}  // namespace cntf
