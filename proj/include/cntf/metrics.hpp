#pragma once

// Automatic response metrics: perplexity, unigram F1, corpus BLEU-4 and the
// word-embedding similarities (average, extrema, greedy matching).

#include "cntf/text.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cntf {

class CntfModel;
struct DialogueData;

// Token-weighted perplexity: exp(total NLL / token count).
class PerplexityAccumulator {
 public:
  void add(const Eigen::VectorXd& distribution, int target);
  void add_nll(double nll, long tokens);
  long tokens() const { return tokens_; }
  double value() const;

 private:
  double nll_ = 0.0;
  long tokens_ = 0;
};

// Teacher-forced perplexity of the gold targets.
double perplexity(const CntfModel& model, const std::vector<DialogueData>& dialogues);

// Lowercased tokens with punctuation removed.
Tokens normalize_for_f1(const Tokens& tokens);
double unigram_f1(const Tokens& hypothesis, const Tokens& reference);

inline constexpr double kBleuEpsilon = 0.1;

struct BleuStats {
  std::array<long, 4> matches{};
  std::array<long, 4> totals{};
  long hypothesis_length = 0;
  long reference_length = 0;
  void add(const BleuStats& o);
};

BleuStats bleu_stats(const Tokens& hypothesis, const Tokens& reference);
double bleu4(const BleuStats& stats);
double bleu4(const Tokens& hypothesis, const Tokens& reference);
double corpus_bleu4(std::span<const Tokens> hypotheses, std::span<const Tokens> references);

class WordVectors {
 public:
  WordVectors() = default;
  explicit WordVectors(int dim) : dim_(dim) {}
  // GloVe text format: token followed by dim values per line.
  static WordVectors load(const std::filesystem::path& path);

  void add(const std::string& token, Eigen::VectorXd v);
  const Eigen::VectorXd* find(const std::string& token) const;
  int dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }

 private:
  int dim_ = 0;
  std::unordered_map<std::string, Eigen::VectorXd> vectors_;
};

struct EmbeddingScores {
  double average = 0.0;
  double extrema = 0.0;
  double greedy = 0.0;
};

// nullopt when either side has no in-vocabulary token.
std::optional<EmbeddingScores> embedding_metrics(const Tokens& hypothesis, const Tokens& reference,
                                                 const WordVectors& vectors);

struct MetricReport {
  std::optional<double> ppl;
  double f1 = 0.0;
  double bleu4 = 0.0;
  double emb_avg = 0.0;
  double extrema = 0.0;
  double greedy = 0.0;
  long pairs = 0;
  long embedding_pairs = 0;
  long embedding_skipped = 0;
  nlohmann::json to_json() const;
};

// Averages per-pair F1 and embedding scores, corpus-level BLEU. Cosine-based
// scores are clamped to [0, 1].
MetricReport evaluate_responses(std::span<const Tokens> hypotheses, std::span<const Tokens> references,
                                const WordVectors* vectors);

}  // namespace cntf
