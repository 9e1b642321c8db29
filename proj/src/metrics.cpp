#include "cntf/metrics.hpp"

#include "cntf/model.hpp"
#include "cntf/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace cntf {

void PerplexityAccumulator::add(const Eigen::VectorXd& distribution, int target) {
  nll_ -= std::log(distribution(target));
  tokens_ += 1;
}

void PerplexityAccumulator::add_nll(double nll, long tokens) {
  nll_ += nll;
  tokens_ += tokens;
}

double PerplexityAccumulator::value() const {
  if (tokens_ == 0) throw std::invalid_argument("perplexity: no tokens scored");
  return std::exp(nll_ / static_cast<double>(tokens_));
}

double perplexity(const CntfModel& model, const std::vector<DialogueData>& dialogues) {
  PerplexityAccumulator acc;
  for (const DialogueData& d : dialogues) {
    StateBank bank;
    for (const TrainingExample& ex : d.examples) {
      ag::Graph g(false);
      Binder p(g, model.params());
      TurnLoss t = model.turn_loss(p, bank, turn_input(ex, d.triples), ex.target);
      for (std::size_t i = 0; i < t.targets.size(); ++i) acc.add(t.distributions[i].value().col(0), t.targets[i]);
      bank = std::move(t.bank);
    }
  }
  return acc.value();
}

Tokens normalize_for_f1(const Tokens& tokens) {
  Tokens out;
  for (const auto& t : tokens) {
    std::string s;
    for (char c : to_lower(t)) {
      if (!std::ispunct(static_cast<unsigned char>(c))) s.push_back(c);
    }
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

double unigram_f1(const Tokens& hypothesis, const Tokens& reference) {
  const Tokens h = normalize_for_f1(hypothesis);
  const Tokens r = normalize_for_f1(reference);
  if (h.empty() && r.empty()) return 1.0;
  if (h.empty() || r.empty()) return 0.0;
  std::map<std::string, long> counts;
  for (const auto& t : r) ++counts[t];
  long common = 0;
  for (const auto& t : h) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(h.size());
  const double recall = static_cast<double>(common) / static_cast<double>(r.size());
  return 2.0 * precision * recall / (precision + recall);
}

void BleuStats::add(const BleuStats& o) {
  for (int n = 0; n < 4; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  hypothesis_length += o.hypothesis_length;
  reference_length += o.reference_length;
}

namespace {

std::map<Tokens, long> ngrams(const Tokens& t, std::size_t n) {
  std::map<Tokens, long> out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + i, t.begin() + i + n)];
  return out;
}

}  // namespace

BleuStats bleu_stats(const Tokens& hypothesis, const Tokens& reference) {
  BleuStats s;
  s.hypothesis_length = static_cast<long>(hypothesis.size());
  s.reference_length = static_cast<long>(reference.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto h = ngrams(hypothesis, n);
    const auto r = ngrams(reference, n);
    for (const auto& [gram, count] : h) {
      s.totals[n - 1] += count;
      auto it = r.find(gram);
      if (it != r.end()) s.matches[n - 1] += std::min(count, it->second);
    }
  }
  return s;
}

double bleu4(const BleuStats& s) {
  if (s.hypothesis_length == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    const double numerator = s.matches[n] > 0 ? static_cast<double>(s.matches[n]) : kBleuEpsilon;
    const double denominator = static_cast<double>(std::max(s.totals[n], 1L));
    log_sum += std::log(numerator / denominator);
  }
  const double c = static_cast<double>(s.hypothesis_length);
  const double r = static_cast<double>(s.reference_length);
  const double brevity = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return brevity * std::exp(log_sum / 4.0);
}

double bleu4(const Tokens& hypothesis, const Tokens& reference) { return bleu4(bleu_stats(hypothesis, reference)); }

double corpus_bleu4(std::span<const Tokens> hypotheses, std::span<const Tokens> references) {
  if (hypotheses.size() != references.size()) throw std::invalid_argument("corpus_bleu4: size mismatch");
  BleuStats total;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) total.add(bleu_stats(hypotheses[i], references[i]));
  return bleu4(total);
}

WordVectors WordVectors::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open word vectors " + path.string());
  WordVectors wv;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    std::vector<double> values;
    double x;
    while (ls >> x) values.push_back(x);
    if (!ls.eof()) throw std::runtime_error(path.string() + ": line " + std::to_string(number) + ": bad number");
    if (wv.dim_ == 0) wv.dim_ = static_cast<int>(values.size());
    if (static_cast<int>(values.size()) != wv.dim_ || values.empty()) {
      throw std::runtime_error(path.string() + ": line " + std::to_string(number) + ": expected " +
                               std::to_string(wv.dim_) + " values");
    }
    wv.add(token, Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  return wv;
}

void WordVectors::add(const std::string& token, Eigen::VectorXd v) {
  if (dim_ == 0) dim_ = static_cast<int>(v.size());
  if (v.size() != dim_) throw std::invalid_argument("WordVectors: dimension mismatch for '" + token + "'");
  vectors_[token] = std::move(v);
}

const Eigen::VectorXd* WordVectors::find(const std::string& token) const {
  auto it = vectors_.find(token);
  return it == vectors_.end() ? nullptr : &it->second;
}

namespace {

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double denom = a.norm() * b.norm();
  return denom > 0.0 ? a.dot(b) / denom : 0.0;
}

std::vector<const Eigen::VectorXd*> lookup(const Tokens& tokens, const WordVectors& vectors) {
  std::vector<const Eigen::VectorXd*> out;
  for (const auto& t : tokens) {
    if (const auto* v = vectors.find(t)) out.push_back(v);
  }
  return out;
}

Eigen::VectorXd mean_vector(const std::vector<const Eigen::VectorXd*>& vs) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(vs.front()->size());
  for (const auto* v : vs) m += *v;
  return m / static_cast<double>(vs.size());
}

Eigen::VectorXd extrema_vector(const std::vector<const Eigen::VectorXd*>& vs) {
  Eigen::VectorXd e = *vs.front();
  for (const auto* v : vs) {
    for (Eigen::Index d = 0; d < e.size(); ++d) {
      if (std::abs((*v)(d)) > std::abs(e(d))) e(d) = (*v)(d);
    }
  }
  return e;
}

double greedy_direction(const std::vector<const Eigen::VectorXd*>& from,
                        const std::vector<const Eigen::VectorXd*>& to) {
  double total = 0.0;
  for (const auto* a : from) {
    double best = -1.0;
    for (const auto* b : to) best = std::max(best, cosine(*a, *b));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

std::optional<EmbeddingScores> embedding_metrics(const Tokens& hypothesis, const Tokens& reference,
                                                 const WordVectors& vectors) {
  const auto h = lookup(hypothesis, vectors);
  const auto r = lookup(reference, vectors);
  if (h.empty() || r.empty()) return std::nullopt;
  EmbeddingScores s;
  s.average = cosine(mean_vector(h), mean_vector(r));
  s.extrema = cosine(extrema_vector(h), extrema_vector(r));
  s.greedy = 0.5 * (greedy_direction(h, r) + greedy_direction(r, h));
  return s;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j = {{"f1", f1},
                      {"bleu4", bleu4},
                      {"emb_avg", emb_avg},
                      {"extrema", extrema},
                      {"greedy", greedy},
                      {"pairs", pairs},
                      {"embedding_pairs", embedding_pairs},
                      {"embedding_skipped", embedding_skipped}};
  j["ppl"] = ppl ? nlohmann::json(*ppl) : nlohmann::json(nullptr);
  return j;
}

MetricReport evaluate_responses(std::span<const Tokens> hypotheses, std::span<const Tokens> references,
                                const WordVectors* vectors) {
  if (hypotheses.size() != references.size()) {
    throw std::invalid_argument("evaluate_responses: " + std::to_string(hypotheses.size()) + " hypotheses but " +
                                std::to_string(references.size()) + " references");
  }
  MetricReport report;
  report.pairs = static_cast<long>(hypotheses.size());
  double f1 = 0.0;
  EmbeddingScores emb;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    f1 += unigram_f1(hypotheses[i], references[i]);
    if (vectors == nullptr) continue;
    if (auto s = embedding_metrics(hypotheses[i], references[i], *vectors)) {
      emb.average += s->average;
      emb.extrema += s->extrema;
      emb.greedy += s->greedy;
      ++report.embedding_pairs;
    } else {
      ++report.embedding_skipped;
    }
  }
  if (report.pairs > 0) report.f1 = f1 / static_cast<double>(report.pairs);
  report.bleu4 = corpus_bleu4(hypotheses, references);
  if (report.embedding_pairs > 0) {
    const double n = static_cast<double>(report.embedding_pairs);
    report.emb_avg = clamp01(emb.average / n);
    report.extrema = clamp01(emb.extrema / n);
    report.greedy = clamp01(emb.greedy / n);
  }
  return report;
}

}  // namespace cntf
