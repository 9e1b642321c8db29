#include "cntf/corpus.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

namespace cntf {

using nlohmann::json;

std::string to_string(Speaker s) { return s == Speaker::kAgent1 ? "agent1" : "agent2"; }

Speaker speaker_from_string(const std::string& s) {
  if (s == "agent1") return Speaker::kAgent1;
  if (s == "agent2") return Speaker::kAgent2;
  throw CorpusError("unknown speaker '" + s + "'");
}

std::string to_string(SplitName s) {
  switch (s) {
    case SplitName::kTrain: return "train";
    case SplitName::kValid: return "valid";
    case SplitName::kTestSeen: return "test_seen";
    case SplitName::kTestUnseen: return "test_unseen";
    case SplitName::kTest: return "test";
  }
  return "train";
}

std::optional<SplitName> split_from_string(const std::string& s) {
  for (SplitName n : {SplitName::kTrain, SplitName::kValid, SplitName::kTestSeen,
                      SplitName::kTestUnseen, SplitName::kTest}) {
    if (to_string(n) == s) return n;
  }
  return std::nullopt;
}

Dialogue parse_dialogue(const std::string& line, std::size_t line_number) {
  const std::string where = "line " + std::to_string(line_number) + ": ";
  Dialogue d;
  try {
    json j = json::parse(line);
    d.dialogue_id = j.at("dialogue_id").get<std::string>();
    d.topic = j.value("topic", std::string());
    for (const auto& jt : j.at("turns")) {
      Turn t;
      t.speaker = speaker_from_string(jt.at("speaker").get<std::string>());
      t.text = jt.at("text").get<std::string>();
      if (jt.contains("knowledge")) t.knowledge = jt.at("knowledge").get<std::vector<std::string>>();
      if (tokenize(t.text).empty()) throw CorpusError("empty utterance");
      if (!d.turns.empty() && d.turns.back().speaker == t.speaker) {
        Turn& prev = d.turns.back();
        prev.text += " " + t.text;
        prev.knowledge.insert(prev.knowledge.end(), t.knowledge.begin(), t.knowledge.end());
      } else {
        d.turns.push_back(std::move(t));
      }
    }
  } catch (const json::exception& e) {
    throw CorpusError(where + e.what());
  } catch (const CorpusError& e) {
    throw CorpusError(where + e.what());
  }
  if (d.turns.empty()) throw CorpusError(where + "dialogue has no turns");
  if (d.turns.front().speaker != Speaker::kAgent1) {
    throw CorpusError(where + "dialogue must start with agent1");
  }
  return d;
}

std::string serialize_dialogue(const Dialogue& dialogue) {
  json j;
  j["dialogue_id"] = dialogue.dialogue_id;
  j["topic"] = dialogue.topic;
  j["turns"] = json::array();
  for (const Turn& t : dialogue.turns) {
    j["turns"].push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}, {"knowledge", t.knowledge}});
  }
  return j.dump();
}

CorpusSplit load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus " + path.string());
  CorpusSplit split;
  split.name = split_from_string(path.stem().string()).value_or(SplitName::kTrain);
  std::set<std::string> seen;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Dialogue d = parse_dialogue(line, number);
    if (!seen.insert(d.dialogue_id).second) {
      throw CorpusError("line " + std::to_string(number) + ": duplicate dialogue_id '" + d.dialogue_id + "'");
    }
    split.dialogues.push_back(std::move(d));
  }
  if (split.dialogues.empty()) throw CorpusError("corpus " + path.string() + " is empty");
  return split;
}

void save_corpus(const CorpusSplit& split, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write corpus " + path.string());
  for (const Dialogue& d : split.dialogues) out << serialize_dialogue(d) << '\n';
}

namespace {

std::map<std::string, double> term_counts(const Tokens& tokens) {
  std::map<std::string, double> tf;
  for (const auto& t : tokens) {
    if (!is_punctuation_token(t)) tf[t] += 1.0;
  }
  return tf;
}

}  // namespace

std::vector<double> knowledge_scores(const Tokens& utterance, const std::vector<Tokens>& sentences) {
  const double n = static_cast<double>(sentences.size());
  std::vector<std::map<std::string, double>> tfs;
  std::map<std::string, double> df;
  for (const auto& s : sentences) {
    tfs.push_back(term_counts(s));
    for (const auto& [term, _] : tfs.back()) df[term] += 1.0;
  }
  auto idf = [&](const std::string& term) {
    auto it = df.find(term);
    double d = it == df.end() ? 0.0 : it->second;
    return std::log((1.0 + n) / (1.0 + d)) + 1.0;
  };
  std::map<std::string, double> query;
  for (const auto& [term, c] : term_counts(utterance)) query[term] = c * idf(term);
  double qnorm = 0.0;
  for (const auto& [_, w] : query) qnorm += w * w;
  qnorm = std::sqrt(qnorm);

  std::vector<double> scores;
  for (const auto& tf : tfs) {
    double dot = 0.0;
    double norm = 0.0;
    for (const auto& [term, c] : tf) {
      double w = c * idf(term);
      norm += w * w;
      auto q = query.find(term);
      if (q != query.end()) dot += w * q->second;
    }
    norm = std::sqrt(norm);
    scores.push_back(qnorm > 0.0 && norm > 0.0 ? dot / (qnorm * norm) : 0.0);
  }
  return scores;
}

std::vector<Tokens> select_knowledge(const Tokens& utterance, const std::vector<Tokens>& sentences,
                                     int k) {
  if (k < 1) throw std::invalid_argument("select_knowledge: k must be >= 1");
  std::vector<double> scores = knowledge_scores(utterance, sentences);
  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min(order.size(), static_cast<std::size_t>(k)));
  std::vector<Tokens> out;
  for (std::size_t i : order) out.push_back(sentences[i]);
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(s);
}

Vocabulary::Vocabulary(const std::vector<std::string>& regular_tokens) : Vocabulary() {
  for (const auto& t : regular_tokens) {
    if (contains(t)) throw CorpusError("duplicate vocabulary token '" + t + "'");
    add(t);
  }
}

void Vocabulary::add(const std::string& token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write vocabulary " + path.string());
  for (std::size_t i = kNumSpecials; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(tokens);
}

Vocabulary build_vocab(const CorpusSplit& split, int max_size) {
  if (max_size <= Vocabulary::kNumSpecials) throw std::invalid_argument("build_vocab: max_size must exceed 4");
  std::unordered_map<std::string, long> counts;
  for (const Dialogue& d : split.dialogues) {
    for (const Turn& t : d.turns) {
      for (const auto& tok : tokenize(t.text)) ++counts[tok];
      for (const auto& s : t.knowledge) {
        for (const auto& tok : tokenize(s)) ++counts[tok];
      }
    }
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const std::size_t room = static_cast<std::size_t>(max_size - Vocabulary::kNumSpecials);
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < ranked.size() && kept.size() < room; ++i) kept.push_back(ranked[i].first);
  return Vocabulary(kept);
}

namespace {

Tokens keep_tail(Tokens t, std::size_t n) {
  if (t.size() > n) t.erase(t.begin(), t.end() - static_cast<std::ptrdiff_t>(n));
  return t;
}

Tokens keep_head(Tokens t, std::size_t n) {
  if (t.size() > n) t.resize(n);
  return t;
}

}  // namespace

std::vector<TrainingExample> make_training_examples(const Dialogue& dialogue, int selector_k,
                                                    const ExampleLimits& limits) {
  std::vector<TrainingExample> out;
  const auto& turns = dialogue.turns;
  for (std::size_t i = 0; i + 1 < turns.size(); i += 2) {
    const Turn& first = turns[i];
    const Turn& reply = turns[i + 1];
    if (first.speaker != Speaker::kAgent1 || reply.speaker != Speaker::kAgent2) {
      throw CorpusError("dialogue " + dialogue.dialogue_id + ": turns do not alternate");
    }
    TrainingExample ex;
    ex.dialogue_id = dialogue.dialogue_id;
    ex.turn_index = static_cast<int>(i / 2);

    Tokens dialogue_input;
    std::vector<Tokens> pool;
    if (i > 0) {
      const Turn& prev_reply = turns[i - 1];
      dialogue_input = prev_reply.tokens();
      for (const auto& s : prev_reply.knowledge) pool.push_back(tokenize(s));
    }
    Tokens current = first.tokens();
    dialogue_input.insert(dialogue_input.end(), current.begin(), current.end());
    for (const auto& s : first.knowledge) pool.push_back(tokenize(s));
    ex.dialogue_input = keep_tail(std::move(dialogue_input), limits.dialogue_tokens);

    std::size_t total = 0;
    for (const auto& s : pool) total += s.size();
    if (total > limits.knowledge_tokens) pool = select_knowledge(ex.dialogue_input, pool, selector_k);
    Tokens knowledge;
    for (const auto& s : pool) knowledge.insert(knowledge.end(), s.begin(), s.end());
    if (knowledge.empty()) knowledge.push_back(kNoKnowledgeToken);
    ex.knowledge_input = keep_head(std::move(knowledge), limits.knowledge_tokens);

    ex.target = keep_head(reply.tokens(), limits.target_tokens);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace cntf
