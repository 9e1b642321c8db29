#pragma once

// Dialogue corpora, knowledge selection and the shared vocabulary.

#include "cntf/text.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace cntf {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Speaker { kAgent1, kAgent2 };

std::string to_string(Speaker s);
Speaker speaker_from_string(const std::string& s);

// One utterance. Raw text is kept so coreference spans stay addressable.
struct Turn {
  Speaker speaker = Speaker::kAgent1;
  std::string text;
  std::vector<std::string> knowledge;

  Tokens tokens() const { return tokenize(text); }
};

struct Dialogue {
  std::string dialogue_id;
  std::string topic;
  std::vector<Turn> turns;
};

enum class SplitName { kTrain, kValid, kTestSeen, kTestUnseen, kTest };

std::string to_string(SplitName s);
std::optional<SplitName> split_from_string(const std::string& s);

struct CorpusSplit {
  SplitName name = SplitName::kTrain;
  std::vector<Dialogue> dialogues;
};

// Parses one JSONL line. Consecutive utterances by the same speaker are
// merged; the first turn must belong to agent1.
Dialogue parse_dialogue(const std::string& line, std::size_t line_number);
std::string serialize_dialogue(const Dialogue& dialogue);

// The split name is taken from the file stem when it names a split.
CorpusSplit load_corpus(const std::filesystem::path& path);
void save_corpus(const CorpusSplit& split, const std::filesystem::path& path);

// TF-IDF cosine ranking of knowledge sentences against an utterance.
// Ties keep the original sentence order.
std::vector<Tokens> select_knowledge(const Tokens& utterance, const std::vector<Tokens>& sentences,
                                     int k);
// Scores used by select_knowledge, one per sentence.
std::vector<double> knowledge_scores(const Tokens& utterance, const std::vector<Tokens>& sentences);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumSpecials = 4;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& regular_tokens);

  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.contains(token); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<int> encode(const Tokens& tokens) const;

  // One regular token per line; line i holds id i + 4.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Most frequent dialogue and knowledge tokens, ties broken lexicographically.
Vocabulary build_vocab(const CorpusSplit& split, int max_size);

struct TrainingExample {
  std::string dialogue_id;
  int turn_index = 0;
  Tokens dialogue_input;
  Tokens knowledge_input;
  Tokens target;
};

struct ExampleLimits {
  std::size_t dialogue_tokens = 200;
  std::size_t knowledge_tokens = 400;
  std::size_t target_tokens = 200;
};

// Surface used when an exchange carries no knowledge at all; the encoder
// needs at least one position.
inline constexpr const char* kNoKnowledgeToken = "<nokb>";

// One example per agent2 reply. Dialogue input keeps its most recent tokens,
// knowledge input its leading tokens.
std::vector<TrainingExample> make_training_examples(const Dialogue& dialogue, int selector_k,
                                                    const ExampleLimits& limits = {});

}  // namespace cntf
