#pragma once

// Per-dialogue knowledge triples: commonsense edges from a ConceptNet-style
// lexicon plus RelatedTo edges between named entities found after
// coreference rewriting.

#include "cntf/corpus.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace cntf {

class TripleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TripleSource { kEntityPair, kEntityConcept, kConceptNet };

std::string to_string(TripleSource s);
TripleSource triple_source_from_string(const std::string& s);

inline constexpr const char* kRelatedTo = "RelatedTo";

struct Triple {
  std::string head;
  std::string relation;
  std::string tail;
  TripleSource source = TripleSource::kConceptNet;

  // Identity ignores the source.
  auto key() const { return std::tie(head, relation, tail); }
  bool operator==(const Triple& o) const { return key() == o.key(); }
  bool operator<(const Triple& o) const { return key() < o.key(); }
};

// Deduplicated triples kept sorted by (head, relation, tail). When the same
// edge arrives from two sources the higher-priority source wins.
class TripleStore {
 public:
  TripleStore() = default;
  explicit TripleStore(const std::vector<Triple>& triples);

  bool insert(const Triple& t);
  bool contains(const std::string& head, const std::string& relation, const std::string& tail) const;
  std::size_t size() const { return triples_.size(); }
  bool empty() const { return triples_.empty(); }
  const std::vector<Triple>& triples() const { return triples_; }
  std::set<std::string> entities() const;
  std::set<std::string> relations() const;

  // Keeps at most `cap` triples, preferring entity_pair, then entity_concept,
  // then conceptnet, lexical order within a source.
  void cap(std::size_t cap);

 private:
  std::vector<Triple> triples_;
};

struct MentionSpan {
  int turn = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct CorefCluster {
  std::string representative;  // empty: use the longest mention
  std::vector<MentionSpan> mentions;
};

struct CorefAnnotation {
  std::vector<CorefCluster> clusters;
};

struct EntitySpan {
  int turn = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string surface;
};

struct EntityAnnotation {
  std::vector<EntitySpan> spans;
};

struct ConceptLexicon {
  std::set<std::string> concept_words;
  std::vector<Triple> raw_triples;
};

// head<TAB>relation<TAB>tail per line.
ConceptLexicon load_lexicon(const std::filesystem::path& path);
ConceptLexicon make_lexicon(const std::vector<Triple>& triples);

// Replaces every non-representative mention with the representative string.
Dialogue resolve_and_rewrite(const Dialogue& dialogue, const CorefAnnotation& coref);

std::vector<Triple> build_entity_triples(const std::vector<std::string>& entities,
                                         const std::vector<std::string>& concepts);

TripleStore filter_conceptnet(const ConceptLexicon& lexicon, const Vocabulary& vocab);

// Filtered lexicon indexed for per-dialogue lookups.
class ConceptIndex {
 public:
  ConceptIndex() = default;
  ConceptIndex(const ConceptLexicon& lexicon, const Vocabulary& vocab);

  bool is_concept(const std::string& word) const { return concepts_.contains(word); }
  std::vector<Triple> with_head(const std::string& word) const;
  std::vector<Triple> with_tail(const std::string& word) const;
  const TripleStore& store() const { return store_; }

 private:
  TripleStore store_;
  std::set<std::string> concepts_;
  std::multimap<std::string, std::size_t> by_head_;
  std::multimap<std::string, std::size_t> by_tail_;
};

class Annotator {
 public:
  virtual ~Annotator() = default;
  virtual CorefAnnotation coref(const Dialogue& dialogue) const = 0;
  // Entity spans are relative to the rewritten dialogue.
  virtual EntityAnnotation entities(const Dialogue& rewritten) const = 0;
};

// No coreference; an entity is a run of two or more capitalized words, which
// may contain lowercase connectors ("of", "the", ...) between capitalized words.
class RuleBasedAnnotator : public Annotator {
 public:
  CorefAnnotation coref(const Dialogue& dialogue) const override;
  EntityAnnotation entities(const Dialogue& rewritten) const override;
};

// Reads <dir>/<dialogue_id>.json precomputed annotations.
class FileAnnotator : public Annotator {
 public:
  explicit FileAnnotator(std::filesystem::path dir) : dir_(std::move(dir)) {}
  CorefAnnotation coref(const Dialogue& dialogue) const override;
  EntityAnnotation entities(const Dialogue& rewritten) const override;

 private:
  std::filesystem::path dir_;
};

struct AnnotationFile {
  CorefAnnotation coref;
  EntityAnnotation entities;
};

AnnotationFile parse_annotation(const std::string& json_text);

struct TripleOptions {
  bool match_tails = false;
  bool concepts_from_original = false;
  std::size_t cap = 400;
};

TripleStore collect_dialogue_triples(const Dialogue& dialogue, const CorefAnnotation& coref,
                                     const Annotator& annotator, const ConceptIndex& concepts,
                                     const TripleOptions& options = {});
TripleStore collect_dialogue_triples(const Dialogue& dialogue, const CorefAnnotation& coref,
                                     const Annotator& annotator, const ConceptLexicon& lexicon,
                                     const Vocabulary& vocab, const TripleOptions& options = {});

// dialogue_id<TAB>head<TAB>relation<TAB>tail<TAB>source per line.
void save_dialogue_triples(const std::map<std::string, TripleStore>& stores,
                           const std::filesystem::path& path);
std::map<std::string, TripleStore> load_dialogue_triples(const std::filesystem::path& path);

// head<TAB>relation<TAB>tail lines; errors name the 1-based line.
std::vector<Triple> parse_triple_tsv(const std::string& text);

}  // namespace cntf
