#include "cntf/triples.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace cntf {

using nlohmann::json;

std::string to_string(TripleSource s) {
  switch (s) {
    case TripleSource::kEntityPair: return "entity_pair";
    case TripleSource::kEntityConcept: return "entity_concept";
    case TripleSource::kConceptNet: return "conceptnet";
  }
  return "conceptnet";
}

TripleSource triple_source_from_string(const std::string& s) {
  if (s == "entity_pair") return TripleSource::kEntityPair;
  if (s == "entity_concept") return TripleSource::kEntityConcept;
  if (s == "conceptnet") return TripleSource::kConceptNet;
  throw TripleError("unknown triple source '" + s + "'");
}

TripleStore::TripleStore(const std::vector<Triple>& triples) {
  for (const Triple& t : triples) insert(t);
}

bool TripleStore::insert(const Triple& t) {
  auto it = std::lower_bound(triples_.begin(), triples_.end(), t);
  if (it != triples_.end() && *it == t) {
    // Lower enum value means higher priority.
    if (t.source < it->source) it->source = t.source;
    return false;
  }
  triples_.insert(it, t);
  return true;
}

bool TripleStore::contains(const std::string& head, const std::string& relation,
                           const std::string& tail) const {
  Triple probe{head, relation, tail, TripleSource::kConceptNet};
  return std::binary_search(triples_.begin(), triples_.end(), probe);
}

std::set<std::string> TripleStore::entities() const {
  std::set<std::string> out;
  for (const Triple& t : triples_) {
    out.insert(t.head);
    out.insert(t.tail);
  }
  return out;
}

std::set<std::string> TripleStore::relations() const {
  std::set<std::string> out;
  for (const Triple& t : triples_) out.insert(t.relation);
  return out;
}

void TripleStore::cap(std::size_t cap) {
  if (triples_.size() <= cap) return;
  std::vector<Triple> ranked = triples_;
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Triple& a, const Triple& b) { return a.source < b.source; });
  ranked.resize(cap);
  std::sort(ranked.begin(), ranked.end());
  triples_ = std::move(ranked);
}

namespace {

bool is_multi_word(const std::string& s) {
  return s.find_first_of(" _\t") != std::string::npos || tokenize(s).size() != 1;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, '\t')) out.push_back(field);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

}  // namespace

std::vector<Triple> parse_triple_tsv(const std::string& text) {
  std::vector<Triple> out;
  std::stringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3 || trim(fields[0]).empty() || trim(fields[1]).empty() || trim(fields[2]).empty()) {
      throw TripleError("line " + std::to_string(number) + ": expected head<TAB>relation<TAB>tail");
    }
    out.push_back({trim(fields[0]), trim(fields[1]), trim(fields[2]), TripleSource::kConceptNet});
  }
  return out;
}

ConceptLexicon make_lexicon(const std::vector<Triple>& triples) {
  ConceptLexicon lex;
  for (Triple t : triples) {
    t.source = TripleSource::kConceptNet;
    lex.concept_words.insert(t.head);
    lex.concept_words.insert(t.tail);
    lex.raw_triples.push_back(std::move(t));
  }
  return lex;
}

ConceptLexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TripleError("cannot open lexicon " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return make_lexicon(parse_triple_tsv(buf.str()));
  } catch (const TripleError& e) {
    throw TripleError(path.string() + ": " + e.what());
  }
}

Dialogue resolve_and_rewrite(const Dialogue& dialogue, const CorefAnnotation& coref) {
  struct Edit {
    std::size_t begin;
    std::size_t end;
    std::string replacement;
    std::size_t cluster;
  };
  const auto& turns = dialogue.turns;
  std::vector<std::vector<Edit>> edits(turns.size());

  auto span_name = [](std::size_t c, const MentionSpan& m) {
    return "cluster " + std::to_string(c) + " span [" + std::to_string(m.turn) + ", " +
           std::to_string(m.begin) + ", " + std::to_string(m.end) + "]";
  };

  for (std::size_t c = 0; c < coref.clusters.size(); ++c) {
    const CorefCluster& cluster = coref.clusters[c];
    for (const MentionSpan& m : cluster.mentions) {
      if (m.turn < 0 || static_cast<std::size_t>(m.turn) >= turns.size() || m.begin >= m.end ||
          m.end > turns[static_cast<std::size_t>(m.turn)].text.size()) {
        throw TripleError("out-of-range coreference " + span_name(c, m));
      }
    }
    std::string rep = cluster.representative;
    if (rep.empty()) {
      std::vector<MentionSpan> ordered = cluster.mentions;
      std::sort(ordered.begin(), ordered.end(), [](const MentionSpan& a, const MentionSpan& b) {
        return std::tie(a.turn, a.begin) < std::tie(b.turn, b.begin);
      });
      for (const MentionSpan& m : ordered) {
        if (m.end - m.begin > rep.size()) {
          rep = turns[static_cast<std::size_t>(m.turn)].text.substr(m.begin, m.end - m.begin);
        }
      }
    }
    for (const MentionSpan& m : cluster.mentions) {
      const std::string& text = turns[static_cast<std::size_t>(m.turn)].text;
      if (text.compare(m.begin, m.end - m.begin, rep) == 0) continue;
      edits[static_cast<std::size_t>(m.turn)].push_back({m.begin, m.end, rep, c});
    }
  }

  Dialogue out = dialogue;
  for (std::size_t t = 0; t < turns.size(); ++t) {
    auto& list = edits[t];
    std::sort(list.begin(), list.end(), [](const Edit& a, const Edit& b) { return a.begin < b.begin; });
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i].begin < list[i - 1].end) {
        throw TripleError("overlapping coreference spans in turn " + std::to_string(t) + " (clusters " +
                          std::to_string(list[i - 1].cluster) + " and " + std::to_string(list[i].cluster) + ")");
      }
    }
    std::string& text = out.turns[t].text;
    for (auto it = list.rbegin(); it != list.rend(); ++it) {
      text.replace(it->begin, it->end - it->begin, it->replacement);
    }
  }
  return out;
}

std::vector<Triple> build_entity_triples(const std::vector<std::string>& entities,
                                         const std::vector<std::string>& concepts) {
  std::set<std::string> ents(entities.begin(), entities.end());
  std::set<std::string> cons(concepts.begin(), concepts.end());
  std::vector<Triple> out;
  for (auto a = ents.begin(); a != ents.end(); ++a) {
    for (auto b = std::next(a); b != ents.end(); ++b) {
      // std::set iteration already yields *a < *b.
      out.push_back({*a, kRelatedTo, *b, TripleSource::kEntityPair});
    }
  }
  for (const auto& e : ents) {
    for (const auto& c : cons) {
      if (e != c) out.push_back({e, kRelatedTo, c, TripleSource::kEntityConcept});
    }
  }
  return out;
}

TripleStore filter_conceptnet(const ConceptLexicon& lexicon, const Vocabulary& vocab) {
  TripleStore store;
  for (const Triple& t : lexicon.raw_triples) {
    if (t.head == t.tail || is_multi_word(t.head) || is_multi_word(t.tail)) continue;
    const std::string head = to_lower(t.head);
    const std::string tail = to_lower(t.tail);
    if (vocab.id(head) < Vocabulary::kNumSpecials || vocab.id(tail) < Vocabulary::kNumSpecials) continue;
    store.insert({head, t.relation, tail, TripleSource::kConceptNet});
  }
  return store;
}

ConceptIndex::ConceptIndex(const ConceptLexicon& lexicon, const Vocabulary& vocab)
    : store_(filter_conceptnet(lexicon, vocab)) {
  const auto& ts = store_.triples();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    concepts_.insert(ts[i].head);
    concepts_.insert(ts[i].tail);
    by_head_.emplace(ts[i].head, i);
    by_tail_.emplace(ts[i].tail, i);
  }
}

std::vector<Triple> ConceptIndex::with_head(const std::string& word) const {
  std::vector<Triple> out;
  auto [b, e] = by_head_.equal_range(word);
  for (auto it = b; it != e; ++it) out.push_back(store_.triples()[it->second]);
  return out;
}

std::vector<Triple> ConceptIndex::with_tail(const std::string& word) const {
  std::vector<Triple> out;
  auto [b, e] = by_tail_.equal_range(word);
  for (auto it = b; it != e; ++it) out.push_back(store_.triples()[it->second]);
  return out;
}

CorefAnnotation RuleBasedAnnotator::coref(const Dialogue&) const { return {}; }

EntityAnnotation RuleBasedAnnotator::entities(const Dialogue& rewritten) const {
  static const std::set<std::string> kConnectors = {"of", "the", "and", "de", "la", "von", "van", "for"};
  EntityAnnotation out;
  for (std::size_t t = 0; t < rewritten.turns.size(); ++t) {
    const std::string& text = rewritten.turns[t].text;
    auto spans = tokenize_with_offsets(text);
    auto capitalized = [&](std::size_t i) {
      const char c = text[spans[i].begin];
      return c >= 'A' && c <= 'Z';
    };
    std::size_t i = 0;
    while (i < spans.size()) {
      if (!capitalized(i)) {
        ++i;
        continue;
      }
      std::size_t last = i;
      std::size_t count = 1;
      std::size_t j = i + 1;
      while (j < spans.size()) {
        if (capitalized(j)) {
          last = j;
          ++count;
          ++j;
          continue;
        }
        std::size_t k = j;
        while (k < spans.size() && kConnectors.contains(spans[k].text) && !capitalized(k)) ++k;
        if (k > j && k < spans.size() && capitalized(k)) {
          count += k - j;
          j = k;
          continue;
        }
        break;
      }
      if (count >= 2) {
        std::size_t b = spans[i].begin;
        std::size_t e = spans[last].end;
        out.spans.push_back({static_cast<int>(t), b, e, text.substr(b, e - b)});
      }
      i = last + 1;
    }
  }
  return out;
}

AnnotationFile parse_annotation(const std::string& json_text) {
  AnnotationFile out;
  try {
    json j = json::parse(json_text);
    for (const auto& jc : j.value("clusters", json::array())) {
      CorefCluster c;
      c.representative = jc.value("representative", std::string());
      for (const auto& m : jc.at("mentions")) {
        c.mentions.push_back({m.at(0).get<int>(), m.at(1).get<std::size_t>(), m.at(2).get<std::size_t>()});
      }
      out.coref.clusters.push_back(std::move(c));
    }
    for (const auto& je : j.value("entities", json::array())) {
      out.entities.spans.push_back({je.at(0).get<int>(), je.at(1).get<std::size_t>(),
                                    je.at(2).get<std::size_t>(), je.at(3).get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw TripleError(std::string("annotation: ") + e.what());
  }
  return out;
}

namespace {

AnnotationFile read_annotation(const std::filesystem::path& dir, const std::string& id) {
  auto path = dir / (id + ".json");
  std::ifstream in(path);
  if (!in) throw TripleError("no annotation file for dialogue '" + id + "' at " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_annotation(buf.str());
}

}  // namespace

CorefAnnotation FileAnnotator::coref(const Dialogue& dialogue) const {
  return read_annotation(dir_, dialogue.dialogue_id).coref;
}

EntityAnnotation FileAnnotator::entities(const Dialogue& rewritten) const {
  EntityAnnotation ents = read_annotation(dir_, rewritten.dialogue_id).entities;
  for (const EntitySpan& s : ents.spans) {
    if (s.turn < 0 || static_cast<std::size_t>(s.turn) >= rewritten.turns.size() || s.begin >= s.end ||
        s.end > rewritten.turns[static_cast<std::size_t>(s.turn)].text.size()) {
      throw TripleError("entity span outside turn " + std::to_string(s.turn) + " of dialogue '" +
                        rewritten.dialogue_id + "'");
    }
  }
  return ents;
}

TripleStore collect_dialogue_triples(const Dialogue& dialogue, const CorefAnnotation& coref,
                                     const Annotator& annotator, const ConceptIndex& concepts,
                                     const TripleOptions& options) {
  Dialogue rewritten = resolve_and_rewrite(dialogue, coref);
  EntityAnnotation ents = annotator.entities(rewritten);

  std::vector<std::string> entity_names;
  for (const EntitySpan& s : ents.spans) {
    std::string name = trim(s.surface);
    if (!name.empty()) entity_names.push_back(name);
  }

  const Dialogue& word_source = options.concepts_from_original ? dialogue : rewritten;
  std::set<std::string> words;
  std::set<std::string> concept_words;
  for (std::size_t t = 0; t < word_source.turns.size(); ++t) {
    for (const TokenSpan& tok : tokenize_with_offsets(word_source.turns[t].text)) {
      if (is_punctuation_token(tok.text)) continue;
      words.insert(tok.text);
      bool inside_entity = false;
      if (!options.concepts_from_original) {
        for (const EntitySpan& s : ents.spans) {
          if (static_cast<std::size_t>(s.turn) == t && tok.begin >= s.begin && tok.end <= s.end) {
            inside_entity = true;
            break;
          }
        }
      }
      if (!inside_entity && concepts.is_concept(tok.text)) concept_words.insert(tok.text);
    }
  }

  TripleStore store;
  for (const auto& w : words) {
    for (const Triple& t : concepts.with_head(w)) store.insert(t);
    if (options.match_tails) {
      for (const Triple& t : concepts.with_tail(w)) store.insert(t);
    }
  }
  for (const Triple& t : build_entity_triples(entity_names, {concept_words.begin(), concept_words.end()})) {
    store.insert(t);
  }
  store.cap(options.cap);
  return store;
}

TripleStore collect_dialogue_triples(const Dialogue& dialogue, const CorefAnnotation& coref,
                                     const Annotator& annotator, const ConceptLexicon& lexicon,
                                     const Vocabulary& vocab, const TripleOptions& options) {
  return collect_dialogue_triples(dialogue, coref, annotator, ConceptIndex(lexicon, vocab), options);
}

void save_dialogue_triples(const std::map<std::string, TripleStore>& stores,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw TripleError("cannot write " + path.string());
  for (const auto& [id, store] : stores) {
    for (const Triple& t : store.triples()) {
      out << id << '\t' << t.head << '\t' << t.relation << '\t' << t.tail << '\t' << to_string(t.source) << '\n';
    }
  }
}

std::map<std::string, TripleStore> load_dialogue_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TripleError("cannot open " + path.string());
  std::map<std::string, TripleStore> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 5) {
      throw TripleError(path.string() + ": line " + std::to_string(number) +
                        ": expected dialogue_id<TAB>head<TAB>relation<TAB>tail<TAB>source");
    }
    out[f[0]].insert({f[1], f[2], f[3], triple_source_from_string(f[4])});
  }
  return out;
}

}  // namespace cntf
