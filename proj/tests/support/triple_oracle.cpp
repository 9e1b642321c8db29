#include "triple_oracle.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

namespace cntf::testing {

namespace {

using Edge = std::tuple<std::string, std::string, std::string>;

std::set<Edge> edges(const TripleStore& store) {
  std::set<Edge> out;
  for (const Triple& t : store.triples()) out.insert({t.head, t.relation, t.tail});
  return out;
}

std::size_t count_source(const TripleStore& store, TripleSource source) {
  return static_cast<std::size_t>(std::count_if(store.triples().begin(), store.triples().end(),
                                                [&](const Triple& t) { return t.source == source; }));
}

// Every unordered pair of distinct entities, every entity with every concept,
// and every lexicon edge whose head is a dialogue word.
std::set<Edge> brute_force(const std::vector<std::string>& entities, const std::vector<std::string>& concepts,
                           const std::vector<Triple>& lexicon, const std::set<std::string>& words) {
  std::set<Edge> out;
  for (const auto& a : entities) {
    for (const auto& b : entities) {
      if (a != b) out.insert({std::min(a, b), "RelatedTo", std::max(a, b)});
    }
    for (const auto& c : concepts) out.insert({a, "RelatedTo", c});
  }
  for (const Triple& t : lexicon) {
    if (words.contains(t.head)) out.insert({t.head, t.relation, t.tail});
  }
  return out;
}

std::set<std::string> distinct(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

MohicansReport mohicans_report(const std::filesystem::path& fixtures) {
  const std::filesystem::path dir = fixtures / "mohicans";
  const Dialogue dialogue = load_corpus(dir / "dialogue.jsonl").dialogues.at(0);
  const std::vector<Triple> lexicon_triples = {{"movie", "RelatedTo", "film", TripleSource::kConceptNet},
                                               {"epic", "IsA", "story", TripleSource::kConceptNet}};
  const ConceptLexicon lexicon = make_lexicon(lexicon_triples);
  const Vocabulary vocab({"movie", "film", "epic", "story"});
  FileAnnotator annotator(dir / "annotations");
  MohicansReport r;
  r.store = collect_dialogue_triples(dialogue, annotator.coref(dialogue), annotator, lexicon, vocab);
  r.has_director_edge = r.store.contains("Micheal Mann", "RelatedTo", "The Last of the Mohicans");
  r.has_producer_edge = r.store.contains("Morgan Creek Pictures", "RelatedTo", "The Last of the Mohicans");

  // Oracle inputs read straight from the fixture.
  std::ifstream in(dir / "annotations" / "mohicans.json");
  const nlohmann::json j = nlohmann::json::parse(in);
  std::set<std::string> entity_set;
  for (const auto& e : j.at("entities")) entity_set.insert(e.at(3).get<std::string>());
  const std::vector<std::string> entities(entity_set.begin(), entity_set.end());
  // Words of the rewritten dialogue: text outside every coreference mention,
  // plus the representative names that replace mentions.
  std::vector<std::string> texts;
  for (const Turn& t : dialogue.turns) texts.push_back(t.text);
  std::set<std::string> words;
  for (const auto& cluster : j.at("clusters")) {
    std::string rep = cluster.at("representative").get<std::string>();
    const bool longest = rep.empty();
    for (const auto& m : cluster.at("mentions")) {
      const std::string& text = texts.at(m.at(0).get<std::size_t>());
      const auto b = m.at(1).get<std::size_t>(), e = m.at(2).get<std::size_t>();
      if (longest && e - b > rep.size()) rep = text.substr(b, e - b);
    }
    for (const auto& w : tokenize(rep)) words.insert(w);
    for (const auto& m : cluster.at("mentions")) {
      std::string& text = texts.at(m.at(0).get<std::size_t>());
      const auto b = m.at(1).get<std::size_t>(), e = m.at(2).get<std::size_t>();
      std::fill(text.begin() + static_cast<long>(b), text.begin() + static_cast<long>(e), ' ');
    }
  }
  for (const auto& text : texts) {
    for (const auto& w : tokenize(text)) words.insert(w);
  }
  std::vector<std::string> concepts;
  for (const std::string c : {"movie", "epic"}) {
    if (words.contains(c)) concepts.push_back(c);
  }
  r.entities = entities.size();
  r.concepts = concepts.size();
  r.entity_pairs = count_source(r.store, TripleSource::kEntityPair);
  r.entity_concepts = count_source(r.store, TripleSource::kEntityConcept);
  r.matches_brute_force = edges(r.store) == brute_force(entities, concepts, lexicon_triples, words);
  return r;
}

SyntheticTripleReport synthetic_triple_check(int dialogues, std::uint64_t seed) {
  static const std::vector<std::string> kEntities = {"Nova Prime",  "Delta Works", "Kappa Hill", "Sigma Lake",
                                                     "Orion Belt",  "Vega Point",  "Atlas Forge", "Zeta Lane"};
  static const std::vector<std::string> kHeads = {"river", "bridge", "music", "forest",
                                                  "engine", "garden", "castle", "harbor"};
  static const std::vector<std::string> kTails = {"water", "road", "sound", "tree",
                                                  "motor", "flower", "tower", "ship"};
  static const std::vector<std::string> kFiller = {"we", "saw", "near", "then", "talked", "about", "with", "was"};

  std::vector<Triple> lexicon_triples;
  Tokens vocab_words;
  for (std::size_t i = 0; i < kHeads.size(); ++i) {
    lexicon_triples.push_back({kHeads[i], i % 2 == 0 ? "RelatedTo" : "AtLocation", kTails[i],
                               TripleSource::kConceptNet});
    vocab_words.push_back(kHeads[i]);
    vocab_words.push_back(kTails[i]);
  }
  const Vocabulary vocab(vocab_words);
  const ConceptIndex concepts(make_lexicon(lexicon_triples), vocab);
  RuleBasedAnnotator annotator;

  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  SyntheticTripleReport report;
  for (int d = 0; d < dialogues; ++d) {
    std::vector<std::string> ents = kEntities;
    std::vector<std::string> heads = kHeads;
    std::shuffle(ents.begin(), ents.end(), rng);
    std::shuffle(heads.begin(), heads.end(), rng);
    ents.resize(static_cast<std::size_t>(pick(0, 6)));
    heads.resize(static_cast<std::size_t>(pick(0, 5)));

    // Each entity and concept word appears at least once, some twice; every
    // item is preceded by a lowercase filler so capitalised runs never merge.
    std::vector<std::string> items = ents;
    items.insert(items.end(), heads.begin(), heads.end());
    const std::size_t base = items.size();
    for (std::size_t i = 0; i < base; ++i) {
      if (pick(0, 2) == 0) items.push_back(items[i]);
    }
    std::shuffle(items.begin(), items.end(), rng);
    const int turn_count = pick(2, 5);
    Dialogue dialogue;
    dialogue.dialogue_id = "synthetic" + std::to_string(d);
    std::vector<std::ostringstream> texts(static_cast<std::size_t>(turn_count));
    for (auto& t : texts) t << kFiller[static_cast<std::size_t>(pick(0, 7))];
    for (const auto& item : items) {
      auto& t = texts[static_cast<std::size_t>(pick(0, turn_count - 1))];
      t << ' ' << item << ' ' << kFiller[static_cast<std::size_t>(pick(0, 7))];
    }
    for (int t = 0; t < turn_count; ++t) {
      dialogue.turns.push_back({t % 2 == 0 ? Speaker::kAgent1 : Speaker::kAgent2,
                                texts[static_cast<std::size_t>(t)].str() + " .", {}});
    }

    TripleStore store = collect_dialogue_triples(dialogue, annotator.coref(dialogue), annotator, concepts);
    const std::size_t n = distinct(ents).size();
    const std::size_t m = distinct(heads).size();
    std::set<std::string> words;
    for (const Turn& t : dialogue.turns) {
      for (const auto& w : tokenize(t.text)) words.insert(w);
    }
    ++report.dialogues;
    const bool formula = count_source(store, TripleSource::kEntityPair) == n * (n - 1) / 2 &&
                         count_source(store, TripleSource::kEntityConcept) == n * m;
    const bool enumeration = edges(store) == brute_force(ents, heads, lexicon_triples, words);
    if (!formula) ++report.formula_failures;
    if (!enumeration) ++report.enumeration_failures;
    if ((!formula || !enumeration) && report.first_failure.empty()) {
      report.first_failure = dialogue.dialogue_id + " (n=" + std::to_string(n) + ", m=" + std::to_string(m) +
                             ", got " + std::to_string(store.size()) + " triples)";
    }
  }
  return report;
}

}  // namespace cntf::testing
