#include "cntf/model.hpp"

#include <set>
#include <stdexcept>

namespace cntf {

Vocabulary build_entity_vocab(const std::map<std::string, TripleStore>& stores) {
  std::set<std::string> names;
  for (const auto& [_, store] : stores) {
    for (const Triple& t : store.triples()) {
      names.insert(t.head);
      names.insert(t.tail);
    }
  }
  std::vector<std::string> regular;
  for (const auto& n : names) {
    if (n != "<pad>" && n != "<bos>" && n != "<eos>" && n != "<unk>") regular.push_back(n);
  }
  return Vocabulary(regular);
}

CntfModel::CntfModel(ModelConfig config, Vocabulary vocab, Vocabulary entities, std::uint64_t seed)
    : config_(std::move(config)), vocab_(std::move(vocab)), entities_(std::move(entities)) {
  auto fill = [](int& field, int actual, const char* name) {
    if (field == 0) field = actual;
    if (field != actual) {
      throw std::invalid_argument(std::string("model config: ") + name + " is " + std::to_string(field) +
                                  " but the vocabulary has " + std::to_string(actual) + " entries");
    }
  };
  fill(config_.vocab_size, vocab_.size(), "vocab_size");
  fill(config_.triple_vocab_size, entities_.size(), "triple_vocab_size");
  config_.validate();

  Rng rng(seed);
  const int h = config_.hidden_dim;
  const double scale = config_.init_scale;
  embedding_ = params_.add_uniform("embedding", config_.vocab_size, config_.embed_dim, scale, rng, true);
  entity_embedding_ = params_.add_uniform("entity_embedding", config_.triple_vocab_size, h, scale, rng, true);
  if (config_.triple_combine == TripleCombine::kConcatProjection) {
    triple_projection_ = params_.add_uniform("triple_projection", 2 * h, h, scale, rng);
  }
  dialogue_encoder_ = add_encoder(params_, "dialogue_encoder", config_, rng);
  knowledge_encoder_ = add_encoder(params_, "knowledge_encoder", config_, rng);
  interactive_hops_ = add_hops(params_, "interactive", h, config_.hops, scale, rng);
  decoder_ = add_decoder(params_, "decoder", config_.vocab_size, config_.embed_dim, h, config_.hops, scale, rng);
}

Var CntfModel::triple_embeddings(Binder& p, const std::vector<Triple>& triples) const {
  if (triples.empty()) return {};
  std::vector<int> heads;
  std::vector<int> tails;
  for (const Triple& t : triples) {
    heads.push_back(entities_.id(t.head));
    tails.push_back(entities_.id(t.tail));
  }
  Var table = p[entity_embedding_];
  Var h = ag::gather_rows(table, heads);
  Var t = ag::gather_rows(table, tails);
  switch (config_.triple_combine) {
    case TripleCombine::kMean: return ag::scale(ag::add(h, t), 0.5);
    case TripleCombine::kSum: return ag::add(h, t);
    case TripleCombine::kConcatProjection: {
      const Var parts[] = {h, t};
      return ag::matmul(ag::concat_cols(parts), p[triple_projection_]);
    }
  }
  return {};
}

TurnSetup CntfModel::setup(Binder& p, const StateBank& bank, const TurnInput& input) const {
  ag::Graph& g = p.graph();
  Tokens dialogue = input.dialogue;
  const auto max_dialogue = static_cast<std::size_t>(config_.max_dialogue_tokens);
  if (dialogue.size() > max_dialogue) dialogue.erase(dialogue.begin(), dialogue.end() - static_cast<std::ptrdiff_t>(max_dialogue));
  if (dialogue.empty()) throw std::invalid_argument("turn has an empty dialogue input");
  Tokens knowledge = input.knowledge;
  if (knowledge.size() > static_cast<std::size_t>(config_.max_knowledge_tokens)) {
    knowledge.resize(static_cast<std::size_t>(config_.max_knowledge_tokens));
  }
  if (knowledge.empty()) knowledge.push_back(kNoKnowledgeToken);

  TurnSetup s{.bank = {}, .knowledge = knowledge, .triples = input.triples, .words = CopyVocabulary(vocab_),
              .index = {}, .context = {}, .initial = {}, .weighted_context = {}};
  if (s.triples.size() > static_cast<std::size_t>(config_.triple_cap)) {
    TripleStore capped(s.triples);
    capped.cap(static_cast<std::size_t>(config_.triple_cap));
    s.triples = capped.triples();
  }

  const std::vector<int> dialogue_ids = vocab_.encode(dialogue);
  const std::vector<int> knowledge_ids = vocab_.encode(knowledge);
  HiddenStates hd = encode(p, embedding_, dialogue_encoder_, dialogue_ids, dialogue);
  HiddenStates hk = encode(p, embedding_, knowledge_encoder_, knowledge_ids, knowledge);

  s.bank = push_turn(bank, hd.states.value(), dialogue, input.window > 0 ? input.window : config_.window);
  const Eigen::Index retained = s.bank.positions() - static_cast<Eigen::Index>(dialogue.size());
  Var ds = hd.states;
  Var dh = hd.states;
  if (retained > 0) {
    const Var ds_parts[] = {g.constant(s.bank.ds.topRows(retained)), hd.states};
    const Var dh_parts[] = {g.constant(s.bank.dh.topRows(retained)), hd.states};
    ds = ag::concat_rows(ds_parts);
    dh = ag::concat_rows(dh_parts);
  }

  for (const auto& tok : s.bank.tokens) s.index.dialogue.push_back(s.words.add(tok));
  for (const auto& tok : knowledge) s.index.knowledge.push_back(s.words.add(tok));
  for (const Triple& t : s.triples) {
    s.index.triples.push_back(s.words.add(config_.triple_copy_word == CopyWord::kTail ? t.tail : t.head));
  }

  s.weighted_context = interactive_context(p, interactive_hops_, ds, dh, hk.states);
  s.initial = init_decoder(s.weighted_context, ds, hk.states);
  s.context.dh = dh;
  s.context.kb_h = hk.states;
  s.context.triples = triple_embeddings(p, s.triples);
  s.context.extended_size = s.words.size();
  s.context.triple_hops = config_.triple_hops;
  s.context.triple_topk = config_.triple_topk;
  return s;
}

std::vector<int> CntfModel::target_ids(const TurnSetup& setup, const Tokens& target) const {
  std::vector<int> ids;
  for (const auto& tok : target) ids.push_back(setup.words.lookup(tok));
  ids.push_back(Vocabulary::kEos);
  return ids;
}

TurnLoss CntfModel::turn_loss(Binder& p, const StateBank& bank, const TurnInput& input, const Tokens& target) const {
  TurnSetup s = setup(p, bank, input);
  s.context.index = &s.index;
  TurnLoss out;
  out.targets = target_ids(s, target);
  DecoderState state = s.initial;
  int prev = Vocabulary::kBos;
  for (int y : out.targets) {
    StepOutput o = step(p, decoder_, embedding_, state, prev, s.context);
    out.distributions.push_back(o.p_final);
    state = o.next;
    prev = input_id(y);
  }
  out.loss = sequence_loss(out.distributions, out.targets);
  out.bank = std::move(s.bank);
  out.bank.ds = state.ds.value();
  return out;
}

namespace {

struct StepNode {
  std::shared_ptr<const StepNode> prev;
  std::shared_ptr<const StepOutput> step;
};

struct SearchState {
  DecoderState decoder;
  std::shared_ptr<const StepNode> history;
};

}  // namespace

template <class Search>
Generation CntfModel::run_search(const StateBank& bank, const TurnInput& input, Search search) const {
  ag::Graph g(false);
  Binder p(g, params_);
  TurnSetup s = setup(p, bank, input);
  s.context.index = &s.index;

  auto expand = [&](const SearchState& state, int last) {
    auto out = std::make_shared<StepOutput>(step(p, decoder_, embedding_, state.decoder, input_id(last), s.context));
    Eigen::VectorXd log_probs = out->p_final.value().col(0).array().log();
    SearchState next{out->next, std::make_shared<const StepNode>(StepNode{state.history, out})};
    return std::make_pair(std::move(log_probs), std::move(next));
  };
  BeamHypothesis<SearchState> best = search(SearchState{s.initial, nullptr}, expand);

  Generation gen;
  gen.ids = best.tokens;
  gen.log_prob = best.log_prob;
  gen.score = best.normalized();
  gen.finished = best.finished;
  std::vector<std::shared_ptr<const StepOutput>> steps;
  for (auto node = best.state.history; node; node = node->prev) steps.push_back(node->step);
  std::reverse(steps.begin(), steps.end());
  for (std::size_t i = 0; i < gen.ids.size(); ++i) {
    const int id = gen.ids[i];
    gen.trace.push_back(make_trace_record(*steps.at(i), id, s.words, s.triples));
    if (id != Vocabulary::kEos) gen.words.push_back(s.words.surface(id));
  }
  gen.bank = std::move(s.bank);
  gen.bank.ds = best.state.decoder.ds.value();
  return gen;
}

Generation CntfModel::generate(const StateBank& bank, const TurnInput& input, int beam_width, int max_len) const {
  return run_search(bank, input, [&](SearchState init, auto expand) {
    return beam_search(std::move(init), Vocabulary::kBos, Vocabulary::kEos, beam_width, max_len, expand);
  });
}

Generation CntfModel::greedy(const StateBank& bank, const TurnInput& input, int max_len) const {
  return run_search(bank, input, [&](SearchState init, auto expand) {
    return greedy_search(std::move(init), Vocabulary::kBos, Vocabulary::kEos, max_len, expand);
  });
}

}  // namespace cntf
