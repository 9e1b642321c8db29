// cntf command line: preprocess, triples, train, generate, eval, serve.

#include "cntf/metrics.hpp"
#include "cntf/service.hpp"
#include "cntf/trainer.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace cntf;

std::vector<Tokens> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Tokens> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(tokenize(line));
  return out;
}

std::map<std::string, TripleStore> read_triples(const std::string& path) {
  if (path.empty()) return {};
  return load_dialogue_triples(path);
}

void preprocess(const fs::path& input, const fs::path& output, int vocab_size, int topk) {
  CorpusSplit split = load_corpus(input);
  fs::create_directories(output);
  Vocabulary vocab = build_vocab(split, vocab_size);
  vocab.save(output / "vocab.txt");
  save_corpus(split, output / (to_string(split.name) + ".jsonl"));
  std::ofstream ex(output / (to_string(split.name) + "_examples.jsonl"));
  std::size_t count = 0;
  for (const Dialogue& d : split.dialogues) {
    for (const TrainingExample& e : make_training_examples(d, topk)) {
      ex << json{{"dialogue_id", e.dialogue_id},
                 {"turn_index", e.turn_index},
                 {"dialogue_input", e.dialogue_input},
                 {"knowledge_input", e.knowledge_input},
                 {"target", e.target}}
                .dump()
         << '\n';
      ++count;
    }
  }
  spdlog::info("{} dialogues, {} examples, vocabulary {}", split.dialogues.size(), count, vocab.size());
}

void build_triples(const fs::path& corpus_path, const fs::path& lexicon_path, const std::string& annotations,
                   const std::string& vocab_path, bool match_tails, const fs::path& output) {
  CorpusSplit split = load_corpus(corpus_path);
  Vocabulary vocab = vocab_path.empty() ? build_vocab(split, 30004) : Vocabulary::load(vocab_path);
  ConceptIndex concepts(load_lexicon(lexicon_path), vocab);
  std::unique_ptr<Annotator> annotator;
  if (annotations.empty()) {
    annotator = std::make_unique<RuleBasedAnnotator>();
  } else {
    annotator = std::make_unique<FileAnnotator>(annotations);
  }
  TripleOptions options;
  options.match_tails = match_tails;
  std::map<std::string, TripleStore> stores;
  std::size_t total = 0;
  for (const Dialogue& d : split.dialogues) {
    stores[d.dialogue_id] = collect_dialogue_triples(d, annotator->coref(d), *annotator, concepts, options);
    total += stores[d.dialogue_id].size();
  }
  save_dialogue_triples(stores, output);
  spdlog::info("{} triples over {} dialogues", total, stores.size());
}

void run_train(const fs::path& config_path, const fs::path& corpus_dir, const std::string& triples_path,
               const fs::path& out) {
  std::ifstream in(config_path);
  if (!in) throw std::runtime_error("cannot open " + config_path.string());
  const json config = json::parse(in);
  ModelConfig model_config = ModelConfig::from_json(config.value("model", json::object()));
  TrainConfig train_config = TrainConfig::from_json(config.value("train", json::object()));
  const int vocab_size = config.value("vocab_size", 30004);

  CorpusSplit train_split = load_corpus(corpus_dir / "train.jsonl");
  std::optional<CorpusSplit> valid_split;
  if (fs::exists(corpus_dir / "valid.jsonl")) valid_split = load_corpus(corpus_dir / "valid.jsonl");
  Vocabulary vocab = fs::exists(corpus_dir / "vocab.txt") ? Vocabulary::load(corpus_dir / "vocab.txt")
                                                          : build_vocab(train_split, vocab_size);
  const auto triples = read_triples(triples_path);
  const auto train_set = prepare_dialogues(train_split, triples, train_config.selector_k);
  const auto valid_set =
      valid_split ? prepare_dialogues(*valid_split, triples, train_config.selector_k) : std::vector<DialogueData>{};

  CntfModel model(model_config, vocab, build_entity_vocab(triples), train_config.seed);
  spdlog::info("{} parameters, vocabulary {}, {} train / {} valid dialogues", model.params().scalar_count(),
               vocab.size(), train_set.size(), valid_set.size());
  fs::create_directories(out);
  std::ofstream log(out / "train_log.jsonl");
  TrainResult result = train(model, train_set, valid_set, train_config, [&](const EpochLog& e) {
    log << e.to_json().dump() << std::endl;
    spdlog::info("epoch {} train {:.4f} valid {:.4f} ({:.1f}s)", e.epoch, e.train_loss, e.valid_loss, e.seconds);
  });
  save_checkpoint(model, {result.best_epoch, result.best_valid_loss}, out);
  spdlog::info("best epoch {} valid loss {:.4f}", result.best_epoch, result.best_valid_loss);
}

void run_generate(const fs::path& checkpoint, const fs::path& corpus, const std::string& triples_path, int beam,
                  int max_len, const fs::path& output) {
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
  const auto data = prepare_dialogues(load_corpus(corpus), read_triples(triples_path), 2);
  std::ofstream out(output);
  for (const DialogueData& d : data) {
    StateBank bank;
    for (const TrainingExample& ex : d.examples) {
      const TurnInput input = turn_input(ex, d.triples);
      Generation g = ckpt.model->generate(bank, input, beam, max_len);
      out << join(g.words) << '\n';
      ag::Graph graph(false);
      Binder p(graph, ckpt.model->params());
      bank = ckpt.model->turn_loss(p, bank, input, ex.target).bank;
    }
  }
}

void run_eval(const fs::path& hyp, const fs::path& ref, const std::string& vectors_path,
              const std::string& model_path, const std::string& corpus, const std::string& triples_path) {
  const auto hyps = read_lines(hyp);
  const auto refs = read_lines(ref);
  std::optional<WordVectors> vectors;
  if (!vectors_path.empty()) vectors = WordVectors::load(vectors_path);
  MetricReport report = evaluate_responses(hyps, refs, vectors ? &*vectors : nullptr);
  if (!model_path.empty()) {
    if (corpus.empty()) throw std::runtime_error("--model needs --corpus to score perplexity");
    LoadedCheckpoint ckpt = load_checkpoint(model_path);
    report.ppl = perplexity(*ckpt.model, prepare_dialogues(load_corpus(corpus), read_triples(triples_path), 2));
  }
  std::cout << report.to_json().dump(2) << std::endl;
}

void run_serve(const std::string& checkpoint, const std::string& host, int port, const std::string& ui,
               const std::string& lexicon, std::uint64_t seed) {
  std::shared_ptr<const CntfModel> model;
  if (!checkpoint.empty()) {
    model = std::shared_ptr<const CntfModel>(load_checkpoint(checkpoint).model.release());
  } else {
    spdlog::warn("no checkpoint given; session requests will answer 503");
  }
  std::optional<ConceptLexicon> lex;
  if (!lexicon.empty()) lex = load_lexicon(lexicon);
  ServiceOptions options;
  options.seed = seed;
  ChatEngine engine(model, options, lex);
  httplib::Server server;
  register_routes(server, engine, ui.empty() ? std::nullopt : std::optional<fs::path>(ui));
  spdlog::info("listening on {}:{}", host, port);
  if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* level = std::getenv("CNTF_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(level));

  CLI::App app{"cntf: knowledge-grounded dialogue model"};
  app.require_subcommand(1);

  std::string input, output, corpus, lexicon, annotations, vocab, config, triples, out, hyp, ref, vectors, model,
      checkpoint, ui, host = "127.0.0.1";
  int vocab_size = 30004, topk = 2, port = 8080, beam = 4, max_len = 40;
  bool match_tails = false;
  std::uint64_t seed = 0;

  auto* pre = app.add_subcommand("preprocess", "Normalize a corpus, build the vocabulary and training examples");
  pre->add_option("--input", input, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  pre->add_option("--output", output, "Output directory")->required();
  pre->add_option("--vocab-size", vocab_size, "Vocabulary size including specials");
  pre->add_option("--topk", topk, "Knowledge sentences kept when over budget");

  auto* tri = app.add_subcommand("triples", "Build per-dialogue triple sets");
  tri->add_option("--corpus", corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  tri->add_option("--lexicon", lexicon, "head<TAB>relation<TAB>tail lexicon")->required()->check(CLI::ExistingFile);
  tri->add_option("--annotations", annotations, "Directory of <dialogue_id>.json annotations")
      ->check(CLI::ExistingDirectory);
  tri->add_option("--vocab", vocab, "Vocabulary file (default: built from the corpus)");
  tri->add_flag("--match-tails", match_tails, "Also match utterance words against lexicon tails");
  tri->add_option("--output", output, "Output TSV")->required();

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", config, "JSON with model and train sections")->required()->check(CLI::ExistingFile);
  tr->add_option("--corpus", corpus, "Directory with train.jsonl and optional valid.jsonl, vocab.txt")
      ->required()
      ->check(CLI::ExistingDirectory);
  tr->add_option("--triples", triples, "Triples TSV from `cntf triples`");
  tr->add_option("--out", out, "Checkpoint directory")->required();

  auto* gen = app.add_subcommand("generate", "Decode a response for every target turn of a corpus");
  gen->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  gen->add_option("--corpus", corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  gen->add_option("--triples", triples, "Triples TSV");
  gen->add_option("--beam", beam, "Beam width");
  gen->add_option("--max-len", max_len, "Maximum response length");
  gen->add_option("--output", output, "One response per line")->required();

  auto* ev = app.add_subcommand("eval", "Score responses against references");
  ev->add_option("--hyp", hyp, "Hypotheses, one per line")->required()->check(CLI::ExistingFile);
  ev->add_option("--ref", ref, "References, one per line")->required()->check(CLI::ExistingFile);
  ev->add_option("--vectors", vectors, "Word vectors in GloVe text format");
  ev->add_option("--model", model, "Checkpoint for perplexity");
  ev->add_option("--corpus", corpus, "Corpus JSONL scored for perplexity");
  ev->add_option("--triples", triples, "Triples TSV for the perplexity corpus");

  auto* sv = app.add_subcommand("serve", "Run the chat and trace HTTP service");
  sv->add_option("--checkpoint", checkpoint, "Checkpoint directory");
  sv->add_option("--host", host, "Bind address");
  sv->add_option("--port", port, "Port")->required();
  sv->add_option("--ui", ui, "Static UI directory")->check(CLI::ExistingDirectory);
  sv->add_option("--lexicon", lexicon, "Lexicon used for session triples")->check(CLI::ExistingFile);
  sv->add_option("--seed", seed, "Session id seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (pre->parsed()) preprocess(input, output, vocab_size, topk);
    if (tri->parsed()) build_triples(corpus, lexicon, annotations, vocab, match_tails, output);
    if (tr->parsed()) run_train(config, corpus, triples, out);
    if (gen->parsed()) run_generate(checkpoint, corpus, triples, beam, max_len, output);
    if (ev->parsed()) run_eval(hyp, ref, vectors, model, corpus, triples);
    if (sv->parsed()) run_serve(checkpoint, host, port, ui, lexicon, seed);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
