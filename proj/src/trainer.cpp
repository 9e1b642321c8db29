#include "cntf/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace cntf {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train config: learning_rate must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
  if (!(grad_clip > 0.0)) throw std::invalid_argument("train config: grad_clip must be positive");
  if (selector_k < 1) throw std::invalid_argument("train config: selector_k must be >= 1");
  if (device != "cpu") throw std::invalid_argument("train config: only the cpu device is available");
}

json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"batch_size", batch_size}, {"epochs", epochs}, {"seed", seed},
          {"grad_clip", grad_clip},         {"selector_k", selector_k}, {"device", device}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.selector_k = j.value("selector_k", c.selector_k);
  c.device = j.value("device", c.device);
  c.validate();
  return c;
}

std::vector<DialogueData> prepare_dialogues(const CorpusSplit& split, const std::map<std::string, TripleStore>& triples,
                                            int selector_k, const ExampleLimits& limits) {
  std::vector<DialogueData> out;
  for (const Dialogue& d : split.dialogues) {
    DialogueData data{d.dialogue_id, make_training_examples(d, selector_k, limits), {}};
    if (data.examples.empty()) continue;
    auto it = triples.find(d.dialogue_id);
    if (it != triples.end()) data.triples = it->second.triples();
    out.push_back(std::move(data));
  }
  return out;
}

TurnInput turn_input(const TrainingExample& example, const std::vector<Triple>& triples) {
  return {example.dialogue_input, example.knowledge_input, triples};
}

LossTotals dialogue_loss(const CntfModel& model, const DialogueData& dialogue, Gradients* grads, double weight) {
  LossTotals totals;
  StateBank bank;
  for (const TrainingExample& ex : dialogue.examples) {
    ag::Graph g(grads != nullptr);
    Binder p(g, model.params());
    TurnLoss t = model.turn_loss(p, bank, turn_input(ex, dialogue.triples), ex.target);
    const double loss = t.loss.scalar();
    if (!std::isfinite(loss)) {
      throw TrainError("non-finite loss in dialogue " + dialogue.dialogue_id + " turn " +
                       std::to_string(ex.turn_index));
    }
    totals.nll += loss * static_cast<double>(t.targets.size());
    totals.tokens += static_cast<long>(t.targets.size());
    totals.turns += 1;
    if (grads != nullptr) {
      g.backward(ag::scale(t.loss, weight));
      p.collect(*grads);
    }
    bank = std::move(t.bank);
  }
  return totals;
}

LossTotals corpus_loss(const CntfModel& model, const std::vector<DialogueData>& dialogues) {
  LossTotals sum;
  for (const DialogueData& d : dialogues) {
    LossTotals t = dialogue_loss(model, d);
    sum.nll += t.nll;
    sum.tokens += t.tokens;
    sum.turns += t.turns;
  }
  return sum;
}

Adam::Adam(const ParameterStore& store, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (int i = 0; i < store.size(); ++i) {
    m_.push_back(Matrix::Zero(store.value(i).rows(), store.value(i).cols()));
    v_.push_back(Matrix::Zero(store.value(i).rows(), store.value(i).cols()));
  }
}

void Adam::step(ParameterStore& store, const Gradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const Matrix& g = grads.tensors[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    Matrix& w = store.value(static_cast<int>(i));
    w.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double clip_gradients(Gradients& grads, double max_norm) {
  const double norm = grads.norm();
  if (norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

json EpochLog::to_json() const {
  return {{"epoch", epoch}, {"train_loss", train_loss}, {"valid_loss", valid_loss}, {"seconds", seconds}};
}

namespace {

std::vector<Matrix> snapshot(const ParameterStore& store) {
  std::vector<Matrix> out;
  for (int i = 0; i < store.size(); ++i) out.push_back(store.value(i));
  return out;
}

void restore(ParameterStore& store, const std::vector<Matrix>& values) {
  for (int i = 0; i < store.size(); ++i) store.value(i) = values[static_cast<std::size_t>(i)];
}

}  // namespace

TrainResult train(CntfModel& model, const std::vector<DialogueData>& train_set,
                  const std::vector<DialogueData>& valid_set, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (train_set.empty()) throw TrainError("training set is empty");
  Rng rng(config.seed);
  Adam adam(model.params(), config.learning_rate);
  const std::vector<DialogueData>& selection_set = valid_set.empty() ? train_set : valid_set;

  TrainResult result;
  auto record = [&](EpochLog entry) {
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  };
  {
    const auto start = std::chrono::steady_clock::now();
    EpochLog initial;
    initial.train_loss = corpus_loss(model, train_set).per_token();
    initial.valid_loss = valid_set.empty() ? initial.train_loss : corpus_loss(model, valid_set).per_token();
    initial.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.best_valid_loss = initial.valid_loss;
    record(initial);
  }
  std::vector<Matrix> best = snapshot(model.params());

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  long batch_number = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    LossTotals epoch_totals;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch_size)) {
      ++batch_number;
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(config.batch_size));
      int turns = 0;
      for (std::size_t i = b; i < end; ++i) turns += static_cast<int>(train_set[order[i]].examples.size());
      Gradients grads(model.params());
      try {
        for (std::size_t i = b; i < end; ++i) {
          LossTotals t = dialogue_loss(model, train_set[order[i]], &grads, 1.0 / turns);
          epoch_totals.nll += t.nll;
          epoch_totals.tokens += t.tokens;
          epoch_totals.turns += t.turns;
        }
      } catch (const TrainError& e) {
        throw TrainError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_number) + ": " +
                         e.what());
      }
      if (!grads.finite()) {
        throw TrainError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_number) +
                         ": non-finite gradient");
      }
      clip_gradients(grads, config.grad_clip);
      adam.step(model.params(), grads);
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_totals.per_token();
    entry.valid_loss = corpus_loss(model, selection_set).per_token();
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (entry.valid_loss < result.best_valid_loss) {
      result.best_valid_loss = entry.valid_loss;
      result.best_epoch = epoch;
      best = snapshot(model.params());
    }
    record(entry);
  }
  restore(model.params(), best);
  return result;
}

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kBlob = "params.bin";

std::uint64_t tensor_hash(const Matrix& m) {
  return fnv1a(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

}  // namespace

void save_checkpoint(const CntfModel& model, const CheckpointInfo& info, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const ParameterStore& store = model.params();
  json tensors = json::array();
  std::ofstream blob(dir / kBlob, std::ios::binary);
  if (!blob) throw CheckpointError("cannot write " + (dir / kBlob).string());
  std::size_t offset = 0;
  for (int i = 0; i < store.size(); ++i) {
    const Matrix& m = store.value(i);
    const std::size_t bytes = static_cast<std::size_t>(m.size()) * sizeof(double);
    blob.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(bytes));
    tensors.push_back({{"name", store.name(i)},
                       {"rows", m.rows()},
                       {"cols", m.cols()},
                       {"offset", offset},
                       {"fnv1a", hex64(tensor_hash(m))}});
    offset += bytes;
  }
  if (!blob) throw CheckpointError("failed writing " + (dir / kBlob).string());
  json manifest = {{"config", model.config().to_json()},
                   {"config_hash", hex64(model.config().hash())},
                   {"epoch", info.epoch},
                   {"valid_loss", info.valid_loss},
                   {"tensors", tensors}};
  std::ofstream out(dir / kManifest);
  out << manifest.dump(2) << '\n';
  if (!out) throw CheckpointError("failed writing " + (dir / kManifest).string());
  model.vocab().save(dir / "vocab.txt");
  model.entities().save(dir / "entities.txt");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir, std::optional<std::uint64_t> expected_config_hash) {
  std::ifstream in(dir / kManifest);
  if (!in) throw CheckpointError("cannot open " + (dir / kManifest).string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError("malformed manifest: " + std::string(e.what()));
  }
  ModelConfig config = ModelConfig::from_json(manifest.at("config"));
  const std::string stored_hash = manifest.at("config_hash").get<std::string>();
  if (hex64(config.hash()) != stored_hash) {
    throw CheckpointError("config hash mismatch: manifest says " + stored_hash + ", config hashes to " +
                          hex64(config.hash()));
  }
  if (expected_config_hash && *expected_config_hash != config.hash()) {
    throw CheckpointError("config hash mismatch: expected " + hex64(*expected_config_hash) + ", checkpoint has " +
                          stored_hash);
  }

  LoadedCheckpoint loaded;
  loaded.info.epoch = manifest.value("epoch", 0);
  loaded.info.valid_loss = manifest.value("valid_loss", 0.0);
  loaded.model = std::make_unique<CntfModel>(config, Vocabulary::load(dir / "vocab.txt"),
                                             Vocabulary::load(dir / "entities.txt"), 0);

  std::ifstream blob_in(dir / kBlob, std::ios::binary);
  if (!blob_in) throw CheckpointError("cannot open " + (dir / kBlob).string());
  std::vector<char> blob((std::istreambuf_iterator<char>(blob_in)), std::istreambuf_iterator<char>());

  ParameterStore& store = loaded.model->params();
  const json& tensors = manifest.at("tensors");
  std::vector<bool> seen(static_cast<std::size_t>(store.size()), false);
  for (const json& t : tensors) {
    const std::string name = t.at("name").get<std::string>();
    if (!store.has(name)) throw CheckpointError("tensor '" + name + "': not part of this model");
    const int i = store.index(name);
    Matrix& target = store.value(i);
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    if (rows != target.rows() || cols != target.cols()) {
      throw CheckpointError("tensor '" + name + "': shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                            " does not match model shape " + std::to_string(target.rows()) + "x" +
                            std::to_string(target.cols()));
    }
    const auto offset = t.at("offset").get<std::size_t>();
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (offset > blob.size() || bytes > blob.size() - offset) {
      throw CheckpointError("tensor '" + name + "': blob too short");
    }
    Matrix value(rows, cols);
    std::memcpy(value.data(), blob.data() + offset, bytes);
    if (hex64(tensor_hash(value)) != t.at("fnv1a").get<std::string>()) {
      throw CheckpointError("tensor '" + name + "': checksum mismatch");
    }
    target = std::move(value);
    seen[static_cast<std::size_t>(i)] = true;
  }
  for (int i = 0; i < store.size(); ++i) {
    if (!seen[static_cast<std::size_t>(i)]) throw CheckpointError("tensor '" + store.name(i) + "': missing");
  }
  return loaded;
}

}  // namespace cntf
