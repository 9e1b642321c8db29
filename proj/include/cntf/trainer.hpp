#pragma once

// Adam training with teacher forcing, validation-driven model selection and
// directory checkpoints (manifest.json + params.bin + vocabularies).

#include "cntf/model.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>

namespace cntf {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 0.0005;
  int batch_size = 1;  // dialogues per optimizer step
  int epochs = 10;
  std::uint64_t seed = 1;
  double grad_clip = 5.0;
  int selector_k = 2;
  std::string device = "cpu";

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// One dialogue's turns in order, with its triple set.
struct DialogueData {
  std::string dialogue_id;
  std::vector<TrainingExample> examples;
  std::vector<Triple> triples;
};

std::vector<DialogueData> prepare_dialogues(const CorpusSplit& split,
                                            const std::map<std::string, TripleStore>& triples, int selector_k,
                                            const ExampleLimits& limits = {});

TurnInput turn_input(const TrainingExample& example, const std::vector<Triple>& triples);

struct LossTotals {
  double nll = 0.0;   // summed over tokens
  long tokens = 0;
  int turns = 0;
  double per_token() const { return tokens > 0 ? nll / static_cast<double>(tokens) : 0.0; }
};

// Runs every turn of the dialogue in order, carrying the bank between turns.
// With grads set, accumulates d(loss_turn * weight)/d(theta).
LossTotals dialogue_loss(const CntfModel& model, const DialogueData& dialogue, Gradients* grads = nullptr,
                         double weight = 1.0);

LossTotals corpus_loss(const CntfModel& model, const std::vector<DialogueData>& dialogues);

class Adam {
 public:
  Adam(const ParameterStore& store, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(ParameterStore& store, const Gradients& grads);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

// Scales grads so their global norm is at most max_norm; returns the norm before clipping.
double clip_gradients(Gradients& grads, double max_norm);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;  // nats per target token over the epoch
  double valid_loss = 0.0;
  double seconds = 0.0;
  nlohmann::json to_json() const;
};

struct TrainResult {
  int best_epoch = 0;
  double best_valid_loss = 0.0;
  std::vector<EpochLog> log;
};

// Leaves the model holding the parameters of the epoch with the lowest
// validation loss (training loss when there is no validation data). Epoch 0
// is the untrained model.
TrainResult train(CntfModel& model, const std::vector<DialogueData>& train_set,
                  const std::vector<DialogueData>& valid_set, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

struct CheckpointInfo {
  int epoch = 0;
  double valid_loss = 0.0;
};

void save_checkpoint(const CntfModel& model, const CheckpointInfo& info, const std::filesystem::path& dir);

struct LoadedCheckpoint {
  std::unique_ptr<CntfModel> model;
  CheckpointInfo info;
};

// Verifies the config hash, every tensor's shape and checksum; errors name the
// first tensor that fails.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir,
                                 std::optional<std::uint64_t> expected_config_hash = std::nullopt);

}  // namespace cntf
