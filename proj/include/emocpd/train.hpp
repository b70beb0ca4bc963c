#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emocpd/dataset.hpp"
#include "emocpd/metrics.hpp"
#include "emocpd/net.hpp"

namespace emocpd {

struct TrainConfig {
  double lr = 1e-5;
  double weight_decay = 1e-3;
  int64_t batch_size = 150;
  int64_t epochs = 8;
  uint64_t seed = 0;
  int64_t val_every = 100;  // steps between validation passes; 0 = end of training only
  int64_t max_steps = 0;    // 0 = run all epochs

  void validate() const;
  std::string to_text() const;  // "train.*" key=value block
  static TrainConfig from_key_values(const KeyValues& kv);
};

struct StepRecord {
  int64_t step = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;  // batch accuracy
  bool has_val = false;
  double val_acc = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> history;
  double best_val_accuracy = -1.0;
  int64_t best_step = 0;
  int64_t steps_run = 0;
};

// Steps through the whole training set each epoch in a freshly shuffled
// order (seeded, reproducible). Per step: forward, cross-entropy, backward,
// Adam. Validation runs in eval mode; the parameters at the best validation
// accuracy are written to `best_checkpoint_path` when given. A non-finite
// loss aborts with step / lr / last gradient norm in the message.
TrainResult train_model(nn::EmoModel& model, const GridDataset& train_set,
                        const GridDataset& val_set, const TrainConfig& config,
                        const std::string& best_checkpoint_path = {},
                        const std::map<std::string, std::string>& checkpoint_metadata = {});

// Eval-mode class probabilities, batched.
std::vector<ProbabilityRow> predict(nn::EmoModel& model, const std::vector<MicroEnvGrid>& grids,
                                    int64_t batch_size = 64);

double evaluate_accuracy(nn::EmoModel& model, const std::vector<MicroEnvGrid>& grids,
                         int64_t batch_size = 64);

std::string history_csv(const std::vector<StepRecord>& history, const std::string& tool_version,
                        const std::string& config_hash, uint64_t seed);

}  // namespace emocpd
