#include "emocpd/train.hpp"

#include <cmath>
#include <sstream>

#include "emocpd/adam.hpp"
#include "emocpd/rng.hpp"

namespace emocpd {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (lr < 0 || weight_decay < 0) throw ConfigError("train config: negative rate");
  if (val_every < 0 || max_steps < 0) throw ConfigError("train config: negative step count");
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << "train.lr = " << format_double(lr) << "\n";
  out << "train.weight_decay = " << format_double(weight_decay) << "\n";
  out << "train.batch_size = " << batch_size << "\n";
  out << "train.epochs = " << epochs << "\n";
  out << "train.seed = " << seed << "\n";
  out << "train.val_every = " << val_every << "\n";
  out << "train.max_steps = " << max_steps << "\n";
  return out.str();
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig c;
  c.lr = get_double(kv, "train.lr", c.lr);
  c.weight_decay = get_double(kv, "train.weight_decay", c.weight_decay);
  c.batch_size = get_int(kv, "train.batch_size", c.batch_size);
  c.epochs = get_int(kv, "train.epochs", c.epochs);
  c.seed = get_u64(kv, "train.seed", c.seed);
  c.val_every = get_int(kv, "train.val_every", c.val_every);
  c.max_steps = get_int(kv, "train.max_steps", c.max_steps);
  c.validate();
  return c;
}

namespace {

double batch_accuracy(const nn::Tensor& logits, const std::vector<int>& labels) {
  const int64_t batch = logits.shape()[0];
  const int64_t classes = logits.shape()[1];
  int64_t correct = 0;
  const auto& z = logits.data();
  for (int64_t n = 0; n < batch; ++n) {
    int64_t best = 0;
    for (int64_t k = 1; k < classes; ++k)
      if (z[static_cast<size_t>(n * classes + k)] > z[static_cast<size_t>(n * classes + best)])
        best = k;
    if (best == labels[static_cast<size_t>(n)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch);
}

struct ParamSnapshot {
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> buffers;

  static ParamSnapshot take(nn::EmoModel& model) {
    ParamSnapshot snap;
    for (auto& [name, tensor] : model.named_parameters()) snap.values.push_back(tensor.data());
    for (auto& [name, buffer] : model.named_buffers()) snap.buffers.push_back(*buffer);
    return snap;
  }

  void restore(nn::EmoModel& model) const {
    size_t i = 0;
    for (auto& [name, tensor] : model.named_parameters()) tensor.mutable_data() = values[i++];
    size_t j = 0;
    for (auto& [name, buffer] : model.named_buffers()) *buffer = buffers[j++];
  }
};

}  // namespace

std::vector<ProbabilityRow> predict(nn::EmoModel& model, const std::vector<MicroEnvGrid>& grids,
                                    int64_t batch_size) {
  std::vector<ProbabilityRow> out;
  out.reserve(grids.size());
  for (size_t begin = 0; begin < grids.size(); begin += static_cast<size_t>(batch_size)) {
    size_t end = std::min(grids.size(), begin + static_cast<size_t>(batch_size));
    std::vector<size_t> indices;
    for (size_t i = begin; i < end; ++i) indices.push_back(i);
    nn::Tensor logits = model.forward(make_batch(grids, indices), /*training=*/false);
    nn::Tensor probs = nn::softmax(logits, -1);
    const auto& p = probs.data();
    const int64_t classes = logits.shape()[1];
    for (size_t n = 0; n < indices.size(); ++n) {
      ProbabilityRow row{};
      for (int64_t k = 0; k < classes && k < aa::kNumClasses; ++k)
        row[static_cast<size_t>(k)] = p[n * static_cast<size_t>(classes) + static_cast<size_t>(k)];
      out.push_back(row);
    }
  }
  return out;
}

double evaluate_accuracy(nn::EmoModel& model, const std::vector<MicroEnvGrid>& grids,
                         int64_t batch_size) {
  if (grids.empty()) throw Error("cannot evaluate on an empty set");
  std::vector<ProbabilityRow> probs = predict(model, grids, batch_size);
  int64_t correct = 0;
  for (size_t i = 0; i < grids.size(); ++i)
    if (argmax_class(probs[i]) == grids[i].label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(grids.size());
}

TrainResult train_model(nn::EmoModel& model, const GridDataset& train_set,
                        const GridDataset& val_set, const TrainConfig& config,
                        const std::string& best_checkpoint_path,
                        const std::map<std::string, std::string>& checkpoint_metadata) {
  config.validate();
  if (train_set.samples.empty()) throw Error("training set is empty");
  if (val_set.samples.empty()) throw Error("validation set is empty");

  nn::AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  adam_cfg.weight_decay = config.weight_decay;
  nn::AdamOptimizer optimizer(model.parameters(), adam_cfg);

  Rng rng(config.seed);
  const size_t n = train_set.samples.size();
  const int64_t steps_per_epoch =
      static_cast<int64_t>((n + static_cast<size_t>(config.batch_size) - 1) /
                           static_cast<size_t>(config.batch_size));
  int64_t total_steps = config.epochs * steps_per_epoch;
  if (config.max_steps > 0) total_steps = std::min(total_steps, config.max_steps);

  TrainResult result;
  ParamSnapshot best;
  int64_t step = 0;

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  auto run_validation = [&](StepRecord& record) {
    record.val_acc = evaluate_accuracy(model, val_set.samples, config.batch_size);
    record.has_val = true;
    if (record.val_acc > result.best_val_accuracy) {
      result.best_val_accuracy = record.val_acc;
      result.best_step = record.step;
      best = ParamSnapshot::take(model);
    }
  };

  bool done = false;
  for (int64_t epoch = 0; epoch < config.epochs && !done; ++epoch) {
    rng.shuffle(order);
    for (int64_t b = 0; b < steps_per_epoch && !done; ++b) {
      size_t begin = static_cast<size_t>(b * config.batch_size);
      size_t end = std::min(n, begin + static_cast<size_t>(config.batch_size));
      std::vector<size_t> indices(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));

      nn::Tensor batch = make_batch(train_set.samples, indices);
      std::vector<int> labels = batch_labels(train_set.samples, indices);

      nn::Tensor logits = model.forward(batch, /*training=*/true);
      nn::Tensor loss = nn::cross_entropy(logits, labels);
      double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << step + 1 << " (lr " << config.lr
            << ", last grad norm " << optimizer.last_grad_norm() << ")";
        throw Error(msg.str());
      }

      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      ++step;

      StepRecord record;
      record.step = step;
      record.train_loss = loss_value;
      record.train_acc = batch_accuracy(logits, labels);
      if (config.val_every > 0 && step % config.val_every == 0) run_validation(record);
      if (step >= total_steps) done = true;
      result.history.push_back(record);
    }
  }

  // Final validation unless the last step already ran one.
  if (result.history.empty() || !result.history.back().has_val) {
    StepRecord& record = result.history.empty()
                             ? result.history.emplace_back()
                             : result.history.back();
    if (record.step == 0) record.step = step;
    run_validation(record);
  }
  result.steps_run = step;

  if (!best_checkpoint_path.empty()) {
    ParamSnapshot current = ParamSnapshot::take(model);
    best.restore(model);
    nn::save_checkpoint(model, best_checkpoint_path, checkpoint_metadata);
    current.restore(model);
  }
  return result;
}

std::string history_csv(const std::vector<StepRecord>& history, const std::string& tool_version,
                        const std::string& config_hash, uint64_t seed) {
  std::ostringstream out;
  out << "# tool_version=" << tool_version << " config_hash=" << config_hash << " seed=" << seed
      << "\n";
  out << "step,train_loss,train_acc,val_acc\n";
  for (const StepRecord& r : history) {
    out << r.step << "," << format_double(r.train_loss) << "," << format_double(r.train_acc) << ",";
    if (r.has_val) out << format_double(r.val_acc);
    out << "\n";
  }
  return out.str();
}

}  // namespace emocpd
