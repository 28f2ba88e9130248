#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "helioflux/datagen.hpp"
#include "helioflux/degrade.hpp"
#include "helioflux/model.hpp"

namespace helioflux {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double lr_decay = 0.995;  // per epoch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-7;
  bool randomize = true;
  RandomizationConfig randomization;
  /// Stops after this many optimizer steps when positive.
  int max_steps = 0;
  int threads = 1;
};

void validate(const TrainConfig& c);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// learning_rate * lr_decay^epoch, epochs counted from 0.
double learning_rate_at(const TrainConfig& c, int epoch);

/// Adam moments with decoupled weight decay.
class AdamW {
 public:
  explicit AdamW(const TrainConfig& c) : beta1_(c.beta1), beta2_(c.beta2), eps_(c.epsilon), wd_(c.weight_decay) {}
  void step(nn::ParamStore& params, double lr);
  long steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_, wd_;
  long t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_mae = 0.0;
  double val_mae = 0.0;
  double lr = 0.0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One optimizer step on a batch; returns the batch loss (mm). The samples
/// are used as given, so randomization happens in the caller.
double train_step(Model& model, AdamW& opt, const std::vector<const DatasetSample*>& batch, double lr, Rng* dropout_rng);

/// Mean loss_mae over the given samples with dropout off.
double evaluate_mae(Model& model, const std::vector<DatasetSample>& samples, const std::vector<int>& indices,
                    int threads = 1);

/// Trains on the train split, validating on the val split after every epoch.
/// Throws DivergenceError on a non-finite loss.
std::vector<EpochRecord> train(Model& model, const LoadedDataset& data, const TrainConfig& config, std::uint64_t seed,
                               const std::function<void(const EpochRecord&)>& on_epoch = {});

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

}  // namespace helioflux
