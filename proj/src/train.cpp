#include "helioflux/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "helioflux/parallel.hpp"

namespace helioflux {

namespace {

// Stream keys for derive_seed so the shuffle, augmentation, and dropout
// draws never share a sequence.
constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kAugmentStream = 0x4155474dULL;
constexpr std::uint64_t kDropoutStream = 0x44524f50ULL;

}  // namespace

void validate(const TrainConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("train config: " + what);
  };
  require(c.epochs > 0, "epochs must be positive");
  require(c.batch_size > 0, "batch_size must be positive");
  require(c.learning_rate > 0.0 && std::isfinite(c.learning_rate), "learning_rate must be positive");
  require(c.lr_decay > 0.0 && c.lr_decay <= 1.0, "lr_decay must be in (0, 1]");
  require(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0, "betas must be in [0, 1)");
  require(c.epsilon > 0.0, "epsilon must be positive");
  require(c.weight_decay >= 0.0, "weight_decay must be non-negative");
  require(c.max_steps >= 0, "max_steps must be non-negative");
  require(c.threads >= 1, "threads must be at least 1");
  validate(c.randomization);
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"lr_decay", c.lr_decay},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"weight_decay", c.weight_decay},
          {"randomize", c.randomize},
          {"randomization", to_json(c.randomization)},
          {"max_steps", c.max_steps}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.randomize = j.value("randomize", c.randomize);
  if (j.contains("randomization")) c.randomization = randomization_from_json(j.at("randomization"));
  c.max_steps = j.value("max_steps", c.max_steps);
  validate(c);
  return c;
}

double learning_rate_at(const TrainConfig& c, int epoch) { return c.learning_rate * std::pow(c.lr_decay, epoch); }

void AdamW::step(nn::ParamStore& params, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& p : params.all()) {
    p.m = beta1_ * p.m + (1.0 - beta1_) * p.grad;
    p.v = beta2_ * p.v + (1.0 - beta2_) * p.grad.cwiseAbs2();
    const auto update = (p.m.array() / c1) / ((p.v.array() / c2).sqrt() + eps_);
    p.value.array() -= lr * (update + wd_ * p.value.array());
  }
}

double train_step(Model& model, AdamW& opt, const std::vector<const DatasetSample*>& batch, double lr, Rng* dropout_rng) {
  std::vector<SampleInput> inputs;
  std::vector<const HeliostatSurface*> truths;
  for (const auto* s : batch) {
    inputs.push_back(make_input(*s));
    truths.push_back(&s->truth);
  }
  model.params().zero_grad();
  nn::Tape t;
  const nn::Var pred = model.generate(t, model.encode(t, inputs, dropout_rng));
  const nn::Var loss = nn::mae_loss(t, pred, surface_targets(truths));
  const double value = t.value(loss)(0, 0);
  if (!std::isfinite(value)) throw DivergenceError("training diverged: non-finite loss at step " +
                                                   std::to_string(opt.steps() + 1));
  t.backward(loss);
  opt.step(model.params(), lr);
  return value;
}

double evaluate_mae(Model& model, const std::vector<DatasetSample>& samples, const std::vector<int>& indices,
                    int threads) {
  if (indices.empty()) return 0.0;
  std::vector<double> losses(indices.size());
  parallel_for(indices.size(), threads, [&](std::size_t k) {
    const DatasetSample& s = samples[static_cast<std::size_t>(indices[k])];
    losses[k] = loss_mae(model.predict(make_input(s)), s.truth);
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

std::vector<EpochRecord> train(Model& model, const LoadedDataset& data, const TrainConfig& config, std::uint64_t seed,
                               const std::function<void(const EpochRecord&)>& on_epoch) {
  validate(config);
  std::vector<int> order = data.indices(Split::kTrain);
  if (order.empty()) throw std::invalid_argument("train: the train split is empty");
  const std::vector<int> val = data.indices(Split::kVal);

  AdamW opt(config);
  std::vector<EpochRecord> history;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = learning_rate_at(config, epoch);
    Rng shuffle(derive_seed(seed, kShuffleStream + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    bool stop = false;
    for (std::size_t b = 0; b < order.size() && !stop; b += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t n = std::min(order.size() - b, static_cast<std::size_t>(config.batch_size));
      std::vector<DatasetSample> randomized(config.randomize ? n : 0);
      std::vector<const DatasetSample*> batch(n);
      if (config.randomize) {
        parallel_for(n, config.threads, [&](std::size_t k) {
          const auto index = static_cast<std::uint64_t>(order[b + k]);
          Rng rng(derive_seed(derive_seed(seed, kAugmentStream + static_cast<std::uint64_t>(epoch)), index));
          randomized[k] = randomize_sample(data.samples[index], config.randomization, rng);
        });
        for (std::size_t k = 0; k < n; ++k) batch[k] = &randomized[k];
      } else {
        for (std::size_t k = 0; k < n; ++k) batch[k] = &data.samples[static_cast<std::size_t>(order[b + k])];
      }
      Rng dropout_rng(derive_seed(seed, kDropoutStream + static_cast<std::uint64_t>(step)));
      loss_sum += train_step(model, opt, batch, lr, &dropout_rng) * static_cast<double>(n);
      seen += n;
      ++step;
      stop = config.max_steps > 0 && step >= config.max_steps;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_mae = loss_sum / static_cast<double>(seen);
    rec.val_mae = evaluate_mae(model, data.samples, val, config.threads);
    if (!std::isfinite(rec.val_mae)) throw DivergenceError("training diverged: non-finite validation loss");
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stop) break;
  }
  return history;
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,train_mae,val_mae,lr\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", r.epoch, r.train_mae, r.val_mae, r.lr);
    out << buf;
  }
}

}  // namespace helioflux
