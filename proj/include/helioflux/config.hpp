#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "helioflux/datagen.hpp"
#include "helioflux/degrade.hpp"
#include "helioflux/model.hpp"
#include "helioflux/train.hpp"

namespace helioflux {

/// Bad user input detected before any output is written (exit code 1).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Checks `value` against a JSON Schema subset: type, properties, required,
/// additionalProperties (boolean), items, minItems, maxItems, minimum,
/// maximum, exclusiveMinimum, enum. Returns one message per violation,
/// prefixed with the JSON pointer of the offending value.
std::vector<std::string> schema_errors(const nlohmann::json& schema, const nlohmann::json& value);

/// Schema of the --config file.
const nlohmann::json& config_schema();

struct EvaluationConfig {
  std::uint64_t rays = 100000;
  Vec3 sun{-1.0, -1.0, 1.0};  // normalized on use
  double csr = 0.0;
  /// Index into generation.targets for the target-plane accuracy.
  int target = 0;
};

struct ScenarioConfig {
  CurvedReceiver receiver;
  Vec3 eval_sun{-1.0, -1.0, 1.0};
  double csr = 0.0;
  int aim_columns = 3;
  int aim_rows = 2;
  double aim_extent = 0.8;  // fraction of the receiver width and height
  int observations = 4;
  std::uint64_t rays = 100000;
};

void validate(const ScenarioConfig& c);

/// 3 x 2 aim points at the cell centres of the central aim_extent of the
/// receiver, row-major from the top-left.
std::vector<Vec3> aim_grid(const ScenarioConfig& c);

/// Synthetic real-world degradation: every image transform applied, all
/// observations kept, labels clean.
RandomizationConfig degraded_test_config();

struct AppConfig {
  GenerationConfig generation;
  ModelConfig model;
  TrainConfig training;
  EvaluationConfig evaluation;
  ScenarioConfig scenario;
  RandomizationConfig degradation = degraded_test_config();
};

/// Validates against config_schema(), then builds each section. Throws
/// ValidationError listing every problem.
AppConfig app_config_from_json(const nlohmann::json& j);
AppConfig load_app_config(const std::string& path);
nlohmann::json to_json(const AppConfig& c);

}  // namespace helioflux
