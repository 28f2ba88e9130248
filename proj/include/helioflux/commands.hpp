#pragma once

#include <cstdint>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "helioflux/config.hpp"
#include "helioflux/datagen.hpp"
#include "helioflux/metrics.hpp"
#include "helioflux/model.hpp"
#include "helioflux/train.hpp"

namespace helioflux {

struct RunContext {
  std::uint64_t seed = 42;
  int threads = 1;
  AppConfig config;
  std::ostream* out = &std::cout;
};

using SummaryRows = std::vector<std::pair<std::string, SummaryStats>>;
void write_summary_csv(std::ostream& out, const SummaryRows& rows);

/// Horizontal distance from the tower base, m.
double tower_distance(const HeliostatSpec& h);

/// Per-point mean of the truth surfaces in a split.
HeliostatSurface mean_surface(const std::vector<DatasetSample>& samples, const std::vector<int>& indices);

struct EvaluationReport {
  std::vector<EvaluationRow> rows;
  SummaryRows summary;
  std::vector<DistanceBin> trend;
};

/// Surface metrics against `baseline`, plus flux accuracy at the evaluation
/// sun on the target plane and the receiver when `flux` is set. Predicted,
/// true, and ideal surfaces share ray seeds.
EvaluationReport evaluate_samples(Model& model, const std::vector<DatasetSample>& samples,
                                  const std::vector<int>& indices, const HeliostatSurface& baseline,
                                  const AppConfig& config, std::uint64_t seed, int threads, bool flux = true);

/// Writes evaluation.csv, distance_trend.csv, summary.csv and prints the table.
void write_evaluation_outputs(const EvaluationReport& report, const std::string& out_dir, std::ostream& table);

/// Copies of the split's samples passed through randomize_sample with
/// per-sample seeds; aligned with `indices`.
std::vector<DatasetSample> degrade_samples(const std::vector<DatasetSample>& samples, const std::vector<int>& indices,
                                           const RandomizationConfig& config, std::uint64_t seed, int threads);

struct AblationReport {
  std::vector<double> mae_a_degraded, mae_b_degraded, mae_a_clean, mae_b_clean;
  SummaryRows summary;
};

/// Model A (trained with randomization) vs model B (without) on the clean
/// and degraded test split.
AblationReport compare_ablation(Model& a, Model& b, const LoadedDataset& data, const AppConfig& config,
                                std::uint64_t seed, int threads);

struct ScenarioRow {
  std::string heliostat_id;
  double distance = 0.0;
  int aim_index = 0;
  double mae = 0.0;
  double acc_predicted = 0.0;
  double acc_ideal = 0.0;
};

struct ScenarioReport {
  std::vector<ScenarioRow> rows;
  SummaryRows summary;
  double superposed_predicted = 0.0;
  double superposed_ideal = 0.0;
  FluxImage predicted, truth, ideal;  // superposed
};

/// Surfaces inferred from target-plane observations at summer sun nodes,
/// traced onto the receiver at the evaluation sun.
ScenarioReport run_scenario(Model& model, const std::vector<HeliostatSpec>& field, const AppConfig& config,
                            std::uint64_t seed, int threads);

void write_scenario_outputs(const ScenarioReport& report, const std::string& out_dir, std::ostream& table);

// Command entry points. Inputs are checked before anything is written.
std::vector<HeliostatSpec> cmd_gen_field(const RunContext& ctx, int n_heliostats, const std::string& out_path);
DatasetManifest cmd_generate(const RunContext& ctx, const std::string& field_path, const std::string& out_dir);
std::vector<EpochRecord> cmd_train(const RunContext& ctx, const std::string& dataset_dir, const std::string& out_dir);
EvaluationReport cmd_evaluate(const RunContext& ctx, const std::string& dataset_dir, const std::string& checkpoint,
                              const std::string& out_dir, Split split = Split::kTest);
AblationReport cmd_ablation(const RunContext& ctx, const std::string& dataset_dir, const std::string& out_dir);
ScenarioReport cmd_scenario(const RunContext& ctx, const std::string& field_path, const std::string& checkpoint,
                            const std::string& out_dir);
/// FLUX record file, or a sample file with `observation` selecting the image.
void cmd_render(const RunContext& ctx, const std::string& input, const std::string& out_path, int observation = 0);

}  // namespace helioflux
