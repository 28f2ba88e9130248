#include "helioflux/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "helioflux/binary_io.hpp"
#include "helioflux/checkpoint.hpp"
#include "helioflux/degrade.hpp"
#include "helioflux/optics.hpp"
#include "helioflux/parallel.hpp"
#include "helioflux/render.hpp"

namespace helioflux {

namespace fs = std::filesystem;

namespace {

// Seed streams for evaluation-time tracing and degradation.
constexpr std::uint64_t kEvalTraceStream = 0x4556414cULL;
constexpr std::uint64_t kDegradeStream = 0x44454752ULL;
constexpr std::uint64_t kScenarioStream = 0x5343454eULL;

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw ValidationError(what + " not found: " + path);
}

void require_dataset(const std::string& dir) { require_file((fs::path(dir) / "manifest.json").string(), "dataset"); }

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir + ": " + ec.message());
}

/// Writes through a temporary file so readers never see a partial CSV.
template <class Fn>
void write_text(const fs::path& path, Fn&& fill) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    fill(out);
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::vector<double> column(const std::vector<EvaluationRow>& rows, double EvaluationRow::*field) {
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(r.*field);
  return v;
}

SunState sun_state(const Vec3& direction, double csr) {
  SunState s;
  s.direction = normalize(direction);
  s.csr = csr;
  return s;
}

TrainConfig training_for(const RunContext& ctx) {
  TrainConfig t = ctx.config.training;
  t.threads = ctx.threads;
  return t;
}

nlohmann::json checkpoint_extra(const DatasetManifest& m, const TrainConfig& t, std::uint64_t seed) {
  return {{"dataset_hash", m.config_hash}, {"training", to_json(t)}, {"seed", seed}};
}

void print_history_row(std::ostream& out, const EpochRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%5d %12.6f %12.6f %12.3e\n", r.epoch, r.train_mae, r.val_mae, r.lr);
  out << buf << std::flush;
}

}  // namespace

void write_summary_csv(std::ostream& out, const SummaryRows& rows) {
  out << "metric,min,q1,median,mean,q3,max\n";
  for (const auto& [label, s] : rows)
    out << label << ',' << fmt_num(s.min) << ',' << fmt_num(s.q1) << ',' << fmt_num(s.median) << ','
        << fmt_num(s.mean) << ',' << fmt_num(s.q3) << ',' << fmt_num(s.max) << '\n';
}

double tower_distance(const HeliostatSpec& h) { return std::hypot(h.position.e, h.position.n); }

HeliostatSurface mean_surface(const std::vector<DatasetSample>& samples, const std::vector<int>& indices) {
  if (indices.empty()) throw std::invalid_argument("mean_surface: no samples");
  HeliostatSurface mean;
  for (int i : indices)
    for (std::size_t k = 0; k < kFacetCount; ++k)
      for (std::size_t p = 0; p < kControlPoints; ++p)
        mean.facets[k].control_z[p] += samples[static_cast<std::size_t>(i)].truth.facets[k].control_z[p];
  for (auto& f : mean.facets)
    for (double& z : f.control_z) z /= static_cast<double>(indices.size());
  return mean;
}

EvaluationReport evaluate_samples(Model& model, const std::vector<DatasetSample>& samples,
                                  const std::vector<int>& indices, const HeliostatSurface& baseline,
                                  const AppConfig& config, std::uint64_t seed, int threads, bool flux) {
  if (indices.empty()) throw std::invalid_argument("evaluate: the split is empty");
  const SunState sun = sun_state(config.evaluation.sun, config.evaluation.csr);
  const TargetPlane target = config.generation.targets.at(static_cast<std::size_t>(config.evaluation.target));
  const CurvedReceiver& receiver = config.scenario.receiver;
  const Vec3 receiver_center = geometry_center(receiver);
  const HeliostatSurface ideal{};

  EvaluationReport report;
  report.rows.resize(indices.size());
  parallel_for(indices.size(), threads, [&](std::size_t k) {
    const int index = indices[k];
    const DatasetSample& s = samples.at(static_cast<std::size_t>(index));
    const HeliostatSurface pred = model.predict(make_input(s));
    EvaluationRow& row = report.rows[k];
    row.sample = index;
    row.heliostat_id = s.heliostat.id;
    row.distance = tower_distance(s.heliostat);
    row.mae = surface_mae(pred, s.truth);
    row.ssim = surface_ssim(pred, s.truth);
    row.baseline_mae = surface_mae(baseline, s.truth);
    if (!flux) return;
    const std::uint64_t trace_seed = derive_seed(derive_seed(seed, kEvalTraceStream), static_cast<std::uint64_t>(index));
    const std::uint64_t rays = config.evaluation.rays;
    const FluxImage t_pred = trace_flux(s.heliostat, pred, sun, target, target.center, rays, trace_seed);
    const FluxImage t_true = trace_flux(s.heliostat, s.truth, sun, target, target.center, rays, trace_seed);
    const FluxImage r_pred = trace_flux(s.heliostat, pred, sun, receiver, receiver_center, rays, trace_seed);
    const FluxImage r_true = trace_flux(s.heliostat, s.truth, sun, receiver, receiver_center, rays, trace_seed);
    const FluxImage r_ideal = trace_flux(s.heliostat, ideal, sun, receiver, receiver_center, rays, trace_seed);
    auto acc = [](const FluxImage& a, const FluxImage& b) { return b.no_hits ? 0.0 : flux_accuracy(a, b); };
    row.flux_acc_target = acc(t_pred, t_true);
    row.flux_acc_receiver = acc(r_pred, r_true);
    row.flux_acc_ideal_receiver = acc(r_ideal, r_true);
  });

  report.summary = {{"mae_mm", summarize(column(report.rows, &EvaluationRow::mae))},
                    {"ssim", summarize(column(report.rows, &EvaluationRow::ssim))},
                    {"baseline_mae_mm", summarize(column(report.rows, &EvaluationRow::baseline_mae))}};
  if (flux) {
    report.summary.emplace_back("flux_acc_target", summarize(column(report.rows, &EvaluationRow::flux_acc_target)));
    report.summary.emplace_back("flux_acc_receiver",
                                summarize(column(report.rows, &EvaluationRow::flux_acc_receiver)));
    report.summary.emplace_back("flux_acc_ideal_receiver",
                                summarize(column(report.rows, &EvaluationRow::flux_acc_ideal_receiver)));
  }
  std::vector<HeliostatScore> scores;
  for (const auto& r : report.rows) scores.push_back({r.distance, r.mae, r.ssim});
  report.trend = distance_trend(scores);
  return report;
}

void write_evaluation_outputs(const EvaluationReport& report, const std::string& out_dir, std::ostream& table) {
  make_dir(out_dir);
  const fs::path root(out_dir);
  write_text(root / "evaluation.csv", [&](std::ostream& o) { write_evaluation_csv(o, report.rows); });
  write_text(root / "distance_trend.csv", [&](std::ostream& o) { write_distance_trend_csv(o, report.trend); });
  write_text(root / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, report.summary); });
  print_summary_table(table, report.summary);
}

std::vector<DatasetSample> degrade_samples(const std::vector<DatasetSample>& samples, const std::vector<int>& indices,
                                           const RandomizationConfig& config, std::uint64_t seed, int threads) {
  std::vector<DatasetSample> out(indices.size());
  parallel_for(indices.size(), threads, [&](std::size_t k) {
    Rng rng(derive_seed(derive_seed(seed, kDegradeStream), static_cast<std::uint64_t>(indices[k])));
    out[k] = randomize_sample(samples[static_cast<std::size_t>(indices[k])], config, rng);
  });
  return out;
}

AblationReport compare_ablation(Model& a, Model& b, const LoadedDataset& data, const AppConfig& config,
                                std::uint64_t seed, int threads) {
  const std::vector<int> test = data.indices(Split::kTest);
  const std::vector<int> train_idx = data.indices(Split::kTrain);
  const HeliostatSurface baseline = mean_surface(data.samples, train_idx);
  const std::vector<DatasetSample> degraded = degrade_samples(data.samples, test, config.degradation, seed, threads);

  std::vector<int> local(test.size());
  std::iota(local.begin(), local.end(), 0);

  auto maes = [&](Model& m, const std::vector<DatasetSample>& samples, const std::vector<int>& idx) {
    return column(evaluate_samples(m, samples, idx, baseline, config, seed, threads, false).rows, &EvaluationRow::mae);
  };
  AblationReport r;
  r.mae_a_degraded = maes(a, degraded, local);
  r.mae_b_degraded = maes(b, degraded, local);
  r.mae_a_clean = maes(a, data.samples, test);
  r.mae_b_clean = maes(b, data.samples, test);
  r.summary = {{"A_randomized_degraded", summarize(r.mae_a_degraded)},
               {"B_plain_degraded", summarize(r.mae_b_degraded)},
               {"A_randomized_clean", summarize(r.mae_a_clean)},
               {"B_plain_clean", summarize(r.mae_b_clean)}};
  return r;
}

ScenarioReport run_scenario(Model& model, const std::vector<HeliostatSpec>& field, const AppConfig& config,
                            std::uint64_t seed, int threads) {
  validate(config.scenario);
  if (field.empty()) throw std::invalid_argument("scenario: empty field");
  const ScenarioConfig& sc = config.scenario;
  const std::vector<SunNode> summer = summer_nodes(sun_grid(config.generation.location, config.generation.az_step,
                                                            config.generation.el_step));
  if (summer.empty()) throw std::invalid_argument("scenario: no summer sun nodes at this site");
  GenerationConfig gen = config.generation;
  gen.min_observations = gen.max_observations = sc.observations;
  const std::vector<Vec3> aims = aim_grid(sc);
  const SunState sun = sun_state(sc.eval_sun, sc.csr);
  const std::uint64_t stream = derive_seed(seed, kScenarioStream);

  ScenarioReport report;
  report.rows.resize(field.size());
  std::vector<FluxImage> pred_img(field.size()), true_img(field.size()), ideal_img(field.size());
  parallel_for(field.size(), threads, [&](std::size_t k) {
    const DatasetSample s = make_sample(field[k], summer, gen, stream, static_cast<int>(k));
    const HeliostatSurface pred = model.predict(make_input(s));
    const int aim = static_cast<int>(k % aims.size());
    const std::uint64_t trace_seed = derive_seed(stream, 0x100000000ULL + k);
    pred_img[k] = trace_flux(s.heliostat, pred, sun, sc.receiver, aims[static_cast<std::size_t>(aim)], sc.rays,
                             trace_seed);
    true_img[k] = trace_flux(s.heliostat, s.truth, sun, sc.receiver, aims[static_cast<std::size_t>(aim)], sc.rays,
                             trace_seed);
    ideal_img[k] = trace_flux(s.heliostat, HeliostatSurface{}, sun, sc.receiver, aims[static_cast<std::size_t>(aim)],
                              sc.rays, trace_seed);
    ScenarioRow& row = report.rows[k];
    row.heliostat_id = field[k].id;
    row.distance = tower_distance(field[k]);
    row.aim_index = aim;
    row.mae = surface_mae(pred, s.truth);
    row.acc_predicted = true_img[k].no_hits ? 0.0 : flux_accuracy(pred_img[k], true_img[k]);
    row.acc_ideal = true_img[k].no_hits ? 0.0 : flux_accuracy(ideal_img[k], true_img[k]);
  });

  report.predicted = superpose(pred_img);
  report.truth = superpose(true_img);
  report.ideal = superpose(ideal_img);
  report.superposed_predicted = flux_accuracy(report.predicted, report.truth);
  report.superposed_ideal = flux_accuracy(report.ideal, report.truth);

  std::vector<double> mae, acc_pred, acc_ideal;
  for (const auto& r : report.rows) {
    mae.push_back(r.mae);
    acc_pred.push_back(r.acc_predicted);
    acc_ideal.push_back(r.acc_ideal);
  }
  report.summary = {{"mae_mm", summarize(mae)},
                    {"acc_predicted", summarize(acc_pred)},
                    {"acc_ideal", summarize(acc_ideal)}};
  return report;
}

void write_scenario_outputs(const ScenarioReport& report, const std::string& out_dir, std::ostream& table) {
  make_dir(out_dir);
  const fs::path root(out_dir);
  write_text(root / "scenario.csv", [&](std::ostream& o) {
    o << "heliostat_id,distance_m,aim_index,mae_mm,flux_acc_predicted,flux_acc_ideal\n";
    for (const auto& r : report.rows)
      o << r.heliostat_id << ',' << fmt_num(r.distance) << ',' << r.aim_index << ',' << fmt_num(r.mae) << ','
        << fmt_num(r.acc_predicted) << ',' << fmt_num(r.acc_ideal) << '\n';
  });
  write_text(root / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, report.summary); });
  write_text(root / "superposed.csv", [&](std::ostream& o) {
    o << "surface,flux_accuracy\n";
    o << "predicted," << fmt_num(report.superposed_predicted) << '\n';
    o << "ideal," << fmt_num(report.superposed_ideal) << '\n';
  });
  write_heatmap_png((root / "superposed_predicted.png").string(), report.predicted.normalized, report.predicted.width,
                    report.predicted.height);
  write_heatmap_png((root / "superposed_truth.png").string(), report.truth.normalized, report.truth.width,
                    report.truth.height);
  write_heatmap_png((root / "superposed_ideal.png").string(), report.ideal.normalized, report.ideal.width,
                    report.ideal.height);
  print_summary_table(table, report.summary);
  table << "superposed accuracy: predicted " << fmt_num(report.superposed_predicted) << ", ideal "
        << fmt_num(report.superposed_ideal) << '\n';
}

std::vector<HeliostatSpec> cmd_gen_field(const RunContext& ctx, int n_heliostats, const std::string& out_path) {
  if (n_heliostats < 1) throw ValidationError("gen-field: need at least one heliostat");
  const auto field = generate_field(n_heliostats, ctx.seed);
  if (const auto parent = fs::path(out_path).parent_path(); !parent.empty()) make_dir(parent.string());
  write_field_file(out_path, field);
  *ctx.out << "wrote " << field.size() << " heliostats to " << out_path << '\n';
  return field;
}

DatasetManifest cmd_generate(const RunContext& ctx, const std::string& field_path, const std::string& out_dir) {
  require_file(field_path, "field file");
  std::vector<HeliostatSpec> field;
  try {
    field = read_field_file(field_path);
  } catch (const std::exception& e) {
    throw ValidationError("invalid field file " + field_path + ": " + e.what());
  }
  const DatasetManifest m = generate_dataset(field, ctx.config.generation, ctx.seed, out_dir, ctx.threads);
  *ctx.out << "generated " << m.entries.size() << " samples (train " << m.counts[0] << ", val " << m.counts[1]
           << ", test " << m.counts[2] << "), config hash " << m.config_hash << '\n';
  return m;
}

std::vector<EpochRecord> cmd_train(const RunContext& ctx, const std::string& dataset_dir, const std::string& out_dir) {
  require_dataset(dataset_dir);
  const TrainConfig tc = training_for(ctx);
  const LoadedDataset data = load_dataset(dataset_dir, ctx.threads);
  Model model(ctx.config.model, ctx.seed);
  *ctx.out << "parameters: " << model.params().scalar_count() << "\n epoch    train_mae      val_mae           lr\n";
  const auto history = train(model, data, tc, ctx.seed, [&](const EpochRecord& r) { print_history_row(*ctx.out, r); });
  make_dir(out_dir);
  const fs::path root(out_dir);
  save_checkpoint((root / "model.ckpt").string(), model, checkpoint_extra(data.manifest, tc, ctx.seed));
  write_text(root / "history.csv", [&](std::ostream& o) { write_history_csv(o, history); });
  return history;
}

EvaluationReport cmd_evaluate(const RunContext& ctx, const std::string& dataset_dir, const std::string& checkpoint,
                              const std::string& out_dir, Split split) {
  require_dataset(dataset_dir);
  require_file(checkpoint, "checkpoint");
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const DatasetManifest manifest = read_manifest(dataset_dir);
  const std::string trained_on = ck.extra.value("dataset_hash", std::string{});
  if (trained_on != manifest.config_hash)
    throw ValidationError("config hash mismatch: model trained on dataset " + trained_on + ", dataset is " +
                          manifest.config_hash);
  if (ck.model.config().image_size != ctx.config.generation.targets.front().res_x)
    throw ValidationError("model image size does not match the dataset resolution");
  const LoadedDataset data = load_dataset(dataset_dir, ctx.threads);
  const HeliostatSurface baseline = mean_surface(data.samples, data.indices(Split::kTrain));
  const EvaluationReport report = evaluate_samples(ck.model, data.samples, data.indices(split), baseline, ctx.config,
                                                   ctx.seed, ctx.threads);
  write_evaluation_outputs(report, out_dir, *ctx.out);
  return report;
}

AblationReport cmd_ablation(const RunContext& ctx, const std::string& dataset_dir, const std::string& out_dir) {
  require_dataset(dataset_dir);
  const LoadedDataset data = load_dataset(dataset_dir, ctx.threads);
  TrainConfig tc = training_for(ctx);
  make_dir(out_dir);
  const fs::path root(out_dir);

  Model a(ctx.config.model, ctx.seed), b(ctx.config.model, ctx.seed);
  for (auto [model, randomize, name] : {std::tuple{&a, true, "A"}, std::tuple{&b, false, "B"}}) {
    tc.randomize = randomize;
    *ctx.out << "model " << name << (randomize ? " (randomized)" : " (plain)") << '\n';
    const auto history = train(*model, data, tc, ctx.seed, [&](const EpochRecord& r) { print_history_row(*ctx.out, r); });
    const std::string stem = std::string("model_") + (randomize ? "a" : "b");
    save_checkpoint((root / (stem + ".ckpt")).string(), *model, checkpoint_extra(data.manifest, tc, ctx.seed));
    write_text(root / (stem + "_history.csv"), [&](std::ostream& o) { write_history_csv(o, history); });
  }
  const AblationReport report = compare_ablation(a, b, data, ctx.config, ctx.seed, ctx.threads);
  write_text(root / "ablation.csv", [&](std::ostream& o) { write_summary_csv(o, report.summary); });
  print_summary_table(*ctx.out, report.summary);
  return report;
}

ScenarioReport cmd_scenario(const RunContext& ctx, const std::string& field_path, const std::string& checkpoint,
                            const std::string& out_dir) {
  require_file(field_path, "field file");
  require_file(checkpoint, "checkpoint");
  validate(ctx.config.scenario);
  std::vector<HeliostatSpec> field;
  try {
    field = read_field_file(field_path);
  } catch (const std::exception& e) {
    throw ValidationError("invalid field file " + field_path + ": " + e.what());
  }
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const ScenarioReport report = run_scenario(ck.model, field, ctx.config, ctx.seed, ctx.threads);
  write_scenario_outputs(report, out_dir, *ctx.out);
  return report;
}

void cmd_render(const RunContext& ctx, const std::string& input, const std::string& out_path, int observation) {
  require_file(input, "input");
  const std::string ext = fs::path(out_path).extension().string();
  if (ext != ".pgm" && ext != ".png") throw ValidationError("render: output must end in .pgm or .png");
  std::ifstream in(input, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  in.seekg(0);
  FluxImage img;
  if (std::string(magic, 4) == "HSMP") {
    const DatasetSample s = read_sample(in);
    if (observation < 0 || observation >= static_cast<int>(s.observations.size()))
      throw ValidationError("render: sample has " + std::to_string(s.observations.size()) + " observations");
    img = s.observations[static_cast<std::size_t>(observation)].flux;
  } else {
    img = read_flux(in);
  }
  if (const auto parent = fs::path(out_path).parent_path(); !parent.empty()) make_dir(parent.string());
  render_flux(img, out_path);
  *ctx.out << "wrote " << img.width << "x" << img.height << " image to " << out_path << '\n';
}

}  // namespace helioflux
