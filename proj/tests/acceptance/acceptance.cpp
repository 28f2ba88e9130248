// Acceptance run: one PASS/FAIL line per criterion.
//
// Criteria 6-8 share one dataset and two trained models, so they run
// together. The training budget is set by --epochs; see README for the
// budget used on the reference machine.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "../oracles.hpp"
#include "helioflux/commands.hpp"
#include "helioflux/degrade.hpp"
#include "helioflux/nurbs.hpp"
#include "helioflux/optics.hpp"
#include "helioflux/sunshape.hpp"

using namespace helioflux;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 1. Conservation and centroid on an oversized target.
Outcome raytracer_conservation(int threads) {
  TargetPlane target;
  target.center = {0, 0, 36};
  target.normal = {0, 1, 0};
  target.up = {0, 0, 1};
  target.width = target.height = 40.0;
  target.res_x = target.res_y = 64;
  const HeliostatSpec h = make_heliostat("flat", {15, 110, 0}, std::numeric_limits<double>::infinity());
  const Vec3 aim = target.center + Vec3{1.3, 0, -0.9};
  const std::uint64_t rays = 1000000;

  const auto t0 = Clock::now();
  const FluxImage img = trace_flux(h, HeliostatSurface{}, {solar_vector(190, 40), 0.0}, target, aim, rays, 7, threads);
  const double elapsed = seconds_since(t0);

  double sx = 0, sy = 0, m = 0;
  for (int row = 0; row < target.res_y; ++row)
    for (int col = 0; col < target.res_x; ++col) {
      const double v = img.raw[static_cast<std::size_t>(row * target.res_x + col)];
      sx += v * (col + 0.5);
      sy += v * (row + 0.5);
      m += v;
    }
  const double aim_col = (dot(aim - target.center, target.right()) / target.width + 0.5) * target.res_x;
  const double aim_row = (0.5 - dot(aim - target.center, target.up) / target.height) * target.res_y;
  const double offset = std::hypot(sx / m - aim_col, sy / m - aim_row);
  const auto hits = static_cast<std::uint64_t>(img.total_raw());
  const bool pass = hits == rays && offset <= 1.0 && elapsed < 5.0;
  return {pass, fmt("hits %llu / %llu, centroid offset %.3f px, %.2f s on %d thread(s)",
                    static_cast<unsigned long long>(hits), static_cast<unsigned long long>(rays), offset, elapsed,
                    threads)};
}

// 2. Analytic NURBS normals vs central differences.
Outcome nurbs_normals() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> amp(-1.0, 1.0), t(0.001, 0.999);
  double worst = 0.0;
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    FacetSurface s;
    for (double& z : s.control_z) z = amp(rng);
    for (int k = 0; k < 20; ++k) {
      const double u = t(rng), v = t(rng);
      const Vec3 a = nurbs_eval(s, u, v).normal;
      const double zu = (nurbs_eval(s, u + h, v).z_mm - nurbs_eval(s, u - h, v).z_mm) / (2 * h);
      const double zv = (nurbs_eval(s, u, v + h).z_mm - nurbs_eval(s, u, v - h).z_mm) / (2 * h);
      const Vec3 b = normalize(cross(Vec3{kFacetWidth, 0, zu * 1e-3}, Vec3{0, kFacetHeight, zv * 1e-3}));
      worst = std::max({worst, std::abs(a.e - b.e), std::abs(a.n - b.n), std::abs(a.u - b.u)});
    }
  }
  bool flat_exact = true;
  const FacetSurface flat;
  for (double u : {0.0, 0.13, 0.5, 0.77, 1.0})
    for (double v : {0.0, 0.31, 0.5, 1.0}) {
      const Vec3 n = nurbs_eval(flat, u, v).normal;
      flat_exact = flat_exact && n.e == 0.0 && n.n == 0.0 && n.u == 1.0;
    }
  return {worst < 1e-6 && flat_exact,
          fmt("max normal component error %.2e over 2000 points, flat normal exact: %s", worst,
              flat_exact ? "yes" : "no")};
}

// 3. Buie sampler vs quadrature of the implemented profile. The pass test
// feeds the sampler stratified uniforms, which removes the binomial noise
// (sigma is 0.67% relative at csr 0.02, too close to the 1% tolerance); the
// pseudo-random estimate is reported alongside with its z-score.
Outcome buie_sunshape() {
  bool pass = true;
  std::string detail;
  const int n = 1000000;
  for (double csr : {0.02, 0.10}) {
    const BuieSampler s(SunshapeConfig{csr});
    const double chi = s.chi();
    const double oracle_frac = oracle::circumsolar_fraction([&](double t) { return buie_pdf(t, chi); },
                                                            kSolarDiscEdgeMrad, kDefaultThetaMaxMrad);
    CounterRng phi(31, 1), rng(31, static_cast<std::uint64_t>(csr * 1000));
    int stratified = 0, random = 0;
    for (int i = 0; i < n; ++i) {
      stratified += s.sample((i + 0.5) / n, phi.uniform()).theta > kSolarDiscEdgeMrad;
      random += s.sample(rng).theta > kSolarDiscEdgeMrad;
    }
    const double empirical = static_cast<double>(stratified) / n;
    const double mc = static_cast<double>(random) / n;
    const double sigma = std::sqrt(oracle_frac * (1 - oracle_frac) / n);
    const double rel_oracle = std::abs(empirical - oracle_frac) / oracle_frac;
    const double rel_csr = std::abs(empirical - csr) / csr;
    pass = pass && rel_oracle < 0.01 && rel_csr < 0.25;
    detail += fmt("%scsr %.2f: stratified %.5f vs quadrature %.5f (%.3f%%), vs csr %.1f%%, pseudo-random %.5f "
                  "(z %+.2f)",
                  detail.empty() ? "" : "; ", csr, empirical, oracle_frac, 100 * rel_oracle, 100 * rel_csr, mc,
                  (mc - oracle_frac) / sigma);
  }
  return {pass, detail};
}

// 4. Metric oracles.
Outcome metric_oracles() {
  Rng rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  auto random_surface = [&](double scale) {
    HeliostatSurface s;
    for (auto& f : s.facets)
      for (double& z : f.control_z) z = scale * g(rng);
    return s;
  };
  double mae_err = 0, ssim_err = 0, self_err = 0;
  for (int t = 0; t < 1000; ++t) {
    const HeliostatSurface a = random_surface(1.0), b = random_surface(0.3 + t % 3);
    mae_err = std::max(mae_err, std::abs(surface_mae(a, b) - oracle::flat_mae(a, b)));
    ssim_err = std::max(ssim_err, std::abs(surface_ssim(a, b) - oracle::ssim(a, b, 5.0)));
    self_err = std::max(self_err, std::abs(surface_ssim(a, a) - 1.0));
  }
  const double tv = flux_accuracy(std::vector<double>{0.75, 0.25}, std::vector<double>{0.25, 0.75});
  const bool pass = mae_err <= 1e-12 && ssim_err <= 1e-12 && self_err <= 1e-12 && std::abs(tv - 0.5) <= 1e-15;
  return {pass, fmt("max |mae - oracle| %.1e, max |ssim - oracle| %.1e, max |ssim(a,a) - 1| %.1e, TV example %.6f",
                    mae_err, ssim_err, self_err, tv)};
}

DatasetSample synthetic_sample(int image_size, int n_obs, Rng& rng) {
  DatasetSample s;
  s.heliostat = make_heliostat("H001", {20.0 * uniform01(rng), 80.0 + 40.0 * uniform01(rng), 1.5}, 90.0);
  std::normal_distribution<double> g(0.0, 0.5);
  for (auto& f : s.truth.facets)
    for (double& z : f.control_z) z = g(rng);
  for (int k = 0; k < n_obs; ++k) {
    Observation o;
    o.sun.direction = normalize(Vec3{uniform01(rng) - 0.5, -0.5 - uniform01(rng), 0.3 + uniform01(rng)});
    o.aim_point = Vec3{uniform01(rng) - 0.5, 0.0, 36.0 + uniform01(rng) - 0.5};
    TargetPlane plane;
    plane.res_x = plane.res_y = image_size;
    o.flux = FluxImage::empty(plane, 1000);
    o.flux.normalized.resize(static_cast<std::size_t>(image_size) * image_size);
    for (auto& v : o.flux.normalized) v = uniform01(rng);
    o.flux.no_hits = false;
    s.observations.push_back(std::move(o));
  }
  return s;
}

// 5. Gradient check on the tiny model.
Outcome gradient_check() {
  Model m(ModelConfig::tiny(), 5);
  Rng rng(5);
  const DatasetSample a = synthetic_sample(32, 3, rng), b = synthetic_sample(32, 2, rng);
  const std::vector<SampleInput> batch{make_input(a), make_input(b)};
  const nn::Mat target = surface_targets({&a.truth, &b.truth});
  auto loss = [&](bool backward) {
    nn::Tape t(backward);
    const nn::Var l = nn::mae_loss(t, m.generate(t, m.encode(t, batch, nullptr)), target);
    if (backward) t.backward(l);
    return t.value(l)(0, 0);
  };
  m.params().zero_grad();
  loss(true);

  std::vector<std::pair<nn::Param*, Eigen::Index>> candidates;
  for (auto& p : m.params().all())
    for (Eigen::Index i = 0; i < p.grad.size(); ++i)
      if (std::abs(p.grad.data()[i]) > 1e-5) candidates.emplace_back(&p, i);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  const std::size_t n = std::min<std::size_t>(candidates.size(), 10);

  auto rel_error = [&](nn::Param* p, Eigen::Index i, double h) {
    const double keep = p->value.data()[i];
    p->value.data()[i] = keep + h;
    const double up = loss(false);
    p->value.data()[i] = keep - h;
    const double down = loss(false);
    p->value.data()[i] = keep;
    const double fd = (up - down) / (2 * h);
    const double an = p->grad.data()[i];
    return std::abs(an - fd) / std::max(std::abs(an), std::abs(fd));
  };
  // The pass test uses h = 1e-6. At h = 1e-4 a perturbation can step across
  // an |x| or leaky-ReLU kink, which is a finite-difference artifact.
  double worst = 0.0, worst_coarse = 0.0;
  std::set<std::string> tensors;
  for (std::size_t k = 0; k < n; ++k) {
    auto [p, i] = candidates[k];
    worst = std::max(worst, rel_error(p, i, 1e-6));
    worst_coarse = std::max(worst_coarse, rel_error(p, i, 1e-4));
    tensors.insert(p->name);
  }
  return {n >= 5 && worst < 1e-3,
          fmt("%zu parameters from %zu tensors, max relative error %.2e at h = 1e-6 (%.2e at h = 1e-4)", n,
              tensors.size(), worst, worst_coarse)};
}

// 10. Degradation transforms.
Outcome degradation_identity() {
  constexpr int W = 64, H = 64;
  Rng rng(10);
  auto random_image = [&] {
    Grid g(W * H, 0.0);
    const int blobs = 1 + static_cast<int>(uniform01(rng) * 3);
    for (int b = 0; b < blobs; ++b) {
      const double cx = 10 + 44 * uniform01(rng), cy = 10 + 44 * uniform01(rng), s = 1 + 8 * uniform01(rng);
      const double a = 0.2 + uniform01(rng);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          g[y * W + x] += a * std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * s * s));
    }
    for (double& v : g) v += 0.01 * uniform01(rng);
    renormalize(g);
    return g;
  };
  auto diff = [](const Grid& a, const Grid& b) {
    double d = a.size() == b.size() ? 0.0 : std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
  };
  auto valid = [](const Grid& g) {
    if (g.size() != static_cast<std::size_t>(W * H)) return false;
    double mx = 0.0;
    for (double v : g) {
      if (!std::isfinite(v) || v < 0.0) return false;
      mx = std::max(mx, v);
    }
    return std::abs(mx - 1.0) <= 1e-12;
  };

  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Grid g = random_image();
    worst = std::max({worst, diff(clamp_overexpose(g, 1.0), g), diff(background_noise(g, 0.0, rng), g),
                      diff(adjust_contrast(g, 1.0), g), diff(crop_rescale(g, W, H, 0u), g),
                      diff(deform_flux(g, W, H, rng, 0.0), g), diff(smooth_flux(g, W, H, 1), g)});
  }

  // Metadata jitter and label noise at zero strength.
  RandomizationConfig zero = RandomizationConfig::none();
  zero.position_jitter = zero.label_noise = true;
  zero.heliostat_jitter_sigma = zero.sun_jitter_sigma = zero.surface_noise_sigma = 0.0;
  zero.apply_prob = 1.0;
  for (int t = 0; t < 20; ++t) {
    const DatasetSample s = synthetic_sample(16, 3, rng);
    const DatasetSample r = randomize_sample(s, zero, rng);
    worst = std::max({worst, norm(r.heliostat.position - s.heliostat.position), surface_mae(r.truth, s.truth)});
    for (std::size_t k = 0; k < s.observations.size(); ++k) {
      worst = std::max({worst, norm(r.observations[k].sun.direction - s.observations[k].sun.direction),
                        diff(r.observations[k].flux.normalized, s.observations[k].flux.normalized)});
    }
  }

  int invalid = 0;
  for (int t = 0; t < 1000; ++t) {
    const Grid g = random_image();
    for (const Grid& out : {clamp_overexpose(g, rng), background_noise(g, rng, 0.02), adjust_contrast(g, rng),
                            crop_rescale(g, W, H, rng), deform_flux(g, W, H, rng, 0.5), smooth_flux(g, W, H, 2)})
      invalid += !valid(out);
  }
  return {worst <= 1e-12 && invalid == 0,
          fmt("max neutral deviation %.1e, invalid outputs %d of 6000", worst, invalid)};
}

// 9. Byte-identical CSVs from two CLI pipelines with the same seed.
Outcome determinism(const std::string& cli, const fs::path& work) {
  if (cli.empty()) return {false, "no CLI path given"};
  const fs::path cfg = work / "det_config.json";
  std::ofstream(cfg) << R"({"generation": {"n_samples": 60, "rays_per_image": 4000},
 "model": {"embed_dim": 16, "encoder_depth": 1, "fusion_depth": 1, "encoder_heads": 2, "fusion_heads": 2,
           "mlp_ratio": 2, "latent_dim": 8, "gen_channels": 4},
 "training": {"epochs": 2},
 "evaluation": {"rays": 5000}})";
  std::vector<std::vector<std::pair<std::string, std::string>>> runs;
  for (int r = 0; r < 2; ++r) {
    const fs::path dir = work / ("det" + std::to_string(r));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string base = "\"" + cli + "\" --seed 1234 --threads 1 --config \"" + cfg.string() + "\" ";
    const std::string d = "\"" + dir.string() + "\"";
    const std::vector<std::string> steps = {
        base + "gen-field --n 12 --out " + d + "/field.json",
        base + "generate --field " + d + "/field.json --out " + d + "/ds",
        base + "train --dataset " + d + "/ds --out " + d + "/run",
        base + "evaluate --dataset " + d + "/ds --model " + d + "/run/model.ckpt --out " + d + "/eval"};
    for (const auto& cmd : steps)
      if (std::system((cmd + " > " + d + "/log.txt 2>&1").c_str()) != 0) return {false, "command failed: " + cmd};
    std::vector<std::pair<std::string, std::string>> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.path().extension() == ".csv") {
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        files.emplace_back(fs::relative(e.path(), dir).string(), s.str());
      }
    std::sort(files.begin(), files.end());
    runs.push_back(std::move(files));
  }
  const bool same = !runs[0].empty() && runs[0] == runs[1];
  std::string names;
  for (const auto& [name, _] : runs[0]) names += (names.empty() ? "" : ", ") + name;
  return {same, fmt("%zu CSV files (%s) %s", runs[0].size(), names.c_str(), same ? "byte-identical" : "differ")};
}

struct LearningResults {
  Outcome end_to_end, ablation, scenario;
};

AppConfig learning_config(int epochs) {
  AppConfig c;
  c.generation.n_samples = 2000;
  c.generation.prior.canting_tilt_sigma = 2.0;
  c.generation.prior.bow_amp_sigma = 1.0;
  c.generation.prior.wave_amp_sigma = 0.3;
  c.training.epochs = epochs;
  c.evaluation.rays = 20000;
  c.scenario.rays = 20000;
  return c;
}

// 6, 7, 8. One dataset, model A (randomized) and model B (plain).
LearningResults learning(const fs::path& work, int epochs, int threads, std::uint64_t seed) {
  RunContext ctx;
  ctx.seed = seed;
  ctx.threads = threads;
  ctx.config = learning_config(epochs);
  std::ostringstream log;
  ctx.out = &log;
  const fs::path dir = work / "learning";
  fs::remove_all(dir);

  const auto t0 = Clock::now();
  const auto field = cmd_gen_field(ctx, 30, (dir / "field.json").string());
  cmd_generate(ctx, (dir / "field.json").string(), (dir / "ds").string());
  const double t_data = seconds_since(t0);
  const LoadedDataset data = load_dataset((dir / "ds").string(), threads);

  TrainConfig tc = ctx.config.training;
  tc.threads = threads;
  auto progress = [](const char* name) {
    return [name](const EpochRecord& r) {
      std::cerr << fmt("  model %s epoch %2d train %.4f val %.4f\n", name, r.epoch, r.train_mae, r.val_mae);
    };
  };
  Model a(ctx.config.model, seed), b(ctx.config.model, seed);
  const auto ta = Clock::now();
  tc.randomize = true;
  train(a, data, tc, seed, progress("A"));
  const double t_train_a = seconds_since(ta);
  tc.randomize = false;
  train(b, data, tc, seed, progress("B"));

  LearningResults out;

  // 6
  const auto te = Clock::now();
  const auto test = data.indices(Split::kTest);
  const HeliostatSurface baseline = mean_surface(data.samples, data.indices(Split::kTrain));
  const EvaluationReport ev = evaluate_samples(a, data.samples, test, baseline, ctx.config, seed, threads);
  std::vector<double> mae, base, acc, ideal;
  for (const auto& r : ev.rows) {
    mae.push_back(r.mae);
    base.push_back(r.baseline_mae);
    acc.push_back(r.flux_acc_receiver);
    ideal.push_back(r.flux_acc_ideal_receiver);
  }
  const double pipeline_s = t_data + t_train_a + seconds_since(te);
  const double gain = median(acc) - median(ideal);
  out.end_to_end = {median(mae) < median(base) && gain >= 0.10,
                    fmt("%zu test samples, median MAE %.4f mm vs mean-surface %.4f mm; median receiver accuracy "
                        "%.4f vs ideal %.4f (%+.1f pp); %d epochs, data+train+eval %.0f s on %d thread(s)",
                        test.size(), median(mae), median(base), median(acc), median(ideal), 100 * gain, epochs,
                        pipeline_s, threads)};

  // 7
  const AblationReport ab = compare_ablation(a, b, data, ctx.config, seed, threads);
  const double ma = median(ab.mae_a_degraded), mb = median(ab.mae_b_degraded);
  const double reduction = 1.0 - ma / mb;
  out.ablation = {reduction >= 0.25,
                  fmt("degraded test median MAE: A %.4f mm, B %.4f mm (%.1f%% lower); clean: A %.4f, B %.4f", ma, mb,
                      100 * reduction, median(ab.mae_a_clean), median(ab.mae_b_clean))};

  // 8
  const ScenarioReport sc = run_scenario(a, field, ctx.config, seed, threads);
  std::vector<double> per;
  for (const auto& r : sc.rows) per.push_back(r.acc_predicted);
  const double med = median(per);
  out.scenario = {sc.superposed_predicted > med && sc.superposed_predicted > sc.superposed_ideal,
                  fmt("superposed predicted %.4f, median per-heliostat %.4f, superposed ideal %.4f",
                      sc.superposed_predicted, med, sc.superposed_ideal)};
  write_evaluation_outputs(ev, (dir / "eval").string(), log);
  write_scenario_outputs(sc, (dir / "scenario").string(), log);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string cli, workdir = (fs::temp_directory_path() / "helioflux_acceptance").string();
  int epochs = TrainConfig{}.epochs;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::uint64_t seed = 42;
  std::vector<int> only;
  app.add_option("--cli", cli, "Path to the helioflux executable");
  app.add_option("--workdir", workdir)->capture_default_str();
  app.add_option("--epochs", epochs, "Training epochs for criteria 6-8")->capture_default_str();
  app.add_option("--threads", threads)->capture_default_str();
  app.add_option("--seed", seed)->capture_default_str();
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  const fs::path work(workdir);
  fs::create_directories(work);
  auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

  int failures = 0;
  auto report = [&](int n, const char* name, const Outcome& o) {
    std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << " " << name << ": " << o.detail << std::endl;
    failures += !o.pass;
  };
  auto guarded = [](const std::function<Outcome()>& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };

  if (wanted(1)) report(1, "raytracer conservation", guarded([&] { return raytracer_conservation(threads); }));
  if (wanted(2)) report(2, "NURBS normals", guarded(nurbs_normals));
  if (wanted(3)) report(3, "Buie sunshape", guarded(buie_sunshape));
  if (wanted(4)) report(4, "metric oracles", guarded(metric_oracles));
  if (wanted(5)) report(5, "gradient check", guarded(gradient_check));
  if (wanted(6) || wanted(7) || wanted(8)) {
    LearningResults r;
    try {
      r = learning(work, epochs, threads, seed);
    } catch (const std::exception& e) {
      r.end_to_end = r.ablation = r.scenario = {false, std::string("exception: ") + e.what()};
    }
    if (wanted(6)) report(6, "end-to-end learning", r.end_to_end);
    if (wanted(7)) report(7, "randomization ablation", r.ablation);
    if (wanted(8)) report(8, "extrapolation scenario", r.scenario);
  }
  if (wanted(9)) report(9, "determinism", guarded([&] { return determinism(cli, work); }));
  if (wanted(10)) report(10, "degradation identity", guarded(degradation_identity));
  return failures == 0 ? 0 : 1;
}
