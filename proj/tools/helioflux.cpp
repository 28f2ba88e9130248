// helioflux command-line driver.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "helioflux/commands.hpp"
#include "helioflux/config.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heliostat surface inference from flux images"};
  app.require_subcommand(1);

  std::uint64_t seed = 42;
  int threads = 1;
  std::string config_path;
  app.add_option("--seed", seed, "Master random seed")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--config", config_path, "JSON configuration file");

  int n_heliostats = 30;
  std::string out, field, dataset, model, input, split = "test";
  int observation = 0;

  auto* gen_field = app.add_subcommand("gen-field", "Sample a procedural heliostat field");
  gen_field->add_option("--n", n_heliostats, "Number of heliostats")->capture_default_str();
  gen_field->add_option("--out", out, "Output field file")->required();

  auto* generate = app.add_subcommand("generate", "Simulate a training dataset for a field");
  generate->add_option("--field", field)->required();
  generate->add_option("--out", out, "Dataset directory")->required();

  auto* train = app.add_subcommand("train", "Train a model on a dataset");
  train->add_option("--dataset", dataset)->required();
  train->add_option("--out", out, "Run directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset split");
  evaluate->add_option("--dataset", dataset)->required();
  evaluate->add_option("--model", model, "Checkpoint file")->required();
  evaluate->add_option("--out", out, "Report directory")->required();
  evaluate->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();

  auto* ablation = app.add_subcommand("ablation", "Train with and without randomization and compare");
  ablation->add_option("--dataset", dataset)->required();
  ablation->add_option("--out", out, "Report directory")->required();

  auto* scenario = app.add_subcommand("scenario", "Receiver extrapolation scenario");
  scenario->add_option("--field", field)->required();
  scenario->add_option("--model", model, "Checkpoint file")->required();
  scenario->add_option("--out", out, "Report directory")->required();

  auto* render = app.add_subcommand("render", "Render a flux record or sample observation");
  render->add_option("--input", input)->required();
  render->add_option("--out", out, "Output .pgm or .png")->required();
  render->add_option("--observation", observation, "Observation index for sample files")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    helioflux::RunContext ctx;
    ctx.seed = seed;
    ctx.threads = threads;
    if (!config_path.empty()) ctx.config = helioflux::load_app_config(config_path);

    if (*gen_field) {
      helioflux::cmd_gen_field(ctx, n_heliostats, out);
    } else if (*generate) {
      helioflux::cmd_generate(ctx, field, out);
    } else if (*train) {
      helioflux::cmd_train(ctx, dataset, out);
    } else if (*evaluate) {
      helioflux::cmd_evaluate(ctx, dataset, model, out, helioflux::split_from_string(split));
    } else if (*ablation) {
      helioflux::cmd_ablation(ctx, dataset, out);
    } else if (*scenario) {
      helioflux::cmd_scenario(ctx, field, model, out);
    } else if (*render) {
      helioflux::cmd_render(ctx, input, out, observation);
    }
  } catch (const helioflux::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
