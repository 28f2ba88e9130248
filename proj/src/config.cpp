#include "helioflux/config.hpp"

#include <cmath>
#include <fstream>

#include "helioflux/optics.hpp"

namespace helioflux {

using json = nlohmann::json;

namespace {

bool has_type(const json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "integer") return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
  if (type == "number") return v.is_number();
  if (type == "null") return v.is_null();
  return false;
}

void check(const json& schema, const json& v, const std::string& where, std::vector<std::string>& errors) {
  const std::string at = where.empty() ? "/" : where;
  if (schema.contains("type")) {
    const json& t = schema["type"];
    bool ok = false;
    if (t.is_array()) {
      for (const auto& one : t) ok = ok || has_type(v, one.get<std::string>());
    } else {
      ok = has_type(v, t.get<std::string>());
    }
    if (!ok) {
      errors.push_back(at + ": expected " + t.dump());
      return;
    }
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema["enum"]) found = found || e == v;
    if (!found) errors.push_back(at + ": must be one of " + schema["enum"].dump());
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (schema.contains("minimum") && x < schema["minimum"].get<double>())
      errors.push_back(at + ": must be >= " + schema["minimum"].dump());
    if (schema.contains("maximum") && x > schema["maximum"].get<double>())
      errors.push_back(at + ": must be <= " + schema["maximum"].dump());
    if (schema.contains("exclusiveMinimum") && x <= schema["exclusiveMinimum"].get<double>())
      errors.push_back(at + ": must be > " + schema["exclusiveMinimum"].dump());
  }
  if (v.is_array()) {
    if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>())
      errors.push_back(at + ": needs at least " + schema["minItems"].dump() + " items");
    if (schema.contains("maxItems") && v.size() > schema["maxItems"].get<std::size_t>())
      errors.push_back(at + ": allows at most " + schema["maxItems"].dump() + " items");
    if (schema.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i) check(schema["items"], v[i], where + "/" + std::to_string(i), errors);
  }
  if (v.is_object()) {
    if (schema.contains("required"))
      for (const auto& key : schema["required"])
        if (!v.contains(key.get<std::string>())) errors.push_back(at + ": missing required key " + key.dump());
    const json props = schema.value("properties", json::object());
    const bool closed = schema.contains("additionalProperties") && schema["additionalProperties"] == false;
    for (const auto& [key, child] : v.items()) {
      if (props.contains(key))
        check(props[key], child, where + "/" + key, errors);
      else if (closed)
        errors.push_back(at + ": unknown key \"" + key + "\"");
    }
  }
}

json num(double min) { return {{"type", "number"}, {"minimum", min}}; }
json num(double min, double max) { return {{"type", "number"}, {"minimum", min}, {"maximum", max}}; }
json positive() { return {{"type", "number"}, {"exclusiveMinimum", 0}}; }
json integer(int min) { return {{"type", "integer"}, {"minimum", min}}; }
json integer(int min, int max) { return {{"type", "integer"}, {"minimum", min}, {"maximum", max}}; }
json boolean() { return {{"type", "boolean"}}; }
json vec3() { return {{"type", "array"}, {"items", {{"type", "number"}}}, {"minItems", 3}, {"maxItems", 3}}; }
json pair(double min) {
  return {{"type", "array"}, {"items", num(min)}, {"minItems", 2}, {"maxItems", 2}};
}
json closed(json properties) {
  return {{"type", "object"}, {"properties", std::move(properties)}, {"additionalProperties", false}};
}

json randomization_schema() {
  return closed({{"enable", closed({{"dropout", boolean()},
                                    {"position_jitter", boolean()},
                                    {"label_noise", boolean()},
                                    {"clamp", boolean()},
                                    {"background", boolean()},
                                    {"contrast", boolean()},
                                    {"crop", boolean()},
                                    {"deform", boolean()},
                                    {"smooth", boolean()}})},
                 {"clamp_range", pair(0.0)},
                 {"heliostat_jitter_sigma", num(0)},
                 {"sun_jitter_sigma", num(0)},
                 {"surface_noise_sigma", num(0)},
                 {"background_noise_max", num(0, 1)},
                 {"contrast_gamma_range", pair(0.0)},
                 {"deform_amp", num(0)},
                 {"smooth_kernel", integer(1)},
                 {"apply_prob", num(0, 1)}});
}

json build_schema() {
  const json geometry = {{"type", "object"}, {"required", {"type"}}};
  const json generation =
      closed({{"n_samples", integer(1)},
              {"min_observations", integer(1, kMaxObservations)},
              {"max_observations", integer(1, kMaxObservations)},
              {"rays_per_image", integer(1)},
              {"az_step", positive()},
              {"el_step", positive()},
              {"aim_radius", num(0)},
              {"csr_max", num(0, kMaxCsr)},
              {"location", closed({{"latitude", num(-90, 90)}, {"longitude", num(-180, 180)}})},
              {"targets", {{"type", "array"}, {"items", geometry}, {"minItems", 1}}},
              {"split_fractions", {{"type", "array"}, {"items", num(0, 1)}, {"minItems", 3}, {"maxItems", 3}}},
              {"prior", closed({{"canting_tilt_sigma", num(0)},
                                {"bow_amp_sigma", num(0)},
                                {"wave_amp_sigma", num(0)},
                                {"wave_freq_range", pair(0.0)},
                                {"noise_sigma", num(0)}})},
              {"p_rotate", num(0, 1)},
              {"p_blend", num(0, 1)}});
  const json model = closed({{"image_size", integer(1)},
                             {"patch_size", integer(1)},
                             {"embed_dim", integer(1)},
                             {"encoder_depth", integer(0)},
                             {"encoder_heads", integer(1)},
                             {"fusion_depth", integer(0)},
                             {"fusion_heads", integer(1)},
                             {"mlp_ratio", integer(1)},
                             {"latent_blocks", integer(3, 3)},
                             {"latent_dim", integer(1)},
                             {"gen_channels", integer(1)},
                             {"dropout", {{"type", "number"}, {"minimum", 0}, {"maximum", 0.99}}}});
  const json training = closed({{"epochs", integer(1)},
                                {"batch_size", integer(1)},
                                {"learning_rate", positive()},
                                {"lr_decay", {{"type", "number"}, {"exclusiveMinimum", 0}, {"maximum", 1}}},
                                {"beta1", num(0, 0.999999)},
                                {"beta2", num(0, 0.999999)},
                                {"epsilon", positive()},
                                {"weight_decay", num(0)},
                                {"randomize", boolean()},
                                {"randomization", randomization_schema()},
                                {"max_steps", integer(0)}});
  const json evaluation =
      closed({{"rays", integer(1)}, {"sun", vec3()}, {"csr", num(0, kMaxCsr)}, {"target", integer(0)}});
  const json scenario = closed({{"receiver", geometry},
                                {"eval_sun", vec3()},
                                {"csr", num(0, kMaxCsr)},
                                {"aim_columns", integer(1)},
                                {"aim_rows", integer(1)},
                                {"aim_extent", {{"type", "number"}, {"exclusiveMinimum", 0}, {"maximum", 1}}},
                                {"observations", integer(1, kMaxObservations)},
                                {"rays", integer(1)}});
  return closed({{"generation", generation},
                 {"model", model},
                 {"training", training},
                 {"evaluation", evaluation},
                 {"scenario", scenario},
                 {"degradation", randomization_schema()}});
}

Vec3 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }
json vec_to(const Vec3& v) { return json::array({v.e, v.n, v.u}); }

}  // namespace

std::vector<std::string> schema_errors(const json& schema, const json& value) {
  std::vector<std::string> errors;
  check(schema, value, "", errors);
  return errors;
}

const json& config_schema() {
  static const json schema = build_schema();
  return schema;
}

void validate(const ScenarioConfig& c) {
  validate(FluxGeometry{c.receiver});
  if (!(c.eval_sun.u > 0.0)) throw std::invalid_argument("scenario: eval_sun is below the horizon");
  if (c.aim_columns * c.aim_rows != 6) throw std::invalid_argument("scenario: the aim grid must have 6 points");
  if (!(c.aim_extent > 0.0 && c.aim_extent <= 1.0)) throw std::invalid_argument("scenario: aim_extent in (0, 1]");
  if (c.observations < 1 || c.observations > kMaxObservations)
    throw std::invalid_argument("scenario: observations must be in 1..8");
  if (c.rays < 1) throw std::invalid_argument("scenario: rays must be positive");
}

std::vector<Vec3> aim_grid(const ScenarioConfig& c) {
  std::vector<Vec3> points;
  const double margin = 0.5 * (1.0 - c.aim_extent);
  for (int r = 0; r < c.aim_rows; ++r)
    for (int col = 0; col < c.aim_columns; ++col) {
      const double s = margin + c.aim_extent * (col + 0.5) / c.aim_columns;
      const double h = 1.0 - margin - c.aim_extent * (r + 0.5) / c.aim_rows;
      points.push_back(surface_point(c.receiver, s, h));
    }
  return points;
}

RandomizationConfig degraded_test_config() {
  RandomizationConfig c;
  c.dropout = false;
  c.label_noise = false;
  c.apply_prob = 1.0;
  return c;
}

AppConfig app_config_from_json(const json& j) {
  const auto errors = schema_errors(config_schema(), j);
  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }
  AppConfig c;
  try {
    if (j.contains("generation")) c.generation = generation_config_from_json(j.at("generation"));
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("training")) c.training = train_config_from_json(j.at("training"));
    if (j.contains("evaluation")) {
      const json& e = j.at("evaluation");
      c.evaluation.rays = e.value("rays", c.evaluation.rays);
      if (e.contains("sun")) c.evaluation.sun = vec_from(e.at("sun"));
      c.evaluation.csr = e.value("csr", c.evaluation.csr);
      c.evaluation.target = e.value("target", c.evaluation.target);
    }
    if (j.contains("scenario")) {
      const json& s = j.at("scenario");
      if (s.contains("receiver")) {
        const FluxGeometry g = geometry_from_json(s.at("receiver"));
        if (!std::holds_alternative<CurvedReceiver>(g)) throw std::invalid_argument("scenario: receiver must be curved");
        c.scenario.receiver = std::get<CurvedReceiver>(g);
      }
      if (s.contains("eval_sun")) c.scenario.eval_sun = vec_from(s.at("eval_sun"));
      c.scenario.csr = s.value("csr", c.scenario.csr);
      c.scenario.aim_columns = s.value("aim_columns", c.scenario.aim_columns);
      c.scenario.aim_rows = s.value("aim_rows", c.scenario.aim_rows);
      c.scenario.aim_extent = s.value("aim_extent", c.scenario.aim_extent);
      c.scenario.observations = s.value("observations", c.scenario.observations);
      c.scenario.rays = s.value("rays", c.scenario.rays);
    }
    if (j.contains("degradation")) c.degradation = randomization_from_json(j.at("degradation"));
    validate(c.scenario);
    if (!(c.evaluation.sun.u > 0.0)) throw std::invalid_argument("evaluation: sun is below the horizon");
    if (c.evaluation.target >= static_cast<int>(c.generation.targets.size()))
      throw std::invalid_argument("evaluation: target index out of range");
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError(std::string("invalid config: ") + e.what());
  }
  return c;
}

AppConfig load_app_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config " + path + " is not valid JSON: " + e.what());
  }
  return app_config_from_json(j);
}

json to_json(const AppConfig& c) {
  return {{"generation", to_json(c.generation)},
          {"model", to_json(c.model)},
          {"training", to_json(c.training)},
          {"evaluation",
           {{"rays", c.evaluation.rays},
            {"sun", vec_to(c.evaluation.sun)},
            {"csr", c.evaluation.csr},
            {"target", c.evaluation.target}}},
          {"scenario",
           {{"receiver", to_json(FluxGeometry{c.scenario.receiver})},
            {"eval_sun", vec_to(c.scenario.eval_sun)},
            {"csr", c.scenario.csr},
            {"aim_columns", c.scenario.aim_columns},
            {"aim_rows", c.scenario.aim_rows},
            {"aim_extent", c.scenario.aim_extent},
            {"observations", c.scenario.observations},
            {"rays", c.scenario.rays}}},
          {"degradation", to_json(c.degradation)}};
}

}  // namespace helioflux
