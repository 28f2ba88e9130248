#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "helioflux/binary_io.hpp"
#include "helioflux/datagen.hpp"
#include "helioflux/parallel.hpp"

namespace helioflux {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint32_t kSampleVersion = 1;

json vec_json(const Vec3& v) { return json::array({v.e, v.n, v.u}); }

Vec3 json_vec(const json& j) {
  if (!j.is_array() || j.size() != 3) throw io::FormatError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json mat_json(const Mat3& m) { return json(m.m); }

Mat3 json_mat(const json& j) {
  if (!j.is_array() || j.size() != 9) throw io::FormatError("expected a 3x3 matrix");
  Mat3 m;
  for (std::size_t i = 0; i < 9; ++i) m.m[i] = j[i].get<double>();
  return m;
}

std::string sample_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.bin", index);
  return buf;
}

void write_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot rename " + tmp.string() + ": " + ec.message());
}

}  // namespace

json to_json(const HeliostatSpec& h) {
  json facets = json::array();
  for (const auto& f : h.facets)
    facets.push_back({{"width", f.width},
                      {"height", f.height},
                      {"center_offset", vec_json(f.center_offset)},
                      {"canting_rotation", mat_json(f.canting_rotation)}});
  return {{"id", h.id}, {"position", vec_json(h.position)}, {"focal_distance", h.focal_distance}, {"facets", facets}};
}

HeliostatSpec heliostat_from_json(const json& j) {
  HeliostatSpec h;
  h.id = j.at("id").get<std::string>();
  h.position = json_vec(j.at("position"));
  h.focal_distance = j.at("focal_distance").get<double>();
  const json& facets = j.at("facets");
  if (!facets.is_array() || facets.size() != kFacetCount) throw io::FormatError("heliostat: expected 4 facets");
  for (std::size_t k = 0; k < kFacetCount; ++k) {
    const json& f = facets[k];
    h.facets[k].width = f.at("width").get<double>();
    h.facets[k].height = f.at("height").get<double>();
    h.facets[k].center_offset = json_vec(f.at("center_offset"));
    h.facets[k].canting_rotation = json_mat(f.at("canting_rotation"));
  }
  return h;
}

json to_json(const HeliostatSurface& s) {
  json facets = json::array();
  for (const auto& f : s.facets)
    facets.push_back({{"degree", f.degree}, {"knots_u", f.knots_u}, {"knots_v", f.knots_v}, {"control_z", f.control_z}});
  return facets;
}

HeliostatSurface surface_from_json(const json& j) {
  if (!j.is_array() || j.size() != kFacetCount) throw io::FormatError("surface: expected 4 facets");
  HeliostatSurface s;
  for (std::size_t k = 0; k < kFacetCount; ++k) {
    const json& f = j[k];
    s.facets[k].degree = f.at("degree").get<int>();
    s.facets[k].knots_u = f.at("knots_u").get<std::vector<double>>();
    s.facets[k].knots_v = f.at("knots_v").get<std::vector<double>>();
    const auto z = f.at("control_z").get<std::vector<double>>();
    if (z.size() != kControlPoints) throw io::FormatError("surface: expected 64 control points per facet");
    std::copy(z.begin(), z.end(), s.facets[k].control_z.begin());
  }
  return s;
}

json to_json(const SurfacePrior& p) {
  return {{"canting_tilt_sigma", p.canting_tilt_sigma},
          {"bow_amp_sigma", p.bow_amp_sigma},
          {"wave_amp_sigma", p.wave_amp_sigma},
          {"wave_freq_range", {p.wave_freq_min, p.wave_freq_max}},
          {"noise_sigma", p.noise_sigma}};
}

SurfacePrior surface_prior_from_json(const json& j) {
  SurfacePrior p;
  p.canting_tilt_sigma = j.value("canting_tilt_sigma", p.canting_tilt_sigma);
  p.bow_amp_sigma = j.value("bow_amp_sigma", p.bow_amp_sigma);
  p.wave_amp_sigma = j.value("wave_amp_sigma", p.wave_amp_sigma);
  p.noise_sigma = j.value("noise_sigma", p.noise_sigma);
  if (j.contains("wave_freq_range")) {
    const auto r = j.at("wave_freq_range").get<std::vector<double>>();
    if (r.size() != 2) throw std::invalid_argument("wave_freq_range must have two entries");
    p.wave_freq_min = r[0];
    p.wave_freq_max = r[1];
  }
  validate(p);
  return p;
}

json to_json(const GenerationConfig& c) {
  json targets = json::array();
  for (const auto& t : c.targets) targets.push_back(to_json(FluxGeometry{t}));
  return {{"n_samples", c.n_samples},
          {"min_observations", c.min_observations},
          {"max_observations", c.max_observations},
          {"rays_per_image", c.rays_per_image},
          {"az_step", c.az_step},
          {"el_step", c.el_step},
          {"aim_radius", c.aim_radius},
          {"csr_max", c.csr_max},
          {"location", {{"latitude", c.location.latitude}, {"longitude", c.location.longitude}}},
          {"targets", targets},
          {"split_fractions", c.split_fractions},
          {"prior", to_json(c.prior)},
          {"p_rotate", c.p_rotate},
          {"p_blend", c.p_blend}};
}

GenerationConfig generation_config_from_json(const json& j) {
  GenerationConfig c;
  c.n_samples = j.value("n_samples", c.n_samples);
  c.min_observations = j.value("min_observations", c.min_observations);
  c.max_observations = j.value("max_observations", c.max_observations);
  c.rays_per_image = j.value("rays_per_image", c.rays_per_image);
  c.az_step = j.value("az_step", c.az_step);
  c.el_step = j.value("el_step", c.el_step);
  c.aim_radius = j.value("aim_radius", c.aim_radius);
  c.csr_max = j.value("csr_max", c.csr_max);
  if (j.contains("location")) {
    c.location.latitude = j.at("location").value("latitude", c.location.latitude);
    c.location.longitude = j.at("location").value("longitude", c.location.longitude);
  }
  if (j.contains("targets")) {
    c.targets.clear();
    for (const auto& t : j.at("targets")) {
      const FluxGeometry g = geometry_from_json(t);
      if (!std::holds_alternative<TargetPlane>(g)) throw std::invalid_argument("targets must be target planes");
      c.targets.push_back(std::get<TargetPlane>(g));
    }
  }
  if (j.contains("split_fractions")) c.split_fractions = j.at("split_fractions").get<std::array<double, 3>>();
  if (j.contains("prior")) c.prior = surface_prior_from_json(j.at("prior"));
  c.p_rotate = j.value("p_rotate", c.p_rotate);
  c.p_blend = j.value("p_blend", c.p_blend);

  if (c.n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  if (c.min_observations < 1 || c.max_observations > kMaxObservations || c.min_observations > c.max_observations)
    throw std::invalid_argument("observation counts must satisfy 1 <= min <= max <= 8");
  if (c.rays_per_image < 1) throw std::invalid_argument("rays_per_image must be >= 1");
  if (!(c.csr_max >= 0.0 && c.csr_max <= kMaxCsr)) throw std::invalid_argument("csr_max must lie in [0, 0.15]");
  if (c.targets.empty()) throw std::invalid_argument("at least one target is required");
  for (const auto& t : c.targets) validate(t);
  if (!(c.p_rotate >= 0 && c.p_rotate <= 1 && c.p_blend >= 0 && c.p_blend <= 1))
    throw std::invalid_argument("augmentation probabilities must lie in [0, 1]");
  return c;
}

json field_to_json(const std::vector<HeliostatSpec>& field) {
  json arr = json::array();
  for (const auto& h : field)
    arr.push_back({{"id", h.id}, {"position_enu_m", vec_json(h.position)}, {"focal_distance_m", h.focal_distance}});
  return arr;
}

std::vector<HeliostatSpec> field_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("field: expected a nonempty array");
  std::vector<HeliostatSpec> field;
  for (const auto& r : j) {
    HeliostatSpec h = make_heliostat(r.at("id").get<std::string>(), json_vec(r.at("position_enu_m")),
                                     r.at("focal_distance_m").get<double>());
    validate(h);
    field.push_back(std::move(h));
  }
  return field;
}

std::vector<HeliostatSpec> read_field_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open field file " + path);
  try {
    return field_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

void write_field_file(const std::string& path, const std::vector<HeliostatSpec>& field) {
  write_atomic(path, field_to_json(field).dump(2) + "\n");
}

std::vector<HeliostatSpec> generate_field(int n, std::uint64_t seed, const Vec3& receiver_apex) {
  if (n < 1) throw std::invalid_argument("generate_field: need at least one heliostat");
  Rng rng(derive_seed(seed, 0xF1E1Dull));
  std::vector<HeliostatSpec> field;
  for (int i = 0; i < n; ++i) {
    // Uniform over the annulus sector by area.
    const double r2 = 50.0 * 50.0 + uniform01(rng) * (250.0 * 250.0 - 50.0 * 50.0);
    const double r = std::sqrt(r2);
    const double bearing = (uniform01(rng) * 120.0 - 60.0) * std::numbers::pi / 180.0;
    const Vec3 pos{r * std::sin(bearing), r * std::cos(bearing), 0.0};
    const double focal = std::max(kMinFocalDistance, norm(receiver_apex - pos));
    char id[16];
    std::snprintf(id, sizeof id, "H%03d", i);
    field.push_back(make_heliostat(id, pos, focal));
  }
  return field;
}

std::string config_hash(const json& canonical) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canonical.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json to_json(const DatasetManifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries)
    entries.push_back({{"index", e.index},
                       {"file", e.file},
                       {"split", to_string(e.split)},
                       {"heliostat_id", e.heliostat_id},
                       {"bytes", e.bytes},
                       {"observation_offsets", e.observation_offsets}});
  return {{"schema_version", m.schema_version},
          {"location", {{"latitude", m.location.latitude}, {"longitude", m.location.longitude}}},
          {"counts", {{"train", m.counts[0]}, {"val", m.counts[1]}, {"test", m.counts[2]}}},
          {"config_hash", m.config_hash},
          {"seed", m.seed},
          {"config", m.config},
          {"samples", entries}};
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != 1) throw io::FormatError("manifest: unsupported schema_version");
  m.location.latitude = j.at("location").at("latitude").get<double>();
  m.location.longitude = j.at("location").at("longitude").get<double>();
  m.counts = {j.at("counts").at("train").get<int>(), j.at("counts").at("val").get<int>(),
              j.at("counts").at("test").get<int>()};
  m.config_hash = j.at("config_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config = j.at("config");
  for (const auto& e : j.at("samples")) {
    ManifestEntry me;
    me.index = e.at("index").get<int>();
    me.file = e.at("file").get<std::string>();
    me.split = split_from_string(e.at("split").get<std::string>());
    me.heliostat_id = e.at("heliostat_id").get<std::string>();
    me.bytes = e.at("bytes").get<std::uint64_t>();
    me.observation_offsets = e.at("observation_offsets").get<std::vector<std::uint64_t>>();
    m.entries.push_back(std::move(me));
  }
  return m;
}

void write_sample(std::ostream& out, const DatasetSample& s, std::vector<std::uint64_t>* offsets) {
  validate(s);
  const auto start = out.tellp();
  json obs = json::array();
  for (const auto& o : s.observations)
    obs.push_back({{"sun", vec_json(o.sun.direction)}, {"csr", o.sun.csr}, {"aim", vec_json(o.aim_point)}});
  const json header{{"heliostat", to_json(s.heliostat)}, {"truth", to_json(s.truth)}, {"observations", obs}};
  io::write_magic(out, "HSMP");
  io::write_le<std::uint32_t>(out, kSampleVersion);
  io::write_blob(out, header.dump());
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.observations.size()));
  if (offsets) offsets->clear();
  for (const auto& o : s.observations) {
    if (offsets) offsets->push_back(static_cast<std::uint64_t>(out.tellp() - start));
    write_flux(out, o.flux);
  }
}

DatasetSample read_sample(std::istream& in) {
  io::expect_magic(in, "HSMP");
  if (io::read_le<std::uint32_t>(in) != kSampleVersion) throw io::FormatError("sample: unsupported version");
  const json header = json::parse(io::read_blob(in));
  DatasetSample s;
  s.heliostat = heliostat_from_json(header.at("heliostat"));
  s.truth = surface_from_json(header.at("truth"));
  const json& obs = header.at("observations");
  const auto count = io::read_le<std::uint32_t>(in);
  if (count != obs.size()) throw io::FormatError("sample: observation count disagrees with header");
  for (std::uint32_t k = 0; k < count; ++k) {
    Observation o;
    o.sun.direction = json_vec(obs[k].at("sun"));
    o.sun.csr = obs[k].at("csr").get<double>();
    o.aim_point = json_vec(obs[k].at("aim"));
    o.flux = read_flux(in);
    s.observations.push_back(std::move(o));
  }
  validate(s);
  return s;
}

DatasetSample read_sample_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open sample file " + path);
  try {
    return read_sample(in);
  } catch (const std::exception& e) {
    throw io::FormatError(path + ": " + e.what());
  }
}

DatasetManifest generate_dataset(const std::vector<HeliostatSpec>& field, const GenerationConfig& config,
                                 std::uint64_t seed, const std::string& out_dir, int threads) {
  if (field.empty()) throw std::invalid_argument("generate_dataset: empty field");
  for (const auto& h : field) validate(h);
  const std::vector<SunNode> suns = sun_grid(config.location, config.az_step, config.el_step);
  const std::vector<Split> splits = assign_splits(field, config.split_fractions, seed);

  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root / "samples", ec);
  if (ec) throw std::runtime_error("cannot create " + (root / "samples").string() + ": " + ec.message());

  DatasetManifest m;
  m.location = config.location;
  m.seed = seed;
  m.config = to_json(config);
  m.config_hash = config_hash(json{{"config", m.config}, {"field", field_to_json(field)}, {"seed", seed}});
  m.entries.resize(static_cast<std::size_t>(config.n_samples));

  parallel_for(static_cast<std::size_t>(config.n_samples), threads, [&](std::size_t i) {
    const std::size_t h = i % field.size();
    const DatasetSample s = make_sample(field[h], suns, config, seed, static_cast<int>(i));
    std::ostringstream buf(std::ios::binary);
    ManifestEntry& e = m.entries[i];
    write_sample(buf, s, &e.observation_offsets);
    const std::string bytes = buf.str();
    e.index = static_cast<int>(i);
    e.file = "samples/" + sample_name(static_cast<int>(i));
    e.split = splits[h];
    e.heliostat_id = field[h].id;
    e.bytes = bytes.size();
    write_atomic(root / e.file, bytes);
  });

  for (const auto& e : m.entries) ++m.counts[static_cast<std::size_t>(e.split)];
  write_atomic(root / "manifest.json", to_json(m).dump(2) + "\n");
  return m;
}

DatasetManifest read_manifest(const std::string& dir) {
  const fs::path path = fs::path(dir) / "manifest.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return manifest_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw io::FormatError(path.string() + ": " + e.what());
  }
}

LoadedDataset load_dataset(const std::string& dir, int threads) {
  LoadedDataset d;
  d.manifest = read_manifest(dir);
  const std::size_t n = d.manifest.entries.size();
  d.samples.resize(n);
  d.splits.resize(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const ManifestEntry& e = d.manifest.entries[i];
    d.samples[i] = read_sample_file((fs::path(dir) / e.file).string());
    d.splits[i] = e.split;
  });
  return d;
}

}  // namespace helioflux
