#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "helioflux/flux_image.hpp"
#include "helioflux/geometry.hpp"
#include "helioflux/nurbs.hpp"
#include "helioflux/rng.hpp"

namespace helioflux {

/// Procedural surface-error model: facet tilt, quadratic bow, sinusoidal
/// waviness and white noise, all zero-mean Gaussian in amplitude.
struct SurfacePrior {
  double canting_tilt_sigma = 0.5;  // mrad
  double bow_amp_sigma = 0.3;       // mm
  double wave_amp_sigma = 0.15;     // mm
  double wave_freq_min = 1.0;       // cycles per facet
  double wave_freq_max = 3.0;
  double noise_sigma = 0.02;  // mm
};

void validate(const SurfacePrior& prior);

HeliostatSurface synth_surface(const SurfacePrior& prior, Rng& rng);

/// Heliostat turned by 180 degrees about its normal.
HeliostatSurface augment_rotate180(const HeliostatSurface& s);

/// (1 - lambda) * a + lambda * b, element-wise.
HeliostatSurface augment_blend(const HeliostatSurface& a, const HeliostatSurface& b, double lambda);

struct SiteLocation {
  double latitude = 50.91;  // deg
  double longitude = 6.39;  // deg
};

inline constexpr double kMaxDeclination = 23.44;  // deg

/// Highest solar elevation reachable at `azimuth_deg` over a year, or a
/// negative value when the sun never stands above the horizon there.
double max_solar_elevation(double latitude_deg, double azimuth_deg);

struct SunNode {
  double azimuth = 0.0;
  double elevation = 0.0;
  Vec3 direction;
};

/// Azimuth-elevation grid nodes with elevation above zero and below the
/// annual maximum for their azimuth. Throws std::invalid_argument when empty.
std::vector<SunNode> sun_grid(const SiteLocation& location, double az_step_deg, double el_step_deg);

/// Nodes whose elevation exceeds the median elevation of `nodes`.
std::vector<SunNode> summer_nodes(const std::vector<SunNode>& nodes);

/// Uniform point on the disc of `radius` around `center` spanned by `right` and `up`.
Vec3 scatter_aim(const Vec3& center, const Vec3& right, const Vec3& up, Rng& rng, double radius = 1.0);
Vec3 scatter_aim(const TargetPlane& target, Rng& rng, double radius = 1.0);

struct Observation {
  SunState sun;
  Vec3 aim_point;
  FluxImage flux;
};

inline constexpr int kMaxObservations = 8;

struct DatasetSample {
  HeliostatSpec heliostat;
  HeliostatSurface truth;
  std::vector<Observation> observations;
};

void validate(const DatasetSample& sample);

enum class Split { kTrain, kVal, kTest };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// Two Lambertian calibration targets on the tower's north face.
std::vector<TargetPlane> default_targets();

struct GenerationConfig {
  int n_samples = 2000;
  int min_observations = 3;
  int max_observations = kMaxObservations;
  std::uint64_t rays_per_image = 50000;
  double az_step = 10.0;
  double el_step = 5.0;
  double aim_radius = 1.0;
  double csr_max = kMaxCsr;
  SiteLocation location;
  std::vector<TargetPlane> targets = default_targets();
  std::array<double, 3> split_fractions{0.7, 0.15, 0.15};
  SurfacePrior prior;
  double p_rotate = 0.5;
  double p_blend = 0.5;
};

nlohmann::json to_json(const GenerationConfig& c);
GenerationConfig generation_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SurfacePrior& p);
SurfacePrior surface_prior_from_json(const nlohmann::json& j);

/// Heliostat field file: JSON array of {id, position_enu_m, focal_distance_m}.
nlohmann::json field_to_json(const std::vector<HeliostatSpec>& field);
std::vector<HeliostatSpec> field_from_json(const nlohmann::json& j);
std::vector<HeliostatSpec> read_field_file(const std::string& path);
void write_field_file(const std::string& path, const std::vector<HeliostatSpec>& field);

/// Heliostats in a fan 50-250 m north of the tower (bearing within 60 deg of
/// North), ids "H000".., focal distance = distance to `receiver_apex`, at least 65 m.
std::vector<HeliostatSpec> generate_field(int n, std::uint64_t seed, const Vec3& receiver_apex = {0, 0, 55});

/// Heliostat-id split assignment; disjoint by construction.
std::vector<Split> assign_splits(const std::vector<HeliostatSpec>& field, const std::array<double, 3>& fractions,
                                 std::uint64_t seed);

struct ManifestEntry {
  int index = 0;
  std::string file;
  Split split = Split::kTrain;
  std::string heliostat_id;
  std::uint64_t bytes = 0;
  std::vector<std::uint64_t> observation_offsets;
};

struct DatasetManifest {
  int schema_version = 1;
  SiteLocation location;
  std::array<int, 3> counts{};
  std::vector<ManifestEntry> entries;
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json config;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

/// 16 hex digits of FNV-1a over the canonical JSON text.
std::string config_hash(const nlohmann::json& canonical);

/// One dataset sample drawn deterministically from (seed, index).
DatasetSample make_sample(const HeliostatSpec& heliostat, const std::vector<SunNode>& suns,
                          const GenerationConfig& config, std::uint64_t seed, int index);

/// Writes manifest.json and samples/NNNNNN.bin under `out_dir`.
DatasetManifest generate_dataset(const std::vector<HeliostatSpec>& field, const GenerationConfig& config,
                                 std::uint64_t seed, const std::string& out_dir, int threads = 1);

/// Sample file: "HSMP", u32 version, JSON header blob, u32 count, FLUX records.
void write_sample(std::ostream& out, const DatasetSample& sample, std::vector<std::uint64_t>* offsets = nullptr);
DatasetSample read_sample(std::istream& in);
DatasetSample read_sample_file(const std::string& path);

DatasetManifest read_manifest(const std::string& dir);

struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<DatasetSample> samples;
  std::vector<Split> splits;
  std::vector<int> indices(Split s) const;
};

LoadedDataset load_dataset(const std::string& dir, int threads = 1);

nlohmann::json to_json(const HeliostatSpec& h);
HeliostatSpec heliostat_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HeliostatSurface& s);
HeliostatSurface surface_from_json(const nlohmann::json& j);

}  // namespace helioflux
