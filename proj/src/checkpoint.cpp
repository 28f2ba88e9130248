#include "helioflux/checkpoint.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "helioflux/binary_io.hpp"

namespace helioflux {

void write_checkpoint(std::ostream& out, const Model& model, const nlohmann::json& extra) {
  io::write_magic(out, "HFCK");
  io::write_le<std::uint32_t>(out, kCheckpointVersion);
  io::write_blob(out, nlohmann::json{{"model", to_json(model.config())}, {"extra", extra}}.dump());
  const auto& params = model.params().all();
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    io::write_blob(out, p.name);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rows()));
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.cols()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) io::write_le<double>(out, p.value.data()[i]);
  }
}

void save_checkpoint(const std::string& path, const Model& model, const nlohmann::json& extra) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    write_checkpoint(out, model, extra);
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint read_checkpoint(std::istream& in) {
  io::expect_magic(in, "HFCK");
  const auto version = io::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw io::FormatError("unsupported checkpoint version " + std::to_string(version));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(io::read_blob(in));
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError(std::string("checkpoint header: ") + e.what());
  }
  LoadedCheckpoint ck{Model(model_config_from_json(header.at("model")), 0), header.value("extra", nlohmann::json{})};
  auto& store = ck.model.params();
  const auto count = io::read_le<std::uint32_t>(in);
  if (count != store.all().size())
    throw io::FormatError("checkpoint holds " + std::to_string(count) + " tensors, config expects " +
                          std::to_string(store.all().size()));
  std::set<std::string> seen;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = io::read_blob(in);
    if (!store.contains(name) || !seen.insert(name).second) throw io::FormatError("unexpected tensor " + name);
    auto& p = store.get(name);
    const auto rows = io::read_le<std::uint32_t>(in);
    const auto cols = io::read_le<std::uint32_t>(in);
    if (rows != p.value.rows() || cols != p.value.cols()) throw io::FormatError("shape mismatch for tensor " + name);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double v = io::read_le<double>(in);
      if (!std::isfinite(v)) throw io::FormatError("non-finite value in tensor " + name);
      p.value.data()[i] = v;
    }
  }
  return ck;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace helioflux
