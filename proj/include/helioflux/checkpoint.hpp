#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "helioflux/model.hpp"

namespace helioflux {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "HFCK", u32 version, JSON blob {model, extra}, u32 tensor count, then per
/// tensor: name blob, u32 rows, u32 cols, rows * cols f64.
void write_checkpoint(std::ostream& out, const Model& model, const nlohmann::json& extra = nlohmann::json::object());
void save_checkpoint(const std::string& path, const Model& model,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  Model model;
  nlohmann::json extra;
};

/// Throws io::FormatError on a malformed file or a tensor set that does not
/// match the stored config.
LoadedCheckpoint read_checkpoint(std::istream& in);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace helioflux
