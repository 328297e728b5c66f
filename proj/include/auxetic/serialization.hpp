#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "auxetic/geometry.hpp"

namespace auxetic::serialization {

/// {"lambda": ..., "t": ..., "A": ...} in mm.
nlohmann::json design_to_json(const geometry::DesignParams& p);
geometry::DesignParams design_from_json(const nlohmann::json& j);

/// 64-bit FNV-1a over raw bytes; used for artifact fingerprints.
std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t v);

std::string read_file(const std::string& path);
/// Writes atomically enough for our purposes: truncate and write.
void write_file(const std::string& path, const std::string& contents);

}  // namespace auxetic::serialization
