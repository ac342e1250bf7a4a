#pragma once

// Binary delta files:
//   "ADLT" | u16 LE version (1) | u32 LE header length | UTF-8 JSON header |
//   embedding_dim x float32 LE payload

#include <cstdint>
#include <filesystem>
#include <vector>

#include "adelta/delta.hpp"

namespace adelta {

inline constexpr std::uint16_t kDeltaFileVersion = 1;

std::vector<std::uint8_t> serialize_delta(const AttributeDelta& delta);
// Throws BadMagic, UnsupportedVersion, CorruptHeader or DimMismatchOnLoad.
AttributeDelta parse_delta(const std::vector<std::uint8_t>& bytes);

// Writes to a sibling temporary file and renames it into place.
void save_delta(const AttributeDelta& delta, const std::filesystem::path& path);
AttributeDelta load_delta(const std::filesystem::path& path);

nlohmann::json delta_header(const AttributeDelta& delta);

}  // namespace adelta
