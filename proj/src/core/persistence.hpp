#pragma once

#include "core/sampler.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace mlmcmc {

using Json = nlohmann::json;

/// Chain records and sampler snapshots are stored as CBOR documents whose
/// numeric arrays are packed as little-endian IEEE-754 byte strings, so every
/// value (NaN and ±inf included) round-trips bit for bit.
Json chainset_to_json(const ChainSet& chains);
ChainSet chainset_from_json(const Json& j);

Json snapshot_to_json(const SamplerSnapshot& snapshot);
SamplerSnapshot snapshot_from_json(const Json& j);

/// Writes through a temporary file and renames, so readers never observe a
/// partially written document.
void write_cbor(const std::filesystem::path& path, const Json& j);
Json read_cbor(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// JSON has no NaN/inf literals: non-finite values are written as null and
/// read back as NaN.
Json finite_or_null(double v);
double number_or_nan(const Json& j);

}  // namespace mlmcmc
