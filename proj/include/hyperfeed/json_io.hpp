#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

namespace hyperfeed {

/// Compact JSON with sorted object keys. Floats under the keys "lat" and "lon" are written
/// with at least six fractional digits; every other float uses the shortest round-trip form.
std::string dump_json(const nlohmann::json& value);

/// Shortest round-trip text for `x`, padded with zeros to at least `min_fraction` fractional digits.
std::string format_double(double x, int min_fraction = 0);

}  // namespace hyperfeed
