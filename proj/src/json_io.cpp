#include "hyperfeed/json_io.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include <nlohmann/json.hpp>

namespace hyperfeed {

std::string format_double(double x, int min_fraction) {
  if (!std::isfinite(x)) return "null";
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  std::string s(buf.data(), end);
  if (s.find_first_of("eE") != std::string::npos) {
    // Scientific notation is valid JSON; coordinates never reach it.
    return s;
  }
  const auto dot = s.find('.');
  int have = dot == std::string::npos ? 0 : static_cast<int>(s.size() - dot - 1);
  if (have < min_fraction) {
    if (dot == std::string::npos) s.push_back('.');
    s.append(static_cast<std::size_t>(min_fraction - have), '0');
  } else if (dot == std::string::npos) {
    // Keep floats distinguishable from integers on re-parse.
    s += ".0";
  }
  return s;
}

namespace {

void write(const nlohmann::json& v, std::string& out, bool coordinate) {
  switch (v.type()) {
    case nlohmann::json::value_t::object: {
      out.push_back('{');
      bool first = true;
      for (const auto& [key, child] : v.items()) {
        if (!first) out.push_back(',');
        first = false;
        out += nlohmann::json(key).dump();
        out.push_back(':');
        write(child, out, key == "lat" || key == "lon");
      }
      out.push_back('}');
      break;
    }
    case nlohmann::json::value_t::array: {
      out.push_back('[');
      bool first = true;
      for (const auto& child : v) {
        if (!first) out.push_back(',');
        first = false;
        write(child, out, false);
      }
      out.push_back(']');
      break;
    }
    case nlohmann::json::value_t::number_float:
      out += format_double(v.get<double>(), coordinate ? 6 : 0);
      break;
    default:
      out += v.dump();
  }
}

}  // namespace

std::string dump_json(const nlohmann::json& value) {
  std::string out;
  write(value, out, false);
  return out;
}

}  // namespace hyperfeed
