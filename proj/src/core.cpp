#include "hyperfeed/core.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <nlohmann/json.hpp>

#include "hyperfeed/json_io.hpp"

namespace hyperfeed {

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  constexpr double kRad = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * kRad;
  const double dlon = (b.lon - a.lon) * kRad;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  double h = s1 * s1 + std::cos(a.lat * kRad) * std::cos(b.lat * kRad) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

// ---------------------------------------------------------------------------
// Timestamp

namespace {

int parse_digits(std::string_view text, std::size_t pos, std::size_t count) {
  if (pos + count > text.size()) throw std::invalid_argument("timestamp too short");
  int value = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    const char c = text[i];
    if (c < '0' || c > '9') throw std::invalid_argument("expected digit in timestamp");
    value = value * 10 + (c - '0');
  }
  return value;
}

void expect_char(std::string_view text, std::size_t pos, char c) {
  if (pos >= text.size() || text[pos] != c) {
    throw std::invalid_argument(std::string("expected '") + c + "' in timestamp");
  }
}

}  // namespace

Timestamp Timestamp::parse(std::string_view text) {
  using namespace std::chrono;
  const int y = parse_digits(text, 0, 4);
  expect_char(text, 4, '-');
  const int mo = parse_digits(text, 5, 2);
  expect_char(text, 7, '-');
  const int d = parse_digits(text, 8, 2);
  if (text.size() < 11 || (text[10] != 'T' && text[10] != 't' && text[10] != ' ')) {
    throw std::invalid_argument("expected 'T' in timestamp");
  }
  const int hh = parse_digits(text, 11, 2);
  expect_char(text, 13, ':');
  const int mm = parse_digits(text, 14, 2);
  expect_char(text, 16, ':');
  const int ss = parse_digits(text, 17, 2);

  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60) throw std::invalid_argument("timestamp field out of range");

  std::size_t pos = 19;
  std::int64_t frac_ms = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    std::size_t digits = 0;
    std::int64_t scale = 100;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
      if (digits < 3) {
        frac_ms += (text[pos] - '0') * scale;
        scale /= 10;
      }
      ++digits;
      ++pos;
    }
    if (digits == 0) throw std::invalid_argument("empty fractional seconds");
  }

  std::int64_t offset_min = 0;
  if (pos >= text.size()) throw std::invalid_argument("missing UTC offset");
  if (text[pos] == 'Z' || text[pos] == 'z') {
    ++pos;
  } else if (text[pos] == '+' || text[pos] == '-') {
    const int sign = text[pos] == '-' ? -1 : 1;
    const int oh = parse_digits(text, pos + 1, 2);
    expect_char(text, pos + 3, ':');
    const int om = parse_digits(text, pos + 4, 2);
    if (oh > 23 || om > 59) throw std::invalid_argument("offset out of range");
    offset_min = sign * (oh * 60 + om);
    pos += 6;
  } else {
    throw std::invalid_argument("bad UTC offset");
  }
  if (pos != text.size()) throw std::invalid_argument("trailing characters in timestamp");

  const auto tp = sys_days{ymd} + std::chrono::hours{hh} + minutes{mm} + seconds{ss} + milliseconds{frac_ms} -
                  minutes{offset_min};
  return Timestamp(time_point_cast<milliseconds>(tp));
}

std::string Timestamp::to_rfc3339() const {
  using namespace std::chrono;
  const auto day_point = floor<days>(tp_);
  const year_month_day ymd{day_point};
  const hh_mm_ss<milliseconds> tod{tp_ - day_point};
  std::array<char, 40> buf{};
  std::snprintf(buf.data(), buf.size(), "%04d-%02u-%02uT%02ld:%02ld:%02ld.%03ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(tod.hours().count()), static_cast<long>(tod.minutes().count()),
                static_cast<long>(tod.seconds().count()), static_cast<long>(tod.subseconds().count()));
  return buf.data();
}

Timestamp SystemClock::now() const {
  return Timestamp(std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now()));
}

// ---------------------------------------------------------------------------
// Event kinds

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kRead: return "read";
    case EventKind::kLike: return "like";
    case EventKind::kComment: return "comment";
    case EventKind::kImpression: return "impression";
    case EventKind::kDismiss: return "dismiss";
  }
  return "read";
}

EventKind parse_event_kind(std::string_view label) {
  if (label == "read") return EventKind::kRead;
  if (label == "like") return EventKind::kLike;
  if (label == "comment") return EventKind::kComment;
  if (label == "impression") return EventKind::kImpression;
  if (label == "dismiss") return EventKind::kDismiss;
  throw std::invalid_argument("unknown event kind '" + std::string(label) + "'");
}

// ---------------------------------------------------------------------------
// Social graph

bool SocialGraph::follow(const std::string& follower, const std::string& followee) {
  if (follower == followee) throw std::invalid_argument("self-follow is not allowed");
  return follows_[follower].insert(followee).second;
}

bool SocialGraph::follows(const std::string& follower, const std::string& followee) const {
  const auto it = follows_.find(follower);
  return it != follows_.end() && it->second.contains(followee);
}

const std::set<std::string>& SocialGraph::followees(const std::string& follower) const {
  static const std::set<std::string> kNone;
  const auto it = follows_.find(follower);
  return it == follows_.end() ? kNone : it->second;
}

std::size_t SocialGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& [_, s] : follows_) n += s.size();
  return n;
}

// ---------------------------------------------------------------------------
// Validation

std::string to_lower_utf8(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c >= 'A' && c <= 'Z') {
      out.push_back(static_cast<char>(c + 32));
    } else if (c == 0xC3 && i + 1 < text.size()) {
      // U+00C0..U+00DE (except U+00D7) lowercase to +0x20, which in UTF-8 is 0xC3 0x80..0x9E -> 0xA0..0xBE.
      auto c2 = static_cast<unsigned char>(text[i + 1]);
      if (c2 >= 0x80 && c2 <= 0x9E && c2 != 0x97) c2 = static_cast<unsigned char>(c2 + 0x20);
      out.push_back(static_cast<char>(c));
      out.push_back(static_cast<char>(c2));
      ++i;
    } else {
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

namespace {

const nlohmann::json& require(const nlohmann::json& raw, const char* field) {
  const auto it = raw.find(field);
  if (it == raw.end() || it->is_null()) {
    throw FieldError("MissingField", field, std::string("missing required field '") + field + "'");
  }
  return *it;
}

std::string require_string(const nlohmann::json& raw, const char* field) {
  const auto& v = require(raw, field);
  if (!v.is_string()) throw FieldError("OutOfRange", field, std::string("field '") + field + "' must be a string");
  auto s = v.get<std::string>();
  if (s.empty()) throw FieldError("MissingField", field, std::string("field '") + field + "' is empty");
  return s;
}

std::string optional_string(const nlohmann::json& raw, const char* field) {
  const auto it = raw.find(field);
  if (it == raw.end() || it->is_null()) return {};
  if (!it->is_string()) throw FieldError("OutOfRange", field, std::string("field '") + field + "' must be a string");
  return it->get<std::string>();
}

double coordinate(const nlohmann::json& loc, const char* field, double limit) {
  const auto& v = require(loc, field);
  if (!v.is_number()) throw FieldError("OutOfRange", field, std::string("'") + field + "' must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x) || x < -limit || x > limit) {
    throw FieldError("OutOfRange", field, std::string("'") + field + "' outside [-" + std::to_string(int(limit)) +
                                              ", " + std::to_string(int(limit)) + "]");
  }
  return x;
}

GeoPoint parse_location(const nlohmann::json& loc) {
  if (!loc.is_object()) throw FieldError("OutOfRange", "location", "'location' must be an object {lat, lon}");
  return GeoPoint{coordinate(loc, "lat", 90.0), coordinate(loc, "lon", 180.0)};
}

Timestamp parse_time(const nlohmann::json& raw, const char* field) {
  const auto& v = require(raw, field);
  if (!v.is_string()) throw FieldError("OutOfRange", field, std::string("'") + field + "' must be RFC 3339 text");
  try {
    return Timestamp::parse(v.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw FieldError("OutOfRange", field, std::string("'") + field + "': " + e.what());
  }
}

}  // namespace

NewsItem validate_news(const nlohmann::json& raw) {
  if (!raw.is_object()) throw FieldError("OutOfRange", "body", "news body must be a JSON object");
  NewsItem item;
  item.id = require_string(raw, "id");
  item.location = parse_location(require(raw, "location"));
  item.created_at = parse_time(raw, "created_at");
  if (auto media = optional_string(raw, "media_ref"); !media.empty()) item.media_ref = std::move(media);
  item.description = optional_string(raw, "description");
  item.category = to_lower_utf8(optional_string(raw, "category"));
  item.channel = optional_string(raw, "channel");
  item.author_id = optional_string(raw, "author_id");

  if (const auto it = raw.find("hashtags"); it != raw.end() && !it->is_null()) {
    if (!it->is_array()) throw FieldError("OutOfRange", "hashtags", "'hashtags' must be an array of strings");
    for (const auto& tag : *it) {
      if (!tag.is_string()) throw FieldError("OutOfRange", "hashtags", "'hashtags' must be an array of strings");
      std::string t = to_lower_utf8(tag.get<std::string>());
      if (!t.empty() && t.front() == '#') t.erase(0, 1);
      if (!t.empty()) item.hashtags.push_back(std::move(t));
    }
    std::sort(item.hashtags.begin(), item.hashtags.end());
    item.hashtags.erase(std::unique(item.hashtags.begin(), item.hashtags.end()), item.hashtags.end());
  }
  return item;
}

UsageEvent validate_event(const nlohmann::json& raw) {
  if (!raw.is_object()) throw FieldError("OutOfRange", "body", "event body must be a JSON object");
  UsageEvent ev;
  ev.user_id = require_string(raw, "user_id");
  ev.news_id = require_string(raw, "news_id");
  const std::string kind = require_string(raw, "kind");
  try {
    ev.kind = parse_event_kind(kind);
  } catch (const std::invalid_argument& e) {
    throw FieldError("OutOfRange", "kind", e.what());
  }
  ev.at = parse_time(raw, "at");
  if (const auto it = raw.find("location"); it != raw.end() && !it->is_null()) ev.location = parse_location(*it);
  return ev;
}

nlohmann::json to_json(const GeoPoint& p) { return {{"lat", p.lat}, {"lon", p.lon}}; }

nlohmann::json to_json(const NewsItem& item) {
  nlohmann::json j = {{"id", item.id},
                      {"description", item.description},
                      {"category", item.category},
                      {"channel", item.channel},
                      {"hashtags", item.hashtags},
                      {"location", to_json(item.location)},
                      {"created_at", item.created_at.to_rfc3339()},
                      {"author_id", item.author_id}};
  if (item.media_ref) j["media_ref"] = *item.media_ref;
  return j;
}

nlohmann::json to_json(const UsageEvent& event) {
  nlohmann::json j = {{"user_id", event.user_id},
                      {"news_id", event.news_id},
                      {"kind", std::string(to_string(event.kind))},
                      {"at", event.at.to_rfc3339()}};
  if (event.location) j["location"] = to_json(*event.location);
  return j;
}

}  // namespace hyperfeed
