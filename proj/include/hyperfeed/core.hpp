#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace hyperfeed {

inline constexpr double kEarthRadiusKm = 6371.0;

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  bool valid() const { return lat >= -90.0 && lat <= 90.0 && lon >= -180.0 && lon <= 180.0; }
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Great-circle distance on a sphere of radius kEarthRadiusKm.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

/// UTC instant at millisecond resolution.
class Timestamp {
 public:
  using Duration = std::chrono::milliseconds;
  using TimePoint = std::chrono::sys_time<Duration>;

  constexpr Timestamp() = default;
  constexpr explicit Timestamp(TimePoint tp) : tp_(tp) {}

  static constexpr Timestamp from_millis(std::int64_t ms) { return Timestamp(TimePoint(Duration(ms))); }
  /// Parses "YYYY-MM-DDTHH:MM:SS[.fff][Z|+HH:MM]". Throws std::invalid_argument.
  static Timestamp parse(std::string_view text);

  constexpr std::int64_t millis() const { return tp_.time_since_epoch().count(); }
  constexpr TimePoint time_point() const { return tp_; }
  /// Always "YYYY-MM-DDTHH:MM:SS.mmmZ".
  std::string to_rfc3339() const;

  constexpr Timestamp operator+(Duration d) const { return Timestamp(tp_ + d); }
  constexpr Timestamp operator-(Duration d) const { return Timestamp(tp_ - d); }
  friend constexpr auto operator<=>(const Timestamp&, const Timestamp&) = default;

 private:
  TimePoint tp_{};
};

/// Signed difference a - b in hours.
inline double hours_between(Timestamp a, Timestamp b) {
  return static_cast<double>(a.millis() - b.millis()) / 3'600'000.0;
}

inline std::chrono::milliseconds hours(double h) {
  return std::chrono::milliseconds(static_cast<std::int64_t>(h * 3'600'000.0));
}

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override;
};

/// Clock that only moves when told to. Used by tests and the simulator; safe to read from
/// server threads while another thread moves it.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(Timestamp start) : ms_(start.millis()) {}
  Timestamp now() const override { return Timestamp::from_millis(ms_.load()); }
  void set(Timestamp t) { ms_.store(t.millis()); }
  void advance(std::chrono::milliseconds d) { ms_.fetch_add(d.count()); }

 private:
  std::atomic<std::int64_t> ms_;
};

struct NewsItem {
  std::string id;
  std::optional<std::string> media_ref;
  std::string description;
  std::string category;
  std::string channel;
  std::vector<std::string> hashtags;  // lowercase, sorted, unique
  GeoPoint location;
  Timestamp created_at;
  std::string author_id;

  friend bool operator==(const NewsItem&, const NewsItem&) = default;
};

enum class EventKind { kRead, kLike, kComment, kImpression, kDismiss };

inline constexpr std::size_t kEventKindCount = 5;

std::string_view to_string(EventKind kind);
/// Throws std::invalid_argument for labels outside the closed set.
EventKind parse_event_kind(std::string_view label);

/// read, like and comment move the user to a new state; impression and dismiss do not.
inline bool is_consuming(EventKind kind) {
  return kind == EventKind::kRead || kind == EventKind::kLike || kind == EventKind::kComment;
}

struct UsageEvent {
  std::string user_id;
  std::string news_id;
  EventKind kind = EventKind::kRead;
  Timestamp at;
  std::optional<GeoPoint> location;

  friend bool operator==(const UsageEvent&, const UsageEvent&) = default;
};

/// Directed follow edges. No self-edges.
class SocialGraph {
 public:
  /// Returns false if the edge already existed. Throws std::invalid_argument on a self-edge.
  bool follow(const std::string& follower, const std::string& followee);
  bool follows(const std::string& follower, const std::string& followee) const;
  const std::set<std::string>& followees(const std::string& follower) const;
  std::size_t edge_count() const;

 private:
  std::map<std::string, std::set<std::string>> follows_;
};

/// A rejected record. `code()` is "MissingField" or "OutOfRange", `field()` the offending name.
class FieldError : public std::runtime_error {
 public:
  FieldError(std::string code, std::string field, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)), field_(std::move(field)) {}

  const std::string& code() const { return code_; }
  const std::string& field() const { return field_; }

 private:
  std::string code_;
  std::string field_;
};

/// Builds a NewsItem from raw JSON fields. Requires id, location{lat,lon} and created_at;
/// everything else is optional. Hashtags are lowercased, stripped of a leading '#',
/// sorted and deduplicated. Throws FieldError.
NewsItem validate_news(const nlohmann::json& raw);

/// Same contract for a usage event body. Unknown kinds are OutOfRange(kind).
UsageEvent validate_event(const nlohmann::json& raw);

nlohmann::json to_json(const GeoPoint& p);
nlohmann::json to_json(const NewsItem& item);
nlohmann::json to_json(const UsageEvent& event);

/// Lowercases ASCII and Latin-1 letters in a UTF-8 string.
std::string to_lower_utf8(std::string_view text);

}  // namespace hyperfeed
