#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "hyperfeed/content_analyzer.hpp"
#include "hyperfeed/core.hpp"

namespace hyperfeed {

struct FilterConfig {
  double radius_km = 5.0;
  double max_age_hours = 24.0;

  void validate() const;
};

/// Slack on the distance comparison so that a point placed at exactly radius_km is not lost
/// to rounding in the trigonometry (one micrometre).
inline constexpr double kBoundarySlackKm = 1e-9;

/// Distance and age both inclusive. Items from the future (negative age) pass the age test.
bool passes(const GeoPoint& item_location, Timestamp created_at, const GeoPoint& user_loc, Timestamp now,
            const FilterConfig& cfg);

inline bool passes(const NewsProfile& item, const GeoPoint& user_loc, Timestamp now, const FilterConfig& cfg) {
  return passes(item.location, item.created_at, user_loc, now, cfg);
}

class StaleIndex : public std::logic_error {
 public:
  StaleIndex(double index_km, double query_km)
      : std::logic_error("index built for radius " + std::to_string(index_km) + " km, queried with " +
                         std::to_string(query_km) + " km") {}
};

class DuplicateId : public std::runtime_error {
 public:
  explicit DuplicateId(const std::string& id) : std::runtime_error("duplicate news id '" + id + "'"), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

/// Grid over latitude bands whose cells are at least `cell_size_km` wide in every direction,
/// so that every point within that distance of a query lies in the surrounding 3x3 block.
/// Column width is chosen per latitude band from the poleward edge of the band and its
/// neighbours. Items whose band reaches past 85 degrees live in a separate list that is
/// always scanned, and queries from that region scan everything.
class GeoGridIndex {
 public:
  struct Entry {
    std::string id;
    GeoPoint location;
    Timestamp created_at;
  };

  explicit GeoGridIndex(double cell_size_km = 5.0);

  double cell_size_km() const { return cell_size_km_; }
  std::size_t size() const { return locator_.size(); }
  bool contains(const std::string& id) const { return locator_.contains(id); }

  /// Throws DuplicateId.
  void insert(const std::string& id, const GeoPoint& location, Timestamp created_at);
  void insert(const NewsProfile& item) { insert(item.news_id, item.location, item.created_at); }
  bool erase(const std::string& id);
  /// Removes every entry with created_at < cutoff; returns how many were removed.
  std::size_t evict_older_than(Timestamp cutoff);

  /// Ids passing the filter, sorted. Throws StaleIndex if cfg.radius_km != cell_size_km().
  std::vector<std::string> query(const GeoPoint& user_loc, Timestamp now, const FilterConfig& cfg) const;

  /// Same result by scanning every entry. Used for polar queries and as a reference.
  std::vector<std::string> scan(const GeoPoint& user_loc, Timestamp now, const FilterConfig& cfg) const;

  template <typename F>
  void for_each(F&& f) const {
    for (const auto& [_, cell] : cells_) {
      for (const auto& e : cell) f(e);
    }
    for (const auto& e : polar_) f(e);
  }

 private:
  static constexpr std::int64_t kPolarKey = INT64_MIN;

  std::int64_t row_of(double lat) const;
  // Column count and width (degrees) for a band row; count 0 means the band is polar.
  std::pair<std::int64_t, double> columns_for_row(std::int64_t row) const;
  std::int64_t column_of(double lon, double width_deg, std::int64_t count) const;
  static std::int64_t key(std::int64_t row, std::int64_t col) { return (row << 32) ^ (col & 0xffffffff); }
  std::int64_t key_for(const GeoPoint& p) const;

  double cell_size_km_;
  double row_height_deg_;
  std::unordered_map<std::int64_t, std::vector<Entry>> cells_;
  std::vector<Entry> polar_;
  std::unordered_map<std::string, std::int64_t> locator_;
};

}  // namespace hyperfeed
