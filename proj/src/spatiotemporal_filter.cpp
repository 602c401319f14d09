#include "hyperfeed/spatiotemporal_filter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hyperfeed {

namespace {

constexpr double kPolarLatitude = 85.0;
constexpr double kDeg = 180.0 / std::numbers::pi;

}  // namespace

void FilterConfig::validate() const {
  if (!(radius_km > 0.0)) throw std::invalid_argument("radius_km must be > 0");
  if (!(max_age_hours > 0.0)) throw std::invalid_argument("max_age_hours must be > 0");
}

bool passes(const GeoPoint& item_location, Timestamp created_at, const GeoPoint& user_loc, Timestamp now,
            const FilterConfig& cfg) {
  const std::int64_t max_age_ms = static_cast<std::int64_t>(std::llround(cfg.max_age_hours * 3'600'000.0));
  if (now.millis() - created_at.millis() > max_age_ms) return false;
  return haversine_km(user_loc, item_location) <= cfg.radius_km + kBoundarySlackKm;
}

GeoGridIndex::GeoGridIndex(double cell_size_km) : cell_size_km_(cell_size_km) {
  if (!(cell_size_km > 0.0)) throw std::invalid_argument("cell_size_km must be > 0");
  // Inflate slightly so rounding in the quantization never shrinks a cell below the radius.
  const double effective = cell_size_km * (1.0 + 1e-9) + 2.0 * kBoundarySlackKm;
  row_height_deg_ = effective / kEarthRadiusKm * kDeg;
}

std::int64_t GeoGridIndex::row_of(double lat) const {
  return static_cast<std::int64_t>(std::floor((lat + 90.0) / row_height_deg_));
}

std::pair<std::int64_t, double> GeoGridIndex::columns_for_row(std::int64_t row) const {
  const double lo = -90.0 + static_cast<double>(row - 1) * row_height_deg_;
  const double hi = -90.0 + static_cast<double>(row + 2) * row_height_deg_;
  const double max_abs = std::max(std::abs(lo), std::abs(hi));
  if (max_abs >= kPolarLatitude) return {0, 0.0};
  const double c_min = std::cos(max_abs / kDeg);
  const double effective = cell_size_km_ * (1.0 + 1e-9) + 2.0 * kBoundarySlackKm;
  const double ratio = std::sin(effective / (2.0 * kEarthRadiusKm)) / c_min;
  if (ratio >= 1.0) return {0, 0.0};
  const double width = 2.0 * std::asin(ratio) * kDeg * (1.0 + 1e-9);
  const auto count = static_cast<std::int64_t>(std::floor(360.0 / width));
  if (count < 3) return {0, 0.0};
  return {count, 360.0 / static_cast<double>(count)};
}

std::int64_t GeoGridIndex::column_of(double lon, double width_deg, std::int64_t count) const {
  auto col = static_cast<std::int64_t>(std::floor((lon + 180.0) / width_deg));
  col %= count;
  if (col < 0) col += count;
  return col;
}

std::int64_t GeoGridIndex::key_for(const GeoPoint& p) const {
  const std::int64_t row = row_of(p.lat);
  const auto [count, width] = columns_for_row(row);
  if (count == 0) return kPolarKey;
  return key(row, column_of(p.lon, width, count));
}

void GeoGridIndex::insert(const std::string& id, const GeoPoint& location, Timestamp created_at) {
  if (locator_.contains(id)) throw DuplicateId(id);
  const std::int64_t k = key_for(location);
  if (k == kPolarKey) {
    polar_.push_back({id, location, created_at});
  } else {
    cells_[k].push_back({id, location, created_at});
  }
  locator_.emplace(id, k);
}

bool GeoGridIndex::erase(const std::string& id) {
  const auto it = locator_.find(id);
  if (it == locator_.end()) return false;
  auto& bucket = it->second == kPolarKey ? polar_ : cells_[it->second];
  const auto pos = std::find_if(bucket.begin(), bucket.end(), [&](const Entry& e) { return e.id == id; });
  if (pos != bucket.end()) {
    *pos = std::move(bucket.back());
    bucket.pop_back();
  }
  if (bucket.empty() && it->second != kPolarKey) cells_.erase(it->second);
  locator_.erase(it);
  return true;
}

std::size_t GeoGridIndex::evict_older_than(Timestamp cutoff) {
  std::size_t removed = 0;
  auto sweep = [&](std::vector<Entry>& bucket) {
    const auto tail = std::remove_if(bucket.begin(), bucket.end(), [&](const Entry& e) {
      if (e.created_at < cutoff) {
        locator_.erase(e.id);
        return true;
      }
      return false;
    });
    removed += static_cast<std::size_t>(bucket.end() - tail);
    bucket.erase(tail, bucket.end());
  };
  for (auto it = cells_.begin(); it != cells_.end();) {
    sweep(it->second);
    it = it->second.empty() ? cells_.erase(it) : std::next(it);
  }
  sweep(polar_);
  return removed;
}

std::vector<std::string> GeoGridIndex::scan(const GeoPoint& user_loc, Timestamp now, const FilterConfig& cfg) const {
  std::vector<std::string> out;
  for_each([&](const Entry& e) {
    if (passes(e.location, e.created_at, user_loc, now, cfg)) out.push_back(e.id);
  });
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> GeoGridIndex::query(const GeoPoint& user_loc, Timestamp now, const FilterConfig& cfg) const {
  if (cfg.radius_km != cell_size_km_) throw StaleIndex(cell_size_km_, cfg.radius_km);
  const std::int64_t user_row = row_of(user_loc.lat);
  if (columns_for_row(user_row).first == 0) return scan(user_loc, now, cfg);

  std::vector<std::string> out;
  auto visit = [&](const std::vector<Entry>& bucket) {
    for (const auto& e : bucket) {
      if (passes(e.location, e.created_at, user_loc, now, cfg)) out.push_back(e.id);
    }
  };
  for (std::int64_t row = user_row - 1; row <= user_row + 1; ++row) {
    const auto [count, width] = columns_for_row(row);
    if (count == 0) continue;  // covered by the polar list
    const std::int64_t col = column_of(user_loc.lon, width, count);
    for (std::int64_t dc = -1; dc <= 1; ++dc) {
      const std::int64_t c = ((col + dc) % count + count) % count;
      if (const auto it = cells_.find(key(row, c)); it != cells_.end()) visit(it->second);
    }
  }
  visit(polar_);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace hyperfeed
