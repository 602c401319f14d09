#include "hyperfeed/change_detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hyperfeed {

void DecayConfig::validate() const {
  if (!(short_half_life_hours > 0.0 && short_half_life_hours < long_half_life_hours)) {
    throw std::invalid_argument("need 0 < short_half_life_hours < long_half_life_hours");
  }
  if (!(shift_threshold > 0.0 && shift_threshold <= 2.0)) throw std::invalid_argument("shift_threshold must be in (0, 2]");
  if (!(boost_factor >= 1.0)) throw std::invalid_argument("boost_factor must be >= 1");
}

PreferenceMap bump(PreferenceMap prefs, const std::string& topic, double event_weight, double dt_hours,
                   double half_life_hours) {
  if (dt_hours > 0.0) {
    const double decay = std::exp2(-dt_hours / half_life_hours);
    for (auto& [_, w] : prefs) w *= decay;
  }
  if (event_weight > 0.0 && !topic.empty()) prefs[topic] += event_weight;
  return prefs;
}

PreferenceMap normalize(const PreferenceMap& prefs) {
  double total = 0.0;
  for (const auto& [_, w] : prefs) total += w;
  if (!(total > 0.0)) return {};
  PreferenceMap out;
  for (const auto& [k, w] : prefs) out.emplace(k, w / total);
  return out;
}

double l1_distance(const PreferenceMap& a, const PreferenceMap& b) {
  double d = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      d += std::abs(ia->second);
      ++ia;
    } else if (ia == a.end() || ib->first < ia->first) {
      d += std::abs(ib->second);
      ++ib;
    } else {
      d += std::abs(ia->second - ib->second);
      ++ia;
      ++ib;
    }
  }
  return d;
}

std::optional<ShiftReport> detect_shift(const UserProfile& profile, const DecayConfig& cfg) {
  const PreferenceMap s = normalize(profile.short_term);
  const PreferenceMap l = normalize(profile.long_term);
  if (s.empty() || l.empty()) return std::nullopt;
  const double d = l1_distance(s, l);
  if (!(d > cfg.shift_threshold)) return std::nullopt;
  ShiftReport report{profile.user_id, d, {}};
  for (const auto& [topic, ws] : s) {
    const auto it = l.find(topic);
    const double wl = it == l.end() ? 0.0 : it->second;
    if (ws - wl > cfg.shift_threshold / 2.0) report.rising_topics.push_back(topic);
  }
  return report;
}

void observe(UserProfile& profile, const UsageEvent& event, const NewsProfile& item, const LearnerConfig& learner,
             const DecayConfig& cfg) {
  const double dt = profile.last_update_at ? std::max(0.0, hours_between(event.at, *profile.last_update_at)) : 0.0;
  const double weight = std::max(reward_for(event.kind, learner), 0.0);
  profile.short_term = bump(std::move(profile.short_term), item.dominant_topic, weight, dt, cfg.short_half_life_hours);
  profile.long_term = bump(std::move(profile.long_term), item.dominant_topic, weight, dt, cfg.long_half_life_hours);
}

PreferenceMap preference_blend(const UserProfile& profile, const DecayConfig& cfg) {
  const PreferenceMap s = normalize(profile.short_term);
  const PreferenceMap l = normalize(profile.long_term);
  PreferenceMap blend;
  for (const auto& [k, w] : s) blend[k] += 0.5 * w;
  for (const auto& [k, w] : l) blend[k] += 0.5 * w;
  if (blend.empty()) return blend;
  if (const auto shift = detect_shift(profile, cfg)) {
    for (const auto& topic : shift->rising_topics) {
      if (auto it = blend.find(topic); it != blend.end()) it->second *= cfg.boost_factor;
    }
  }
  // Only one map populated leaves a half-mass blend; renormalizing covers that and the boost.
  return normalize(blend);
}

double preference_score(const NewsProfile& item, const UserProfile& profile, const DecayConfig& cfg) {
  const PreferenceMap blend = preference_blend(profile, cfg);
  if (blend.empty()) return 0.0;
  double p = 0.0;
  if (item.topic_vector.empty()) {
    if (const auto it = blend.find(item.category); it != blend.end()) p = it->second;
  } else {
    for (const auto& [topic, w] : item.topic_vector) {
      if (const auto it = blend.find(topic); it != blend.end()) p += w * it->second;
    }
  }
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace hyperfeed
