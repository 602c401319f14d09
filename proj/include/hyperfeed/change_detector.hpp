#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hyperfeed/content_analyzer.hpp"
#include "hyperfeed/profile_learner.hpp"

namespace hyperfeed {

struct DecayConfig {
  double short_half_life_hours = 24.0;
  double long_half_life_hours = 720.0;
  double shift_threshold = 0.4;
  double boost_factor = 1.5;

  void validate() const;
};

struct ShiftReport {
  std::string user_id;
  double l1_distance = 0.0;
  std::vector<std::string> rising_topics;  // sorted
};

/// Decays every weight by 2^(-dt/half_life), then adds `event_weight` to `topic`.
PreferenceMap bump(PreferenceMap prefs, const std::string& topic, double event_weight, double dt_hours,
                   double half_life_hours);

/// Scales a map to sum 1. Empty or zero-total maps come back empty.
PreferenceMap normalize(const PreferenceMap& prefs);

double l1_distance(const PreferenceMap& a, const PreferenceMap& b);

std::optional<ShiftReport> detect_shift(const UserProfile& profile, const DecayConfig& cfg);

/// Folds one event into both preference accumulators. Uses profile.last_update_at as the
/// previous instant, so it must run before record_event advances that field.
void observe(UserProfile& profile, const UsageEvent& event, const NewsProfile& item, const LearnerConfig& learner,
             const DecayConfig& cfg);

/// Item topics (or a unit vector on its category) against the blended short/long preference.
double preference_score(const NewsProfile& item, const UserProfile& profile, const DecayConfig& cfg);

/// Blend used by preference_score, exposed for inspection.
PreferenceMap preference_blend(const UserProfile& profile, const DecayConfig& cfg);

}  // namespace hyperfeed
