#pragma once

#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hyperfeed/change_detector.hpp"
#include "hyperfeed/content_analyzer.hpp"
#include "hyperfeed/core.hpp"
#include "hyperfeed/profile_learner.hpp"
#include "hyperfeed/rng.hpp"

namespace hyperfeed {

struct RankWeights {
  double w_pref = 0.4;
  double w_social = 0.2;
  double w_recency = 0.3;
  double w_trend = 0.1;
  double lambda_per_hour = std::numbers::ln2 / 6.0;
  double epsilon = 0.1;
  double q_boost = 0.25;
  double diversity_decay = 0.7;
  double trend_window_hours = 2.0;

  void validate() const;
};

struct ScoreComponents {
  double pref = 0.0;
  double social = 0.0;
  double recency = 0.0;
  double trend = 0.0;
  bool q_boosted = false;
  bool explored = false;
};

struct Recommendation {
  std::string news_id;
  std::string dominant_topic;
  double score = 0.0;
  ScoreComponents components;
};

/// The one place a score is assembled from its parts.
double compose_score(const ScoreComponents& c, const RankWeights& w);

/// exp(-lambda * age); negative ages count as 0.
double recency_weight(double age_hours, double lambda_per_hour);

/// Who engaged with which item, and when items were read. Feeds the social and trend factors.
class InteractionLog {
 public:
  void add(const UsageEvent& event);
  /// True if `user` read, liked or commented on `news_id` at or before `now`.
  bool engaged(const std::string& news_id, const std::string& user, Timestamp now) const;
  /// Reads of `news_id` with from <= at <= to.
  std::size_t reads_between(const std::string& news_id, Timestamp from, Timestamp to) const;
  /// Items with at least one event in (since, until].
  std::vector<std::string> touched_between(Timestamp since, Timestamp until) const;

 private:
  struct Activity {
    std::unordered_map<std::string, Timestamp> first_engaged;
    std::vector<std::int64_t> read_times;  // sorted
    std::vector<std::int64_t> event_times;  // sorted, all kinds
  };
  std::unordered_map<std::string, Activity> items_;
};

double social_weight(const NewsProfile& item, const std::string& user_id, const SocialGraph& graph,
                     const InteractionLog& log, Timestamp now);

using TrendTable = std::unordered_map<std::string, double>;

/// Window read counts over the pool, each divided by the pool maximum (all zero if no reads).
TrendTable trend_weights(const std::vector<std::string>& pool, const InteractionLog& log, Timestamp now,
                         double window_hours);

double trend_weight(const std::string& news_id, const std::vector<std::string>& pool, const InteractionLog& log,
                    Timestamp now, double window_hours);

struct RankContext {
  Timestamp now;
  const SocialGraph* graph = nullptr;
  const InteractionLog* log = nullptr;
  const TrendTable* trend = nullptr;  // missing entries count as 0
  DecayConfig decay;
};

class AlreadyRead : public std::logic_error {
 public:
  explicit AlreadyRead(const std::string& id) : std::logic_error("item '" + id + "' is in the user's read set") {}
};

/// Scores an item that already passed the filter. Throws AlreadyRead.
Recommendation score(const NewsProfile& item, const UserProfile& profile, const RankContext& ctx,
                     const RankWeights& w);

/// Greedy category-diversity re-ranking: repeatedly takes the candidate maximizing
/// score * decay^(already selected items with the same topic); ties to the smaller id.
std::vector<Recommendation> diversify(std::vector<Recommendation> scored, double decay);

/// Fills up to k slots. Each slot explores with probability epsilon (uniform pick among the
/// candidates not yet chosen, marked explored) or else takes the next diversified candidate.
/// With epsilon == 0 no random numbers are drawn.
std::vector<Recommendation> select(const std::vector<Recommendation>& diversified, std::size_t k, double epsilon,
                                   Rng& rng);

nlohmann::json to_json(const Recommendation& rec);

}  // namespace hyperfeed
