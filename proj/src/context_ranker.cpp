#include "hyperfeed/context_ranker.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace hyperfeed {

void RankWeights::validate() const {
  for (double w : {w_pref, w_social, w_recency, w_trend}) {
    if (!(w >= 0.0)) throw std::invalid_argument("factor weights must be non-negative");
  }
  if (std::abs(w_pref + w_social + w_recency + w_trend - 1.0) > 1e-9) {
    throw std::invalid_argument("factor weights must sum to 1");
  }
  if (!(lambda_per_hour > 0.0)) throw std::invalid_argument("lambda_per_hour must be > 0");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in [0, 1)");
  if (!(q_boost >= 0.0)) throw std::invalid_argument("q_boost must be >= 0");
  if (!(diversity_decay > 0.0 && diversity_decay <= 1.0)) throw std::invalid_argument("diversity_decay must be in (0, 1]");
  if (!(trend_window_hours > 0.0)) throw std::invalid_argument("trend_window_hours must be > 0");
}

double compose_score(const ScoreComponents& c, const RankWeights& w) {
  const double base = w.w_pref * c.pref + w.w_social * c.social + w.w_recency * c.recency + w.w_trend * c.trend;
  return c.q_boosted ? base * (1.0 + w.q_boost) : base;
}

double recency_weight(double age_hours, double lambda_per_hour) {
  return std::exp(-lambda_per_hour * std::max(age_hours, 0.0));
}

// ---------------------------------------------------------------------------
// Interaction log

namespace {

void insert_sorted(std::vector<std::int64_t>& v, std::int64_t t) {
  if (v.empty() || v.back() <= t) {
    v.push_back(t);
  } else {
    v.insert(std::upper_bound(v.begin(), v.end(), t), t);
  }
}

}  // namespace

void InteractionLog::add(const UsageEvent& event) {
  auto& a = items_[event.news_id];
  insert_sorted(a.event_times, event.at.millis());
  if (event.kind == EventKind::kRead) insert_sorted(a.read_times, event.at.millis());
  if (is_consuming(event.kind)) {
    auto [it, inserted] = a.first_engaged.emplace(event.user_id, event.at);
    if (!inserted && event.at < it->second) it->second = event.at;
  }
}

bool InteractionLog::engaged(const std::string& news_id, const std::string& user, Timestamp now) const {
  const auto it = items_.find(news_id);
  if (it == items_.end()) return false;
  const auto u = it->second.first_engaged.find(user);
  return u != it->second.first_engaged.end() && u->second <= now;
}

std::size_t InteractionLog::reads_between(const std::string& news_id, Timestamp from, Timestamp to) const {
  const auto it = items_.find(news_id);
  if (it == items_.end()) return 0;
  const auto& t = it->second.read_times;
  const auto lo = std::lower_bound(t.begin(), t.end(), from.millis());
  const auto hi = std::upper_bound(t.begin(), t.end(), to.millis());
  return hi > lo ? static_cast<std::size_t>(hi - lo) : 0;
}

std::vector<std::string> InteractionLog::touched_between(Timestamp since, Timestamp until) const {
  std::vector<std::string> out;
  for (const auto& [id, a] : items_) {
    const auto it = std::upper_bound(a.event_times.begin(), a.event_times.end(), since.millis());
    if (it != a.event_times.end() && *it <= until.millis()) out.push_back(id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Factors

double social_weight(const NewsProfile& item, const std::string& user_id, const SocialGraph& graph,
                     const InteractionLog& log, Timestamp now) {
  const auto& followees = graph.followees(user_id);
  if (followees.empty()) return 0.0;
  std::size_t engaged = 0;
  for (const auto& f : followees) {
    if (log.engaged(item.news_id, f, now)) ++engaged;
  }
  double so = static_cast<double>(engaged) / static_cast<double>(followees.size());
  if (!item.author_id.empty() && followees.contains(item.author_id)) so = std::max(so, 0.5);
  return so;
}

TrendTable trend_weights(const std::vector<std::string>& pool, const InteractionLog& log, Timestamp now,
                         double window_hours) {
  const Timestamp from = now - hours(window_hours);
  TrendTable table;
  table.reserve(pool.size());
  std::size_t max_reads = 0;
  std::vector<std::size_t> counts(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    counts[i] = log.reads_between(pool[i], from, now);
    max_reads = std::max(max_reads, counts[i]);
  }
  for (std::size_t i = 0; i < pool.size(); ++i) {
    table[pool[i]] = max_reads == 0 ? 0.0 : static_cast<double>(counts[i]) / static_cast<double>(max_reads);
  }
  return table;
}

double trend_weight(const std::string& news_id, const std::vector<std::string>& pool, const InteractionLog& log,
                    Timestamp now, double window_hours) {
  const auto table = trend_weights(pool, log, now, window_hours);
  const auto it = table.find(news_id);
  return it == table.end() ? 0.0 : it->second;
}

Recommendation score(const NewsProfile& item, const UserProfile& profile, const RankContext& ctx,
                     const RankWeights& w) {
  if (profile.read_set.contains(item.news_id)) throw AlreadyRead(item.news_id);
  Recommendation rec;
  rec.news_id = item.news_id;
  rec.dominant_topic = item.dominant_topic;
  auto& c = rec.components;
  c.pref = preference_score(item, profile, ctx.decay);
  c.social = ctx.graph && ctx.log ? social_weight(item, profile.user_id, *ctx.graph, *ctx.log, ctx.now) : 0.0;
  c.recency = recency_weight(hours_between(ctx.now, item.created_at), w.lambda_per_hour);
  if (ctx.trend) {
    if (const auto it = ctx.trend->find(item.news_id); it != ctx.trend->end()) c.trend = it->second;
  }
  const auto greedy = greedy_action(profile.qtable, profile.last_state);
  c.q_boosted = greedy && !item.dominant_topic.empty() && *greedy == item.dominant_topic;
  rec.score = compose_score(c, w);
  return rec;
}

// ---------------------------------------------------------------------------
// Diversity and exploration

std::vector<Recommendation> diversify(std::vector<Recommendation> scored, double decay) {
  auto better = [](double sa, const std::string& ia, double sb, const std::string& ib) {
    return sa > sb || (sa == sb && ia < ib);
  };
  // Per-topic queues in (score desc, id asc) order; a topic's head is its best candidate
  // because every member of a topic carries the same penalty.
  std::map<std::string, std::vector<Recommendation>> queues;
  for (auto& r : scored) queues[r.dominant_topic].push_back(std::move(r));
  struct Lane {
    std::vector<Recommendation> items;
    std::size_t next = 0;
    int selected = 0;
  };
  std::vector<Lane> lanes;
  lanes.reserve(queues.size());
  for (auto& [_, q] : queues) {
    std::sort(q.begin(), q.end(), [&](const Recommendation& a, const Recommendation& b) {
      return better(a.score, a.news_id, b.score, b.news_id);
    });
    lanes.push_back({std::move(q), 0, 0});
  }

  std::vector<Recommendation> out;
  out.reserve(scored.size());
  for (;;) {
    Lane* best = nullptr;
    double best_adjusted = 0.0;
    for (auto& lane : lanes) {
      if (lane.next == lane.items.size()) continue;
      const auto& head = lane.items[lane.next];
      const double adjusted = head.score * std::pow(decay, lane.selected);
      if (best == nullptr || better(adjusted, head.news_id, best_adjusted, best->items[best->next].news_id)) {
        best = &lane;
        best_adjusted = adjusted;
      }
    }
    if (best == nullptr) break;
    out.push_back(std::move(best->items[best->next++]));
    ++best->selected;
  }
  return out;
}

std::vector<Recommendation> select(const std::vector<Recommendation>& diversified, std::size_t k, double epsilon,
                                   Rng& rng) {
  std::vector<Recommendation> out;
  std::vector<bool> taken(diversified.size(), false);
  std::size_t remaining = diversified.size();
  std::size_t cursor = 0;
  while (out.size() < k && remaining > 0) {
    if (epsilon > 0.0 && rng.bernoulli(epsilon)) {
      // Uniform over the untaken candidates, in list order.
      std::uint64_t pick = rng.below(remaining);
      for (std::size_t i = 0; i < diversified.size(); ++i) {
        if (taken[i]) continue;
        if (pick-- == 0) {
          taken[i] = true;
          out.push_back(diversified[i]);
          out.back().components.explored = true;
          break;
        }
      }
    } else {
      while (taken[cursor]) ++cursor;
      taken[cursor] = true;
      out.push_back(diversified[cursor]);
    }
    --remaining;
  }
  return out;
}

nlohmann::json to_json(const Recommendation& rec) {
  const auto& c = rec.components;
  return {{"news_id", rec.news_id},
          {"dominant_topic", rec.dominant_topic},
          {"score", rec.score},
          {"components",
           {{"pref", c.pref},
            {"social", c.social},
            {"recency", c.recency},
            {"trend", c.trend},
            {"q_boosted", c.q_boosted},
            {"explored", c.explored}}}};
}

}  // namespace hyperfeed
