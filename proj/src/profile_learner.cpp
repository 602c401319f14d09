#include "hyperfeed/profile_learner.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace hyperfeed {

void LearnerConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in (0, 1]");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
  for (double r : rewards) {
    if (!std::isfinite(r)) throw std::invalid_argument("rewards must be finite");
  }
}

double LearnerConfig::max_abs_reward() const {
  double m = 0.0;
  for (double r : rewards) m = std::max(m, std::abs(r));
  return m;
}

double QTable::get(const std::string& state, const std::string& action) const {
  const auto r = rows_.find(state);
  if (r == rows_.end()) return 0.0;
  const auto a = r->second.find(action);
  return a == r->second.end() ? 0.0 : a->second;
}

void QTable::set(const std::string& state, const std::string& action, double value) {
  rows_[state][action] = value;
}

const std::map<std::string, double>* QTable::row(const std::string& state) const {
  const auto r = rows_.find(state);
  return r == rows_.end() ? nullptr : &r->second;
}

std::size_t QTable::size() const {
  std::size_t n = 0;
  for (const auto& [_, actions] : rows_) n += actions.size();
  return n;
}

double reward_for(EventKind kind, const LearnerConfig& cfg) {
  return cfg.rewards[static_cast<std::size_t>(kind)];
}

std::optional<std::string> greedy_action(const QTable& qtable, const std::string& state) {
  const auto* row = qtable.row(state);
  if (row == nullptr || row->empty()) return std::nullopt;
  const std::string* best = nullptr;
  double best_q = 0.0;
  for (const auto& [action, q] : *row) {
    if (best == nullptr || q > best_q) {
      best = &action;
      best_q = q;
    }
  }
  return *best;
}

namespace {

double next_value(const QTable& q, const std::string& next_state, TdTarget target) {
  const auto* row = q.row(next_state);
  if (row == nullptr || row->empty()) return 0.0;
  if (target == TdTarget::kMax) {
    // Actions without an entry are worth 0, so the max over the action space is at least 0.
    double m = 0.0;
    for (const auto& [_, v] : *row) m = std::max(m, v);
    return m;
  }
  return q.get(next_state, *greedy_action(q, next_state));
}

}  // namespace

void record_event(UserProfile& profile, const UsageEvent& event, const NewsProfile& item, const LearnerConfig& cfg) {
  if (event.user_id != profile.user_id) throw UnknownUser(event.user_id);

  const std::string& action = item.dominant_topic;
  if (!action.empty()) {
    const std::string& state = profile.last_state;
    const double q = profile.qtable.get(state, action);
    const double q_next = next_value(profile.qtable, action, cfg.target);
    profile.qtable.set(state, action, q_update(q, reward_for(event.kind, cfg), q_next, cfg.alpha, cfg.gamma));
    if (is_consuming(event.kind)) profile.last_state = action;
  }
  if (event.kind == EventKind::kRead) profile.read_set.insert(event.news_id);
  if (!profile.last_update_at || *profile.last_update_at < event.at) profile.last_update_at = event.at;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const UserProfile& profile) {
  nlohmann::json q = nlohmann::json::object();
  for (const auto& [state, actions] : profile.qtable.rows()) {
    nlohmann::json row = nlohmann::json::object();
    for (const auto& [action, value] : actions) row[action] = value;
    q[state] = std::move(row);
  }
  nlohmann::json j = {{"user_id", profile.user_id},
                      {"qtable", std::move(q)},
                      {"short_term", profile.short_term},
                      {"long_term", profile.long_term},
                      {"read_set", profile.read_set},
                      {"last_state", profile.last_state}};
  j["last_update_at"] = profile.last_update_at ? nlohmann::json(profile.last_update_at->to_rfc3339()) : nlohmann::json(nullptr);
  return j;
}

UserProfile profile_from_json(const nlohmann::json& j) {
  UserProfile p(j.at("user_id").get<std::string>());
  for (const auto& [state, actions] : j.at("qtable").items()) {
    for (const auto& [action, value] : actions.items()) p.qtable.set(state, action, value.get<double>());
  }
  p.short_term = j.at("short_term").get<PreferenceMap>();
  p.long_term = j.at("long_term").get<PreferenceMap>();
  p.read_set = j.at("read_set").get<std::set<std::string>>();
  p.last_state = j.at("last_state").get<std::string>();
  if (const auto& t = j.at("last_update_at"); !t.is_null()) p.last_update_at = Timestamp::parse(t.get<std::string>());
  return p;
}

}  // namespace hyperfeed
