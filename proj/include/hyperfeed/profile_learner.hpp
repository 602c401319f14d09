#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "hyperfeed/content_analyzer.hpp"
#include "hyperfeed/core.hpp"

namespace hyperfeed {

/// State label every profile starts in. Topic labels are lowercase so this never collides.
inline const std::string kStartState = "START";

/// Which value of the next state enters the temporal-difference target.
enum class TdTarget {
  kAsWritten,  // gamma * Q(s', a') with a' the greedy action at s'
  kMax,        // gamma * max_a Q(s', a), unstored actions counting 0
};

struct LearnerConfig {
  double alpha = 0.1;
  double gamma = 0.9;
  // Indexed by EventKind: read, like, comment, impression, dismiss.
  std::array<double, kEventKindCount> rewards{1.0, 2.0, 3.0, 0.0, -0.5};
  TdTarget target = TdTarget::kAsWritten;

  /// Throws std::invalid_argument unless alpha in (0,1], gamma in [0,1) and rewards finite.
  void validate() const;
  double max_abs_reward() const;
};

/// Sparse (state, action) -> value table. Absent entries read as 0.
class QTable {
 public:
  double get(const std::string& state, const std::string& action) const;
  void set(const std::string& state, const std::string& action, double value);
  /// Stored actions at `state`, or nullptr.
  const std::map<std::string, double>* row(const std::string& state) const;
  const std::map<std::string, std::map<std::string, double>>& rows() const { return rows_; }
  std::size_t size() const;

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  std::map<std::string, std::map<std::string, double>> rows_;
};

using PreferenceMap = std::map<std::string, double>;

struct UserProfile {
  std::string user_id;
  QTable qtable;
  PreferenceMap short_term;
  PreferenceMap long_term;
  std::set<std::string> read_set;
  std::string last_state = kStartState;
  std::optional<Timestamp> last_update_at;

  explicit UserProfile(std::string id = {}) : user_id(std::move(id)) {}
  bool empty() const { return qtable.size() == 0 && short_term.empty() && long_term.empty() && read_set.empty(); }
  friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

class UnknownUser : public std::runtime_error {
 public:
  explicit UnknownUser(const std::string& user) : std::runtime_error("unknown user '" + user + "'") {}
};

double reward_for(EventKind kind, const LearnerConfig& cfg);

/// q + alpha * (reward + gamma * q_next - q).
inline double q_update(double q, double reward, double q_next, double alpha, double gamma) {
  return q + alpha * (reward + gamma * q_next - q);
}

/// Highest-valued stored action at `state`, ties to the smallest label.
std::optional<std::string> greedy_action(const QTable& qtable, const std::string& state);

/// Applies one usage event to the profile's Q-table, read set and state.
/// Consuming kinds (read/like/comment) update Q(last_state, topic) and move to `topic`;
/// impression and dismiss update the same entry without moving. Throws UnknownUser if the
/// event belongs to another user.
void record_event(UserProfile& profile, const UsageEvent& event, const NewsProfile& item, const LearnerConfig& cfg);

nlohmann::json to_json(const UserProfile& profile);
UserProfile profile_from_json(const nlohmann::json& j);

}  // namespace hyperfeed
