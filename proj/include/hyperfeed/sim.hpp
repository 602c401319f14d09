#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hyperfeed/core.hpp"
#include "hyperfeed/service.hpp"

namespace hyperfeed {

/// A synthetic world: users with known topic tastes reading a hyper-local feed.
struct SimScenario {
  std::size_t n_users = 10;
  std::size_t n_items = 200;
  GeoPoint box_min{63.415, 10.36};  // about 3 km square in central Trondheim
  GeoPoint box_max{63.442, 10.42};
  std::vector<std::string> topics{"traffic", "food", "events"};
  /// Per-user distribution over `topics`. Empty: each user gets `default_taste` over a
  /// seeded random permutation of the topics.
  std::vector<std::vector<double>> ground_truth;
  std::vector<double> default_taste{0.8, 0.15, 0.05};
  std::size_t steps = 100;
  std::size_t k = 10;
  std::uint64_t seed = 1;
  std::int64_t step_seconds = 60;
  Timestamp start = Timestamp::parse("2024-06-01T08:00:00Z");
  /// Every read publishes a fresh item on the same topic, so the unread pool keeps its topic mix.
  bool replenish = true;
  ServiceConfig service;  // filter/rank/learner/decay settings; test_mode is forced on
  std::optional<std::filesystem::path> snapshot_dir;  // persist and run a final batch here

  /// Throws std::invalid_argument.
  void validate() const;
};

struct StepMetric {
  std::size_t step = 0;
  double precision_at_k = 0.0;  // share of shown items on the user's top topic, averaged over users
  double greedy_accuracy = 0.0;  // share of users whose greedy action at their current state is their top topic
};

struct UserOutcome {
  std::string user_id;
  std::string top_topic;
  std::map<std::string, std::string> greedy_by_state;  // every state row in the Q-table
  bool all_states_correct = false;      // every row, START included
  bool entered_states_correct = false;  // rows other than START
};

struct WindowMetric {
  std::size_t window = 0;
  std::size_t reads = 0;
  std::size_t hits = 0;
  double hit_rate = 0.0;
};

struct SimMetrics {
  std::vector<StepMetric> steps;
  std::vector<WindowMetric> windows;
  std::vector<UserOutcome> users;
  std::vector<std::filesystem::path> table_paths;
  std::size_t events = 0;
  std::size_t non_recommended_events = 0;  // harness integrity counter; always 0
};

SimMetrics simulate(const SimScenario& scenario);

struct ReplayOptions {
  std::filesystem::path log;
  std::filesystem::path news;  // default: news.jsonl next to the log
  std::size_t k = 10;
  std::size_t window = 20;  // read events per metrics window
  ServiceConfig service;
};

/// Feeds a historical events.jsonl in file order and measures, for each read, whether the
/// item was in the top-k computed just before it (exploration off). Throws CorruptRecord.
SimMetrics replay(const ReplayOptions& options);

void write_steps_csv(std::ostream& out, const SimMetrics& m);
void write_windows_csv(std::ostream& out, const SimMetrics& m);

}  // namespace hyperfeed
