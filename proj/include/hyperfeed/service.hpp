#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hyperfeed/change_detector.hpp"
#include "hyperfeed/content_analyzer.hpp"
#include "hyperfeed/context_ranker.hpp"
#include "hyperfeed/core.hpp"
#include "hyperfeed/pipeline_store.hpp"
#include "hyperfeed/profile_learner.hpp"
#include "hyperfeed/spatiotemporal_filter.hpp"

namespace hyperfeed {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir;  // empty: memory only
  std::filesystem::path lexicon;   // empty: built-in lexicon
  bool test_mode = false;          // allows the X-Hyperfeed-Now header; fixed default seed
  std::optional<std::uint64_t> seed;
  FilterConfig filter;
  RankWeights weights;
  LearnerConfig learner;
  DecayConfig decay;
  std::size_t top_k = 20;
  std::size_t batch_workers = 1;

  void validate() const;
};

/// Reads a JSON config (every key optional). Throws std::invalid_argument / nlohmann errors.
ServiceConfig config_from_json(const nlohmann::json& j);
ServiceConfig load_config(const std::filesystem::path& path);
/// Applies HYPERFEED_RADIUS_KM, HYPERFEED_MAX_AGE_HOURS, HYPERFEED_ALPHA, HYPERFEED_GAMMA,
/// HYPERFEED_EPSILON and HYPERFEED_SEED from the environment.
void apply_env_overrides(ServiceConfig& cfg);
nlohmann::json to_json(const ServiceConfig& cfg);

/// Error surfaced to API clients as {error: code, field?: name, message}.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, std::string code, const std::string& message, std::string field = {})
      : std::runtime_error(message), status_(status), code_(std::move(code)), field_(std::move(field)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  const std::string& field() const { return field_; }
  nlohmann::json body() const;

 private:
  int status_;
  std::string code_;
  std::string field_;
};

struct RecommendQuery {
  std::string user_id;
  GeoPoint location;
  std::size_t limit = 20;
  std::optional<std::uint64_t> seed;
  std::optional<Timestamp> now;  // the HTTP layer only forwards this in test mode
};

struct RecommendResult {
  Timestamp now;
  std::uint64_t seed = 0;
  std::vector<Recommendation> items;
};

/// In-memory recommendation service: ingestion, per-user learning, and the online query
/// path filter -> merge -> score -> diversify -> select. Thread-safe. Events for one user
/// are applied in arrival order; different users update concurrently.
class Engine {
 public:
  explicit Engine(ServiceConfig cfg, std::shared_ptr<const Clock> clock = nullptr);
  ~Engine();

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const ServiceConfig& config() const { return cfg_; }
  const TopicLexicon& lexicon() const { return lexicon_; }
  Timestamp now() const { return clock_->now(); }

  /// Validates, profiles, persists and indexes. Throws ApiError 400 / 409.
  std::string post_news(const nlohmann::json& body);
  std::string add_news(const NewsItem& item);

  /// Throws ApiError 400 (bad body or kind) / 404 (unknown news).
  void post_event(const nlohmann::json& body);
  void add_event(const UsageEvent& event);

  /// Idempotent. Returns true if the edge is new. Throws ApiError 400 on a self-follow.
  bool follow(const std::string& user, const std::string& followee);

  std::optional<UserProfile> profile(const std::string& user) const;
  /// Profile plus derived views (greedy action, preference blend, active shift). nullopt if unknown.
  std::optional<nlohmann::json> profile_json(const std::string& user) const;
  std::optional<NewsProfile> news(const std::string& id) const;
  std::size_t news_count() const;
  std::size_t user_count() const;

  /// Throws ApiError 400 on bad coordinates or limit.
  RecommendResult recommend(const RecommendQuery& query) const;
  nlohmann::json recommendations_json(const RecommendResult& result) const;

  /// Rebuilds both batch tables from current state as of `now` (default: clock), swaps the
  /// in-memory base table used by the online merge, and writes the CSVs when a data dir is set.
  BatchSummary run_batch(std::optional<Timestamp> now = std::nullopt);

  /// Appends a snapshot of every profile to profiles.jsonl (no-op without a data dir).
  std::size_t checkpoint_profiles() const;

  /// Drops items that can no longer pass the age filter at the current clock.
  std::size_t evict_expired();

 private:
  struct UserSlot {
    mutable std::mutex mu;
    UserProfile profile;
    explicit UserSlot(std::string id) : profile(std::move(id)) {}
  };

  struct BatchSnapshot {
    Timestamp as_of;
    std::size_t event_watermark = 0;  // events_ index at batch time
    std::map<std::string, std::uint64_t> follow_versions;
    std::unordered_map<std::string, std::vector<BaseScoreRow>> rows_by_user;
  };

  UserSlot& slot_for(const std::string& user);
  const UserSlot* find_slot(const std::string& user) const;
  void restore();

  ServiceConfig cfg_;
  TopicLexicon lexicon_;
  std::shared_ptr<const Clock> clock_;
  std::unique_ptr<Store> store_;

  mutable std::shared_mutex state_mu_;  // guards everything below up to users_mu_
  std::unordered_map<std::string, NewsProfile> news_;
  GeoGridIndex index_;
  InteractionLog log_;
  SocialGraph graph_;
  std::map<std::string, std::uint64_t> follow_versions_;  // per follower, bumped on each new edge
  std::vector<UsageEvent> events_;
  std::shared_ptr<const BatchSnapshot> batch_;

  mutable std::mutex users_mu_;
  std::unordered_map<std::string, std::unique_ptr<UserSlot>> users_;

  mutable std::atomic<std::uint64_t> query_counter_{0};
};

}  // namespace hyperfeed
