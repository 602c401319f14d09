#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hyperfeed/change_detector.hpp"
#include "hyperfeed/content_analyzer.hpp"
#include "hyperfeed/context_ranker.hpp"
#include "hyperfeed/core.hpp"
#include "hyperfeed/profile_learner.hpp"
#include "hyperfeed/spatiotemporal_filter.hpp"

namespace hyperfeed {

class StorageFull : public std::runtime_error {
 public:
  explicit StorageFull(const std::string& path) : std::runtime_error("cannot append to " + path) {}
};

class CorruptRecord : public std::runtime_error {
 public:
  CorruptRecord(std::string path, std::size_t line, const std::string& why)
      : std::runtime_error(path + ":" + std::to_string(line) + ": corrupt record: " + why),
        path_(std::move(path)),
        line_(line) {}
  const std::string& path() const { return path_; }
  std::size_t line() const { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

struct FollowEdge {
  std::string follower;
  std::string followee;
};

/// Files under one data directory. JSONL files are append-only; the CSVs are rewritten by
/// every batch run.
struct StoreLayout {
  std::filesystem::path data_dir;

  std::filesystem::path news() const { return data_dir / "news.jsonl"; }
  std::filesystem::path events() const { return data_dir / "events.jsonl"; }
  std::filesystem::path profiles() const { return data_dir / "profiles.jsonl"; }
  std::filesystem::path follows() const { return data_dir / "follows.jsonl"; }
  std::filesystem::path similarity_csv() const { return data_dir / "news_similarity.csv"; }
  std::filesystem::path base_csv() const { return data_dir / "user_news_base.csv"; }
};

/// Append-only JSONL writer. Offsets are byte positions of each record's first byte.
class AppendLog {
 public:
  explicit AppendLog(std::filesystem::path path);
  std::uint64_t append(const nlohmann::json& record);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
  std::uint64_t end_ = 0;
};

class Store {
 public:
  explicit Store(StoreLayout layout);

  const StoreLayout& layout() const { return layout_; }
  std::uint64_t append_news(const NewsItem& item);
  std::uint64_t append_event(const UsageEvent& event);
  std::uint64_t append_follow(const FollowEdge& edge);
  std::uint64_t append_profile(const UserProfile& profile);

 private:
  StoreLayout layout_;
  AppendLog news_;
  AppendLog events_;
  AppendLog follows_;
  AppendLog profiles_;
};

/// Feeds every record to `sink` in file order. A missing file is empty. A line that fails to
/// parse (including a truncated final line) throws CorruptRecord after all earlier records
/// were delivered.
void replay_jsonl(const std::filesystem::path& path, const std::function<void(const nlohmann::json&)>& sink);
void replay_news(const std::filesystem::path& path, const std::function<void(NewsItem)>& sink);
void replay_events(const std::filesystem::path& path, const std::function<void(UsageEvent)>& sink);
void replay_follows(const std::filesystem::path& path, const std::function<void(FollowEdge)>& sink);
/// Last snapshot per user wins.
std::map<std::string, UserProfile> load_profiles(const std::filesystem::path& path);

/// Runs the learner and the preference accumulators for one event, in that order of
/// dependence: preferences decay from the previous update instant, which record_event then advances.
void apply_event(UserProfile& profile, const UsageEvent& event, const NewsProfile& item, const LearnerConfig& learner,
                 const DecayConfig& decay);

/// Everything a batch run or a server start needs, rebuilt from the JSONL files.
struct StoreSnapshot {
  std::map<std::string, NewsProfile> news;
  std::map<std::string, UserProfile> users;
  SocialGraph graph;
  InteractionLog log;
  std::vector<UsageEvent> events;
  std::size_t skipped_events = 0;  // events whose news id is not in the store
  std::optional<Timestamp> latest;  // latest news created_at or event time
};

StoreSnapshot load_snapshot(const StoreLayout& layout, const TopicLexicon& lexicon, const LearnerConfig& learner,
                            const DecayConfig& decay);

// ---------------------------------------------------------------------------
// Batch tables

struct SimilarityRow {
  std::string news_id;
  std::string similar_news;
  double similarity_score = 0.0;
  friend bool operator==(const SimilarityRow&, const SimilarityRow&) = default;
};

struct BaseScoreRow {
  std::string user_id;
  std::string news_id;
  double recommendation_score = 0.0;
  ScoreComponents components;  // kept in memory for the online merge; not persisted
};

/// For each item, its top_k most similar other items (score > 0), sorted by score desc then id
/// asc, comparing scores at the six-decimal output precision. Items are processed in id order and split into `workers` contiguous partitions;
/// the output does not depend on the worker count.
std::vector<SimilarityRow> build_news_similarity(std::vector<NewsProfile> profiles, std::size_t top_k,
                                                 std::size_t workers = 1, const SimilarityWeights& weights = {});

struct BatchContext {
  Timestamp now;
  const SocialGraph* graph = nullptr;
  const InteractionLog* log = nullptr;
  FilterConfig filter;
  RankWeights weights;
  DecayConfig decay;
};

/// Scores every (user, unexpired unread item) pair without exploration or diversification.
/// Unexpired means created_at <= now and age <= filter.max_age_hours. Rows sorted by user then news id.
std::vector<BaseScoreRow> build_user_news_base(const std::vector<const UserProfile*>& users,
                                               const std::vector<const NewsProfile*>& items, const BatchContext& ctx);

/// Writes `news_id,similar_news,similarity_score` with six-decimal scores and RFC 4180 quoting.
void write_similarity_csv(std::ostream& out, const std::vector<SimilarityRow>& rows);
void write_base_csv(std::ostream& out, const std::vector<BaseScoreRow>& rows);
std::string csv_field(const std::string& field);
/// Writes to `path`.tmp, then renames over `path`, so readers never see a partial file.
void write_atomically(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer);

struct BatchSummary {
  std::size_t similarity_rows = 0;
  std::size_t base_rows = 0;
  Timestamp as_of;
};

/// Offline job: replays `data_dir`, writes both CSVs into `out_dir`. `now` defaults to the
/// latest timestamp in the store so reruns are byte-identical.
BatchSummary run_batch(const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
                       const TopicLexicon& lexicon, const LearnerConfig& learner, const BatchContext& ctx_template,
                       std::optional<Timestamp> now, std::size_t top_k, std::size_t workers);

// ---------------------------------------------------------------------------
// Online merge

struct MergeInput {
  std::span<const BaseScoreRow> base;          // this user's rows (any order)
  std::span<const UsageEvent> recent_events;   // all users, since the batch
  std::span<const NewsProfile* const> fresh;   // items without a base row, scored on the fly
  bool social_changed = false;                 // user's follow edges changed since the batch
};

/// Starts from the batch rows, drops items the user has read (before or since the batch),
/// fully rescores rows whose item or user saw events since the batch, recomputes recency for
/// the rest, and scores fresh items. `lookup` resolves news ids; rows it cannot resolve are dropped.
std::vector<Recommendation> merge_online(const MergeInput& input, const UserProfile& profile,
                                         const std::function<const NewsProfile*(const std::string&)>& lookup,
                                         const RankContext& ctx, const RankWeights& weights);

}  // namespace hyperfeed
