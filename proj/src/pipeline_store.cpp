#include "hyperfeed/pipeline_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "hyperfeed/json_io.hpp"

namespace hyperfeed {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Append path

AppendLog::AppendLog(fs::path path) : path_(std::move(path)) {
  std::error_code ec;
  const auto size = fs::file_size(path_, ec);
  end_ = ec ? 0 : size;
}

std::uint64_t AppendLog::append(const nlohmann::json& record) {
  const std::string line = dump_json(record) + "\n";
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw StorageFull(path_.string());
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
  if (!out) throw StorageFull(path_.string());
  const std::uint64_t offset = end_;
  end_ += line.size();
  return offset;
}

Store::Store(StoreLayout layout)
    : layout_(std::move(layout)),
      news_(layout_.news()),
      events_(layout_.events()),
      follows_(layout_.follows()),
      profiles_(layout_.profiles()) {
  fs::create_directories(layout_.data_dir);
}

std::uint64_t Store::append_news(const NewsItem& item) { return news_.append(to_json(item)); }
std::uint64_t Store::append_event(const UsageEvent& event) { return events_.append(to_json(event)); }
std::uint64_t Store::append_profile(const UserProfile& profile) { return profiles_.append(to_json(profile)); }

std::uint64_t Store::append_follow(const FollowEdge& edge) {
  return follows_.append({{"follower", edge.follower}, {"followee", edge.followee}});
}

// ---------------------------------------------------------------------------
// Replay

void replay_jsonl(const fs::path& path, const std::function<void(const nlohmann::json&)>& sink) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorruptRecord(path.string(), line_no, e.what());
    }
    try {
      sink(record);
    } catch (const FieldError& e) {
      throw CorruptRecord(path.string(), line_no, e.what());
    } catch (const nlohmann::json::exception& e) {
      throw CorruptRecord(path.string(), line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw CorruptRecord(path.string(), line_no, e.what());
    }
  }
}

void replay_news(const fs::path& path, const std::function<void(NewsItem)>& sink) {
  replay_jsonl(path, [&](const nlohmann::json& j) { sink(validate_news(j)); });
}

void replay_events(const fs::path& path, const std::function<void(UsageEvent)>& sink) {
  replay_jsonl(path, [&](const nlohmann::json& j) { sink(validate_event(j)); });
}

void replay_follows(const fs::path& path, const std::function<void(FollowEdge)>& sink) {
  replay_jsonl(path, [&](const nlohmann::json& j) {
    sink(FollowEdge{j.at("follower").get<std::string>(), j.at("followee").get<std::string>()});
  });
}

std::map<std::string, UserProfile> load_profiles(const fs::path& path) {
  std::map<std::string, UserProfile> out;
  replay_jsonl(path, [&](const nlohmann::json& j) {
    UserProfile p = profile_from_json(j);
    out.insert_or_assign(p.user_id, std::move(p));
  });
  return out;
}

void apply_event(UserProfile& profile, const UsageEvent& event, const NewsProfile& item, const LearnerConfig& learner,
                 const DecayConfig& decay) {
  observe(profile, event, item, learner, decay);
  record_event(profile, event, item, learner);
}

StoreSnapshot load_snapshot(const StoreLayout& layout, const TopicLexicon& lexicon, const LearnerConfig& learner,
                            const DecayConfig& decay) {
  StoreSnapshot snap;
  auto see = [&](Timestamp t) {
    if (!snap.latest || *snap.latest < t) snap.latest = t;
  };
  replay_news(layout.news(), [&](NewsItem item) {
    see(item.created_at);
    auto profile = build_profile(item, lexicon);
    snap.news.insert_or_assign(profile.news_id, std::move(profile));
  });
  replay_follows(layout.follows(), [&](FollowEdge e) {
    if (e.follower != e.followee) snap.graph.follow(e.follower, e.followee);
    snap.users.try_emplace(e.follower, e.follower);
  });
  replay_events(layout.events(), [&](UsageEvent ev) {
    const auto it = snap.news.find(ev.news_id);
    if (it == snap.news.end()) {
      ++snap.skipped_events;
      return;
    }
    see(ev.at);
    auto [user, _] = snap.users.try_emplace(ev.user_id, ev.user_id);
    apply_event(user->second, ev, it->second, learner, decay);
    snap.log.add(ev);
    snap.events.push_back(std::move(ev));
  });
  return snap;
}

// ---------------------------------------------------------------------------
// New_Similarity

std::vector<SimilarityRow> build_news_similarity(std::vector<NewsProfile> profiles, std::size_t top_k,
                                                 std::size_t workers, const SimilarityWeights& weights) {
  std::sort(profiles.begin(), profiles.end(),
            [](const NewsProfile& a, const NewsProfile& b) { return a.news_id < b.news_id; });
  const std::size_t n = profiles.size();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));

  auto rows_for = [&](std::size_t i) {
    std::vector<SimilarityRow> rows;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double s = similarity(profiles[i], profiles[j], weights);
      if (s > 0.0) rows.push_back({profiles[i].news_id, profiles[j].news_id, s});
    }
    // Ranked on the printed precision, so rows that print equal are ordered by id.
    auto order = [](const SimilarityRow& a, const SimilarityRow& b) {
      const auto qa = std::llround(a.similarity_score * 1e6), qb = std::llround(b.similarity_score * 1e6);
      return qa > qb || (qa == qb && a.similar_news < b.similar_news);
    };
    if (rows.size() > top_k) {
      std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(top_k), rows.end(), order);
      rows.resize(top_k);
    } else {
      std::sort(rows.begin(), rows.end(), order);
    }
    return rows;
  };

  std::vector<std::vector<SimilarityRow>> parts(workers);
  auto run_partition = [&](std::size_t w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    for (std::size_t i = begin; i < end; ++i) {
      auto rows = rows_for(i);
      parts[w].insert(parts[w].end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
    }
  };
  if (workers == 1) {
    run_partition(0);
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run_partition, w);
  }

  std::vector<SimilarityRow> out;
  for (auto& p : parts) out.insert(out.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  return out;
}

// ---------------------------------------------------------------------------
// User_News_Base

std::vector<BaseScoreRow> build_user_news_base(const std::vector<const UserProfile*>& users,
                                               const std::vector<const NewsProfile*>& items, const BatchContext& ctx) {
  std::vector<const NewsProfile*> live;
  const auto max_age_ms = static_cast<std::int64_t>(ctx.filter.max_age_hours * 3'600'000.0);
  for (const auto* item : items) {
    const std::int64_t age = ctx.now.millis() - item->created_at.millis();
    if (age >= 0 && age <= max_age_ms) live.push_back(item);
  }
  std::sort(live.begin(), live.end(), [](const NewsProfile* a, const NewsProfile* b) { return a->news_id < b->news_id; });
  std::vector<std::string> pool;
  pool.reserve(live.size());
  for (const auto* item : live) pool.push_back(item->news_id);

  std::vector<BaseScoreRow> rows;
  if (live.empty() || users.empty()) return rows;
  const InteractionLog empty_log;
  const SocialGraph empty_graph;
  const InteractionLog& log = ctx.log ? *ctx.log : empty_log;
  const TrendTable trend = trend_weights(pool, log, ctx.now, ctx.weights.trend_window_hours);
  const RankContext rank{ctx.now, ctx.graph ? ctx.graph : &empty_graph, &log, &trend, ctx.decay};

  std::vector<const UserProfile*> sorted_users(users);
  std::sort(sorted_users.begin(), sorted_users.end(),
            [](const UserProfile* a, const UserProfile* b) { return a->user_id < b->user_id; });
  for (const auto* user : sorted_users) {
    for (const auto* item : live) {
      if (user->read_set.contains(item->news_id)) continue;
      const Recommendation rec = score(*item, *user, rank, ctx.weights);
      rows.push_back({user->user_id, item->news_id, rec.score, rec.components});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV

std::string csv_field(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

namespace {

std::string six_decimals(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

}  // namespace

void write_similarity_csv(std::ostream& out, const std::vector<SimilarityRow>& rows) {
  out << "news_id,similar_news,similarity_score\r\n";
  for (const auto& r : rows) {
    out << csv_field(r.news_id) << ',' << csv_field(r.similar_news) << ',' << six_decimals(r.similarity_score) << "\r\n";
  }
}

void write_base_csv(std::ostream& out, const std::vector<BaseScoreRow>& rows) {
  out << "user_id,news_id,recommendation_score\r\n";
  for (const auto& r : rows) {
    out << csv_field(r.user_id) << ',' << csv_field(r.news_id) << ',' << six_decimals(r.recommendation_score) << "\r\n";
  }
}

void write_atomically(const fs::path& path, const std::function<void(std::ostream&)>& writer) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw StorageFull(tmp.string());
    writer(f);
    if (!f) throw StorageFull(tmp.string());
  }
  fs::rename(tmp, path);
}

BatchSummary run_batch(const fs::path& data_dir, const fs::path& out_dir, const TopicLexicon& lexicon,
                       const LearnerConfig& learner, const BatchContext& ctx_template, std::optional<Timestamp> now,
                       std::size_t top_k, std::size_t workers) {
  const StoreLayout in{data_dir};
  const StoreSnapshot snap = load_snapshot(in, lexicon, learner, ctx_template.decay);

  BatchContext ctx = ctx_template;
  ctx.now = now.value_or(snap.latest.value_or(Timestamp{}));
  ctx.graph = &snap.graph;
  ctx.log = &snap.log;

  std::vector<NewsProfile> all_news;
  std::vector<const NewsProfile*> items;
  all_news.reserve(snap.news.size());
  for (const auto& [_, p] : snap.news) {
    all_news.push_back(p);
    items.push_back(&p);
  }
  std::vector<const UserProfile*> users;
  for (const auto& [_, u] : snap.users) users.push_back(&u);

  const auto sim_rows = build_news_similarity(std::move(all_news), top_k, workers);
  const auto base_rows = build_user_news_base(users, items, ctx);

  fs::create_directories(out_dir);
  const StoreLayout out{out_dir};
  write_atomically(out.similarity_csv(), [&](std::ostream& f) { write_similarity_csv(f, sim_rows); });
  write_atomically(out.base_csv(), [&](std::ostream& f) { write_base_csv(f, base_rows); });
  return {sim_rows.size(), base_rows.size(), ctx.now};
}

// ---------------------------------------------------------------------------
// Online merge

std::vector<Recommendation> merge_online(const MergeInput& input, const UserProfile& profile,
                                         const std::function<const NewsProfile*(const std::string&)>& lookup,
                                         const RankContext& ctx, const RankWeights& weights) {
  std::unordered_set<std::string> touched;
  std::unordered_set<std::string> read_since;
  bool user_changed = input.social_changed;
  for (const auto& ev : input.recent_events) {
    touched.insert(ev.news_id);
    if (ev.user_id == profile.user_id) {
      user_changed = true;
      if (ev.kind == EventKind::kRead) read_since.insert(ev.news_id);
    }
  }
  auto is_read = [&](const std::string& id) { return profile.read_set.contains(id) || read_since.contains(id); };

  std::vector<Recommendation> out;
  out.reserve(input.base.size() + input.fresh.size());
  for (const auto& row : input.base) {
    if (is_read(row.news_id)) continue;
    const NewsProfile* item = lookup(row.news_id);
    if (item == nullptr) continue;
    if (user_changed || touched.contains(row.news_id)) {
      out.push_back(score(*item, profile, ctx, weights));
      continue;
    }
    Recommendation rec;
    rec.news_id = row.news_id;
    rec.dominant_topic = item->dominant_topic;
    rec.components = row.components;
    rec.components.recency = recency_weight(hours_between(ctx.now, item->created_at), weights.lambda_per_hour);
    rec.score = compose_score(rec.components, weights);
    out.push_back(std::move(rec));
  }
  for (const NewsProfile* item : input.fresh) {
    if (item == nullptr || is_read(item->news_id)) continue;
    out.push_back(score(*item, profile, ctx, weights));
  }
  return out;
}

}  // namespace hyperfeed
