#include "hyperfeed/service.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace hyperfeed {

// ---------------------------------------------------------------------------
// Configuration

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) throw std::invalid_argument("port out of range");
  filter.validate();
  weights.validate();
  learner.validate();
  decay.validate();
  if (top_k == 0) throw std::invalid_argument("top_k must be >= 1");
  if (batch_workers == 0) throw std::invalid_argument("batch workers must be >= 1");
}

namespace {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (const auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

}  // namespace

ServiceConfig config_from_json(const nlohmann::json& j) {
  ServiceConfig c;
  read_opt(j, "host", c.host);
  read_opt(j, "port", c.port);
  if (const auto it = j.find("data_dir"); it != j.end() && it->is_string()) c.data_dir = it->get<std::string>();
  if (const auto it = j.find("lexicon"); it != j.end() && it->is_string()) c.lexicon = it->get<std::string>();
  read_opt(j, "test_mode", c.test_mode);
  if (const auto it = j.find("seed"); it != j.end() && !it->is_null()) c.seed = it->get<std::uint64_t>();
  read_opt(j, "top_k", c.top_k);
  read_opt(j, "batch_workers", c.batch_workers);
  if (const auto it = j.find("filter"); it != j.end()) {
    read_opt(*it, "radius_km", c.filter.radius_km);
    read_opt(*it, "max_age_hours", c.filter.max_age_hours);
  }
  if (const auto it = j.find("rank"); it != j.end()) {
    auto& w = c.weights;
    read_opt(*it, "w_pref", w.w_pref);
    read_opt(*it, "w_social", w.w_social);
    read_opt(*it, "w_recency", w.w_recency);
    read_opt(*it, "w_trend", w.w_trend);
    read_opt(*it, "lambda_per_hour", w.lambda_per_hour);
    if (const auto h = it->find("recency_half_life_hours"); h != it->end()) {
      w.lambda_per_hour = std::numbers::ln2 / h->get<double>();
    }
    read_opt(*it, "epsilon", w.epsilon);
    read_opt(*it, "q_boost", w.q_boost);
    read_opt(*it, "diversity_decay", w.diversity_decay);
    read_opt(*it, "trend_window_hours", w.trend_window_hours);
  }
  if (const auto it = j.find("learner"); it != j.end()) {
    read_opt(*it, "alpha", c.learner.alpha);
    read_opt(*it, "gamma", c.learner.gamma);
    if (const auto r = it->find("rewards"); r != it->end()) {
      for (const auto& [kind, value] : r->items()) {
        c.learner.rewards[static_cast<std::size_t>(parse_event_kind(kind))] = value.get<double>();
      }
    }
    if (const auto t = it->find("target"); t != it->end()) {
      const auto s = t->get<std::string>();
      if (s == "as_written") {
        c.learner.target = TdTarget::kAsWritten;
      } else if (s == "max") {
        c.learner.target = TdTarget::kMax;
      } else {
        throw std::invalid_argument("learner.target must be 'as_written' or 'max'");
      }
    }
  }
  if (const auto it = j.find("decay"); it != j.end()) {
    read_opt(*it, "short_half_life_hours", c.decay.short_half_life_hours);
    read_opt(*it, "long_half_life_hours", c.decay.long_half_life_hours);
    read_opt(*it, "shift_threshold", c.decay.shift_threshold);
    read_opt(*it, "boost_factor", c.decay.boost_factor);
  }
  return c;
}

ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  return config_from_json(nlohmann::json::parse(in));
}

void apply_env_overrides(ServiceConfig& cfg) {
  auto num = [](const char* name, double& out) {
    if (const char* v = std::getenv(name); v != nullptr && *v != '\0') {
      try {
        out = std::stod(v);
      } catch (const std::exception&) {
        throw std::invalid_argument(std::string(name) + " is not a number");
      }
    }
  };
  num("HYPERFEED_RADIUS_KM", cfg.filter.radius_km);
  num("HYPERFEED_MAX_AGE_HOURS", cfg.filter.max_age_hours);
  num("HYPERFEED_ALPHA", cfg.learner.alpha);
  num("HYPERFEED_GAMMA", cfg.learner.gamma);
  num("HYPERFEED_EPSILON", cfg.weights.epsilon);
  if (const char* v = std::getenv("HYPERFEED_SEED"); v != nullptr && *v != '\0') {
    try {
      cfg.seed = std::stoull(v);
    } catch (const std::exception&) {
      throw std::invalid_argument("HYPERFEED_SEED is not an unsigned integer");
    }
  }
}

nlohmann::json to_json(const ServiceConfig& c) {
  nlohmann::json rewards = nlohmann::json::object();
  for (std::size_t k = 0; k < kEventKindCount; ++k) {
    rewards[std::string(to_string(static_cast<EventKind>(k)))] = c.learner.rewards[k];
  }
  return {{"host", c.host},
          {"port", c.port},
          {"data_dir", c.data_dir.string()},
          {"lexicon", c.lexicon.string()},
          {"test_mode", c.test_mode},
          {"seed", c.seed ? nlohmann::json(*c.seed) : nlohmann::json(nullptr)},
          {"top_k", c.top_k},
          {"batch_workers", c.batch_workers},
          {"filter", {{"radius_km", c.filter.radius_km}, {"max_age_hours", c.filter.max_age_hours}}},
          {"rank",
           {{"w_pref", c.weights.w_pref},
            {"w_social", c.weights.w_social},
            {"w_recency", c.weights.w_recency},
            {"w_trend", c.weights.w_trend},
            {"lambda_per_hour", c.weights.lambda_per_hour},
            {"epsilon", c.weights.epsilon},
            {"q_boost", c.weights.q_boost},
            {"diversity_decay", c.weights.diversity_decay},
            {"trend_window_hours", c.weights.trend_window_hours}}},
          {"learner",
           {{"alpha", c.learner.alpha},
            {"gamma", c.learner.gamma},
            {"rewards", rewards},
            {"target", c.learner.target == TdTarget::kMax ? "max" : "as_written"}}},
          {"decay",
           {{"short_half_life_hours", c.decay.short_half_life_hours},
            {"long_half_life_hours", c.decay.long_half_life_hours},
            {"shift_threshold", c.decay.shift_threshold},
            {"boost_factor", c.decay.boost_factor}}}};
}

nlohmann::json ApiError::body() const {
  nlohmann::json j = {{"error", code_}, {"message", what()}};
  if (!field_.empty()) j["field"] = field_;
  return j;
}

// ---------------------------------------------------------------------------
// Engine

Engine::Engine(ServiceConfig cfg, std::shared_ptr<const Clock> clock)
    : cfg_(std::move(cfg)),
      lexicon_(cfg_.lexicon.empty() ? TopicLexicon::builtin() : TopicLexicon::load(cfg_.lexicon.string())),
      clock_(clock ? std::move(clock) : std::make_shared<SystemClock>()),
      index_(cfg_.filter.radius_km) {
  cfg_.validate();
  if (!cfg_.data_dir.empty()) {
    restore();
    store_ = std::make_unique<Store>(StoreLayout{cfg_.data_dir});
  }
}

Engine::~Engine() = default;

void Engine::restore() {
  StoreSnapshot snap = load_snapshot(StoreLayout{cfg_.data_dir}, lexicon_, cfg_.learner, cfg_.decay);
  for (auto& [id, profile] : snap.news) {
    index_.insert(profile);
    news_.emplace(id, std::move(profile));
  }
  for (auto& [id, user] : snap.users) {
    auto slot = std::make_unique<UserSlot>(id);
    slot->profile = std::move(user);
    users_.emplace(id, std::move(slot));
  }
  graph_ = std::move(snap.graph);
  log_ = std::move(snap.log);
  events_ = std::move(snap.events);
}

Engine::UserSlot& Engine::slot_for(const std::string& user) {
  std::lock_guard lock(users_mu_);
  auto& slot = users_[user];
  if (!slot) slot = std::make_unique<UserSlot>(user);
  return *slot;
}

const Engine::UserSlot* Engine::find_slot(const std::string& user) const {
  std::lock_guard lock(users_mu_);
  const auto it = users_.find(user);
  return it == users_.end() ? nullptr : it->second.get();
}

std::string Engine::post_news(const nlohmann::json& body) {
  NewsItem item;
  try {
    item = validate_news(body);
  } catch (const FieldError& e) {
    throw ApiError(400, e.code(), e.what(), e.field());
  }
  return add_news(item);
}

std::string Engine::add_news(const NewsItem& item) {
  NewsProfile profile = build_profile(item, lexicon_);
  std::unique_lock lock(state_mu_);
  if (news_.contains(item.id)) throw ApiError(409, "DuplicateId", "news id '" + item.id + "' already exists", "id");
  if (store_) store_->append_news(item);
  index_.insert(profile);
  news_.emplace(item.id, std::move(profile));
  return item.id;
}

void Engine::post_event(const nlohmann::json& body) {
  UsageEvent ev;
  try {
    ev = validate_event(body);
  } catch (const FieldError& e) {
    throw ApiError(400, e.code(), e.what(), e.field());
  }
  add_event(ev);
}

void Engine::add_event(const UsageEvent& event) {
  {
    std::shared_lock lock(state_mu_);
    if (!news_.contains(event.news_id)) {
      throw ApiError(404, "UnknownNews", "news id '" + event.news_id + "' not found", "news_id");
    }
  }
  UserSlot& slot = slot_for(event.user_id);
  std::lock_guard user_lock(slot.mu);
  NewsProfile item;
  {
    std::unique_lock lock(state_mu_);
    item = news_.at(event.news_id);
    if (store_) store_->append_event(event);
    log_.add(event);
    events_.push_back(event);
  }
  apply_event(slot.profile, event, item, cfg_.learner, cfg_.decay);
}

bool Engine::follow(const std::string& user, const std::string& followee) {
  if (user.empty() || followee.empty()) throw ApiError(400, "MissingField", "follower and followee are required", "followee_id");
  if (user == followee) throw ApiError(400, "SelfFollow", "a user cannot follow themselves", "followee_id");
  slot_for(user);
  std::unique_lock lock(state_mu_);
  const bool added = graph_.follow(user, followee);
  if (added) {
    ++follow_versions_[user];
    if (store_) store_->append_follow({user, followee});
  }
  return added;
}

std::optional<UserProfile> Engine::profile(const std::string& user) const {
  const UserSlot* slot = find_slot(user);
  if (slot == nullptr) return std::nullopt;
  std::lock_guard lock(slot->mu);
  return slot->profile;
}

std::optional<nlohmann::json> Engine::profile_json(const std::string& user) const {
  auto p = profile(user);
  if (!p) return std::nullopt;
  nlohmann::json j = to_json(*p);
  const auto greedy = greedy_action(p->qtable, p->last_state);
  j["greedy_action"] = greedy ? nlohmann::json(*greedy) : nlohmann::json(nullptr);
  j["preference_blend"] = preference_blend(*p, cfg_.decay);
  if (const auto shift = detect_shift(*p, cfg_.decay)) {
    j["shift"] = {{"l1_distance", shift->l1_distance}, {"rising_topics", shift->rising_topics}};
  } else {
    j["shift"] = nullptr;
  }
  {
    std::shared_lock lock(state_mu_);
    j["follows"] = graph_.followees(user);
  }
  return j;
}

std::optional<NewsProfile> Engine::news(const std::string& id) const {
  std::shared_lock lock(state_mu_);
  const auto it = news_.find(id);
  if (it == news_.end()) return std::nullopt;
  return it->second;
}

std::size_t Engine::news_count() const {
  std::shared_lock lock(state_mu_);
  return news_.size();
}

std::size_t Engine::user_count() const {
  std::lock_guard lock(users_mu_);
  return users_.size();
}

RecommendResult Engine::recommend(const RecommendQuery& query) const {
  if (!query.location.valid() || !std::isfinite(query.location.lat) || !std::isfinite(query.location.lon)) {
    throw ApiError(400, "OutOfRange", "lat must be in [-90, 90] and lon in [-180, 180]",
                   std::abs(query.location.lat) > 90.0 || !std::isfinite(query.location.lat) ? "lat" : "lon");
  }
  if (query.limit < 1 || query.limit > 100) throw ApiError(400, "OutOfRange", "limit must be in [1, 100]", "limit");

  RecommendResult result;
  result.now = query.now.value_or(clock_->now());
  if (query.seed) {
    result.seed = *query.seed;
  } else if (cfg_.seed) {
    // A configured seed is mixed with a call counter so production calls still differ;
    // test mode keeps it fixed so repeated calls are byte-identical.
    result.seed = cfg_.test_mode ? *cfg_.seed : *cfg_.seed + query_counter_.fetch_add(1);
  } else if (cfg_.test_mode) {
    result.seed = 0;
  } else {
    std::random_device rd;
    result.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }

  UserProfile profile(query.user_id);
  if (const UserSlot* slot = find_slot(query.user_id)) {
    std::lock_guard lock(slot->mu);
    profile = slot->profile;
  }

  std::vector<Recommendation> merged;
  {
    std::shared_lock lock(state_mu_);
    std::vector<std::string> pool = index_.query(query.location, result.now, cfg_.filter);
    std::erase_if(pool, [&](const std::string& id) { return profile.read_set.contains(id); });
    const TrendTable trend = trend_weights(pool, log_, result.now, cfg_.weights.trend_window_hours);
    const RankContext ctx{result.now, &graph_, &log_, &trend, cfg_.decay};
    auto lookup = [this](const std::string& id) -> const NewsProfile* {
      const auto it = news_.find(id);
      return it == news_.end() ? nullptr : &it->second;
    };

    std::vector<BaseScoreRow> base;
    std::vector<const NewsProfile*> fresh;
    std::span<const UsageEvent> recent;
    bool social_changed = false;
    const std::vector<BaseScoreRow>* user_rows = nullptr;
    if (batch_) {
      if (const auto it = batch_->rows_by_user.find(query.user_id); it != batch_->rows_by_user.end()) {
        user_rows = &it->second;
      }
      recent = std::span<const UsageEvent>(events_).subspan(std::min(batch_->event_watermark, events_.size()));
      const auto now_v = follow_versions_.find(query.user_id);
      const auto then_v = batch_->follow_versions.find(query.user_id);
      social_changed = (now_v == follow_versions_.end() ? 0 : now_v->second) !=
                       (then_v == batch_->follow_versions.end() ? 0 : then_v->second);
    }
    std::unordered_set<std::string> in_base;
    if (user_rows != nullptr) {
      const std::unordered_set<std::string> candidates(pool.begin(), pool.end());
      for (const auto& row : *user_rows) {
        if (candidates.contains(row.news_id)) {
          base.push_back(row);
          in_base.insert(row.news_id);
        }
      }
    }
    for (const auto& id : pool) {
      if (!in_base.contains(id)) fresh.push_back(lookup(id));
    }
    const MergeInput input{base, recent, fresh, social_changed};
    merged = merge_online(input, profile, lookup, ctx, cfg_.weights);
  }

  // Candidate order must not depend on hash-map iteration.
  std::sort(merged.begin(), merged.end(), [](const Recommendation& a, const Recommendation& b) {
    return a.score > b.score || (a.score == b.score && a.news_id < b.news_id);
  });
  auto diversified = diversify(std::move(merged), cfg_.weights.diversity_decay);
  Rng rng(result.seed);
  result.items = select(diversified, query.limit, cfg_.weights.epsilon, rng);
  return result;
}

nlohmann::json Engine::recommendations_json(const RecommendResult& result) const {
  nlohmann::json items = nlohmann::json::array();
  std::shared_lock lock(state_mu_);
  for (const auto& rec : result.items) {
    nlohmann::json j = to_json(rec);
    if (const auto it = news_.find(rec.news_id); it != news_.end()) {
      j["location"] = to_json(it->second.location);
      j["created_at"] = it->second.created_at.to_rfc3339();
      j["category"] = it->second.category;
      j["author_id"] = it->second.author_id;
    }
    items.push_back(std::move(j));
  }
  return {{"items", std::move(items)}, {"now", result.now.to_rfc3339()}, {"seed", result.seed}};
}

BatchSummary Engine::run_batch(std::optional<Timestamp> now) {
  const Timestamp as_of = now.value_or(clock_->now());

  // Lock order matches add_event: user slots before the state lock.
  std::unique_lock users_lock(users_mu_);
  std::vector<std::string> ids;
  ids.reserve(users_.size());
  for (const auto& [id, _] : users_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  std::vector<std::unique_lock<std::mutex>> slot_locks;
  std::vector<const UserProfile*> users;
  for (const auto& id : ids) {
    auto& slot = *users_.at(id);
    slot_locks.emplace_back(slot.mu);
    users.push_back(&slot.profile);
  }

  auto snapshot = std::make_shared<BatchSnapshot>();
  std::vector<NewsProfile> all_news;
  BatchSummary summary;
  {
    std::shared_lock lock(state_mu_);
    std::vector<const NewsProfile*> items;
    items.reserve(news_.size());
    all_news.reserve(news_.size());
    for (const auto& [_, p] : news_) {
      items.push_back(&p);
      all_news.push_back(p);
    }
    const BatchContext ctx{as_of, &graph_, &log_, cfg_.filter, cfg_.weights, cfg_.decay};
    auto rows = build_user_news_base(users, items, ctx);
    summary.base_rows = rows.size();
    if (store_) {
      write_atomically(store_->layout().base_csv(), [&](std::ostream& f) { write_base_csv(f, rows); });
    }
    snapshot->as_of = as_of;
    snapshot->event_watermark = events_.size();
    snapshot->follow_versions = follow_versions_;
    for (auto& row : rows) snapshot->rows_by_user[row.user_id].push_back(std::move(row));
  }
  slot_locks.clear();
  users_lock.unlock();

  const auto sim = build_news_similarity(std::move(all_news), cfg_.top_k, cfg_.batch_workers);
  summary.similarity_rows = sim.size();
  summary.as_of = as_of;
  if (store_) {
    write_atomically(store_->layout().similarity_csv(), [&](std::ostream& f) { write_similarity_csv(f, sim); });
  }

  std::unique_lock lock(state_mu_);
  batch_ = std::move(snapshot);
  return summary;
}

std::size_t Engine::checkpoint_profiles() const {
  if (!store_) return 0;
  std::vector<std::string> ids;
  {
    std::lock_guard lock(users_mu_);
    for (const auto& [id, _] : users_) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  std::size_t n = 0;
  for (const auto& id : ids) {
    if (auto p = profile(id)) {
      store_->append_profile(*p);
      ++n;
    }
  }
  return n;
}

std::size_t Engine::evict_expired() {
  const Timestamp cutoff = clock_->now() - hours(cfg_.filter.max_age_hours);
  std::unique_lock lock(state_mu_);
  return index_.evict_older_than(cutoff);
}

}  // namespace hyperfeed
