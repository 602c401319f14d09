#include "hyperfeed/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>
#include <unordered_set>

#include "hyperfeed/rng.hpp"

namespace hyperfeed {

void SimScenario::validate() const {
  if (n_users == 0) throw std::invalid_argument("need at least one user");
  if (n_items == 0) throw std::invalid_argument("need at least one item");
  if (topics.empty()) throw std::invalid_argument("need at least one topic");
  if (steps == 0 || k == 0) throw std::invalid_argument("steps and k must be >= 1");
  if (step_seconds <= 0) throw std::invalid_argument("step_seconds must be > 0");
  if (!box_min.valid() || !box_max.valid() || box_min.lat > box_max.lat || box_min.lon > box_max.lon) {
    throw std::invalid_argument("bad geo box");
  }
  auto check = [&](const std::vector<double>& dist) {
    if (dist.size() != topics.size()) throw std::invalid_argument("ground truth size must match topics");
    double sum = 0.0;
    for (double p : dist) {
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("ground truth weights must be in [0, 1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("ground truth must sum to 1");
  };
  if (ground_truth.empty()) {
    check(default_taste);
  } else {
    if (ground_truth.size() != n_users) throw std::invalid_argument("one ground truth per user");
    for (const auto& g : ground_truth) check(g);
  }
}

namespace {

std::string index_id(const char* prefix, std::size_t i, std::size_t width = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, static_cast<int>(width), i);
  return buf;
}

GeoPoint random_point(Rng& rng, const GeoPoint& lo, const GeoPoint& hi) {
  return {lo.lat + (hi.lat - lo.lat) * rng.uniform(), lo.lon + (hi.lon - lo.lon) * rng.uniform()};
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct SimUser {
  std::string id;
  GeoPoint location;
  std::map<std::string, double> taste;
  std::string top_topic;
};

class World {
 public:
  World(const SimScenario& sc, Engine& engine, Rng& rng) : sc_(sc), engine_(engine), rng_(rng) {
    for (const auto& t : sc.topics) {
      auto kws = engine.lexicon().keywords_of(t);
      if (kws.empty()) kws.push_back(t);  // topic not in the lexicon: rely on the category fallback
      keywords_.push_back(std::move(kws));
    }
  }

  std::string publish(Timestamp created_at) { return publish(created_at, rng_.below(sc_.topics.size())); }

  std::string publish(Timestamp created_at, std::size_t topic) {
    const auto& kws = keywords_[topic];
    NewsItem item;
    item.id = index_id("n", next_item_++);
    item.description = kws[rng_.below(kws.size())] + " near " + kws[rng_.below(kws.size())];
    item.category = sc_.topics[topic];
    item.channel = "sim";
    item.location = random_point(rng_, sc_.box_min, sc_.box_max);
    item.created_at = created_at;
    item.author_id = "publisher";
    return engine_.add_news(item);
  }

 private:
  const SimScenario& sc_;
  Engine& engine_;
  Rng& rng_;
  std::vector<std::vector<std::string>> keywords_;
  std::size_t next_item_ = 0;
};

UserOutcome outcome_for(const Engine& engine, const SimUser& user) {
  UserOutcome out;
  out.user_id = user.id;
  out.top_topic = user.top_topic;
  const auto profile = engine.profile(user.id);
  bool all = true, entered = true;
  if (profile) {
    for (const auto& [state, _] : profile->qtable.rows()) {
      const auto g = greedy_action(profile->qtable, state);
      out.greedy_by_state[state] = g.value_or("");
      const bool ok = g && *g == user.top_topic;
      all = all && ok;
      if (state != kStartState) entered = entered && ok;
    }
  }
  out.all_states_correct = profile && all && !out.greedy_by_state.empty();
  out.entered_states_correct = profile && entered && !out.greedy_by_state.empty();
  return out;
}

}  // namespace

SimMetrics simulate(const SimScenario& scenario) {
  scenario.validate();
  Rng rng(scenario.seed);
  auto clock = std::make_shared<ManualClock>(scenario.start);

  ServiceConfig cfg = scenario.service;
  cfg.test_mode = true;
  cfg.data_dir.clear();
  if (scenario.snapshot_dir) {
    std::filesystem::remove_all(*scenario.snapshot_dir);
    cfg.data_dir = *scenario.snapshot_dir;
  }
  Engine engine(cfg, clock);
  World world(scenario, engine, rng);

  std::vector<SimUser> users;
  for (std::size_t u = 0; u < scenario.n_users; ++u) {
    SimUser user;
    user.id = index_id("u", u, 4);
    user.location = random_point(rng, scenario.box_min, scenario.box_max);
    std::vector<double> dist = scenario.ground_truth.empty() ? scenario.default_taste : scenario.ground_truth[u];
    std::vector<std::size_t> order(scenario.topics.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (scenario.ground_truth.empty()) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    double best = -1.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const std::string& topic = scenario.topics[order[i]];
      user.taste[topic] = dist[i];
      if (dist[i] > best) {
        best = dist[i];
        user.top_topic = topic;
      }
    }
    users.push_back(std::move(user));
  }

  for (std::size_t i = 0; i < scenario.n_items; ++i) {
    world.publish(scenario.start - std::chrono::seconds(static_cast<std::int64_t>(rng.below(3600))));
  }

  SimMetrics metrics;
  for (std::size_t step = 0; step < scenario.steps; ++step) {
    clock->set(scenario.start + std::chrono::seconds(static_cast<std::int64_t>(step) * scenario.step_seconds));
    const Timestamp now = clock->now();
    double precision_sum = 0.0;
    std::vector<std::size_t> read_topics;
    for (const auto& user : users) {
      RecommendQuery q;
      q.user_id = user.id;
      q.location = user.location;
      q.limit = std::min<std::size_t>(scenario.k, 100);
      q.seed = mix(scenario.seed, mix(step, std::hash<std::string>{}(user.id) & 0xffffffffULL));
      const auto result = engine.recommend(q);

      std::size_t relevant = 0;
      std::unordered_set<std::string> shown;
      for (const auto& rec : result.items) {
        shown.insert(rec.news_id);
        if (rec.dominant_topic == user.top_topic) ++relevant;
      }
      precision_sum += result.items.empty() ? 0.0 : static_cast<double>(relevant) / result.items.size();

      for (const auto& rec : result.items) {
        const auto it = user.taste.find(rec.dominant_topic);
        const double p = it == user.taste.end() ? 0.0 : it->second;
        auto emit = [&](EventKind kind) {
          if (!shown.contains(rec.news_id)) ++metrics.non_recommended_events;
          engine.add_event(UsageEvent{user.id, rec.news_id, kind, now, user.location});
          ++metrics.events;
        };
        if (rng.uniform() < p) {
          // One consuming event per engaged item; half of them are likes.
          if (rng.uniform() < 0.5) {
            emit(EventKind::kLike);
          } else {
            emit(EventKind::kRead);
            const auto t = std::find(scenario.topics.begin(), scenario.topics.end(), rec.dominant_topic);
            read_topics.push_back(t == scenario.topics.end() ? rng.below(scenario.topics.size())
                                                            : static_cast<std::size_t>(t - scenario.topics.begin()));
          }
        } else {
          emit(EventKind::kImpression);
        }
      }
    }
    if (scenario.replenish) {
      for (const std::size_t topic : read_topics) world.publish(now, topic);
    }

    std::size_t greedy_ok = 0;
    for (const auto& user : users) {
      const auto profile = engine.profile(user.id);
      if (!profile) continue;
      const auto g = greedy_action(profile->qtable, profile->last_state);
      if (g && *g == user.top_topic) ++greedy_ok;
    }
    metrics.steps.push_back({step, precision_sum / static_cast<double>(users.size()),
                             static_cast<double>(greedy_ok) / static_cast<double>(users.size())});
  }

  for (const auto& user : users) metrics.users.push_back(outcome_for(engine, user));

  if (scenario.snapshot_dir) {
    engine.run_batch(clock->now());
    engine.checkpoint_profiles();
    const StoreLayout layout{*scenario.snapshot_dir};
    metrics.table_paths = {layout.similarity_csv(), layout.base_csv()};
  }
  return metrics;
}

SimMetrics replay(const ReplayOptions& options) {
  std::vector<NewsItem> items;
  const auto news_path = options.news.empty() ? options.log.parent_path() / "news.jsonl" : options.news;
  replay_news(news_path, [&](NewsItem item) { items.push_back(std::move(item)); });
  std::stable_sort(items.begin(), items.end(),
                   [](const NewsItem& a, const NewsItem& b) { return a.created_at < b.created_at; });

  std::vector<UsageEvent> events;
  replay_events(options.log, [&](UsageEvent ev) { events.push_back(std::move(ev)); });

  SimMetrics metrics;
  if (events.empty()) return metrics;

  auto clock = std::make_shared<ManualClock>(events.front().at);
  ServiceConfig cfg = options.service;
  cfg.test_mode = true;
  cfg.data_dir.clear();
  cfg.weights.epsilon = 0.0;
  Engine engine(cfg, clock);

  std::size_t next_item = 0;
  std::set<std::string> known;
  std::map<std::string, GeoPoint> last_location;
  WindowMetric window{0, 0, 0, 0.0};
  auto close_window = [&] {
    window.hit_rate = window.reads == 0 ? 0.0 : static_cast<double>(window.hits) / static_cast<double>(window.reads);
    metrics.windows.push_back(window);
    window = WindowMetric{window.window + 1, 0, 0, 0.0};
  };

  for (const auto& ev : events) {
    clock->set(ev.at);
    while (next_item < items.size() && items[next_item].created_at <= ev.at) {
      known.insert(items[next_item].id);
      engine.add_news(items[next_item++]);
    }
    if (!known.contains(ev.news_id)) {
      // The item was published after this event's timestamp (shuffled or skewed log); admit it now.
      const auto it = std::find_if(items.begin(), items.end(), [&](const NewsItem& n) { return n.id == ev.news_id; });
      if (it == items.end()) continue;
      engine.add_news(*it);
      known.insert(it->id);
    }
    if (ev.location) last_location[ev.user_id] = *ev.location;

    if (ev.kind == EventKind::kRead) {
      GeoPoint where;
      if (const auto loc = last_location.find(ev.user_id); loc != last_location.end()) {
        where = loc->second;
      } else {
        where = engine.news(ev.news_id)->location;
      }
      RecommendQuery q{ev.user_id, where, std::min<std::size_t>(options.k, 100), 0, ev.at};
      const auto result = engine.recommend(q);
      const bool hit = std::any_of(result.items.begin(), result.items.end(),
                                   [&](const Recommendation& r) { return r.news_id == ev.news_id; });
      ++window.reads;
      if (hit) ++window.hits;
      if (window.reads == options.window) close_window();
    }
    engine.add_event(ev);
    ++metrics.events;
  }
  if (window.reads > 0) close_window();
  return metrics;
}

void write_steps_csv(std::ostream& out, const SimMetrics& m) {
  out << "step,precision_at_k,greedy_accuracy\n";
  char buf[128];
  for (const auto& s : m.steps) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f\n", s.step, s.precision_at_k, s.greedy_accuracy);
    out << buf;
  }
}

void write_windows_csv(std::ostream& out, const SimMetrics& m) {
  out << "window,reads,hits,hit_rate\n";
  char buf[128];
  for (const auto& w : m.windows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.6f\n", w.window, w.reads, w.hits, w.hit_rate);
    out << buf;
  }
}

}  // namespace hyperfeed
