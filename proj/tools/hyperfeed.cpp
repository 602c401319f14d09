// Command-line front end: serve, batch, simulate, replay.
#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hyperfeed/http_api.hpp"
#include "hyperfeed/json_io.hpp"
#include "hyperfeed/service.hpp"
#include "hyperfeed/sim.hpp"

using namespace hyperfeed;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

HttpApi* g_api = nullptr;

void on_signal(int) {
  if (g_api) g_api->stop();
}

bool write_file(const std::string& path, auto&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "cannot write " << path << "\n";
    return false;
  }
  writer(out);
  return static_cast<bool>(out);
}

ServiceConfig base_config(const std::string& path) {
  ServiceConfig cfg = path.empty() ? ServiceConfig{} : load_config(path);
  apply_env_overrides(cfg);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hyperfeed: hyper-local news recommendation service"};
  app.require_subcommand(1);

  std::string config_path;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  std::optional<int> port;
  serve->add_option("--port", port, "Override the configured port");

  std::string data_dir, out_dir, now_text;
  std::size_t workers = 1;
  auto* batch = app.add_subcommand("batch", "Build news_similarity.csv and user_news_base.csv");
  batch->add_option("--data-dir", data_dir, "Store directory")->required();
  batch->add_option("--out-dir", out_dir, "Output directory (default: data dir)");
  batch->add_option("--now", now_text, "RFC 3339 instant (default: latest store timestamp)");
  batch->add_option("--workers", workers, "Worker threads")->check(CLI::Range(1, 256));
  batch->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);

  SimScenario scenario;
  std::string out_path = "metrics.csv";
  std::string snapshot;
  auto* simulate_cmd = app.add_subcommand("simulate", "Run the synthetic convergence study");
  simulate_cmd->add_option("--users", scenario.n_users)->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--items", scenario.n_items)->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--steps", scenario.steps)->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--k", scenario.k)->check(CLI::Range(1, 100));
  simulate_cmd->add_option("--seed", scenario.seed);
  simulate_cmd->add_option("--out", out_path, "Per-step metrics CSV");
  simulate_cmd->add_option("--snapshot-dir", snapshot, "Persist the run and write batch tables here");
  simulate_cmd->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);

  ReplayOptions replay_opts;
  std::string log_path, news_path;
  auto* replay_cmd = app.add_subcommand("replay", "Replay an events.jsonl and report hit rate per window");
  replay_cmd->add_option("--log", log_path, "events.jsonl")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--news", news_path, "news.jsonl (default: next to the log)");
  replay_cmd->add_option("--k", replay_opts.k)->check(CLI::Range(1, 100));
  replay_cmd->add_option("--window", replay_opts.window)->check(CLI::PositiveNumber);
  replay_cmd->add_option("--out", out_path, "Per-window metrics CSV");
  replay_cmd->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*serve) {
      ServiceConfig cfg = base_config(config_path);
      if (port) cfg.port = *port;
      Engine engine(cfg);
      HttpApi api(engine);
      const int bound = api.bind(cfg.host, cfg.port);
      if (bound < 0) {
        std::cerr << "cannot bind " << cfg.host << ":" << cfg.port << "\n";
        return kExitData;
      }
      g_api = &api;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << cfg.host << ":" << bound << "\n";
      api.serve();
      engine.checkpoint_profiles();
      return kExitOk;
    }

    if (*batch) {
      const ServiceConfig cfg = base_config(config_path);
      const TopicLexicon lexicon = cfg.lexicon.empty() ? TopicLexicon::builtin() : TopicLexicon::load(cfg.lexicon);
      std::optional<Timestamp> now;
      if (!now_text.empty()) now = Timestamp::parse(now_text);
      const BatchContext ctx{Timestamp{}, nullptr, nullptr, cfg.filter, cfg.weights, cfg.decay};
      const auto summary = run_batch(data_dir, out_dir.empty() ? data_dir : out_dir, lexicon, cfg.learner, ctx, now,
                                     cfg.top_k, workers);
      std::cout << dump_json({{"similarity_rows", summary.similarity_rows},
                              {"base_rows", summary.base_rows},
                              {"as_of", summary.as_of.to_rfc3339()}})
                << "\n";
      return kExitOk;
    }

    if (*simulate_cmd) {
      scenario.service = base_config(config_path);
      if (!snapshot.empty()) scenario.snapshot_dir = snapshot;
      const auto metrics = simulate(scenario);
      if (!write_file(out_path, [&](std::ostream& o) { write_steps_csv(o, metrics); })) return kExitData;
      std::size_t all = 0, entered = 0;
      for (const auto& u : metrics.users) {
        all += u.all_states_correct;
        entered += u.entered_states_correct;
      }
      const auto& last = metrics.steps.back();
      std::cout << dump_json({{"steps", metrics.steps.size()},
                              {"events", metrics.events},
                              {"final_precision_at_k", last.precision_at_k},
                              {"final_greedy_accuracy", last.greedy_accuracy},
                              {"users_all_states_correct", all},
                              {"users_entered_states_correct", entered},
                              {"users", metrics.users.size()}})
                << "\n";
      return kExitOk;
    }

    if (*replay_cmd) {
      replay_opts.service = base_config(config_path);
      replay_opts.log = log_path;
      replay_opts.news = news_path;
      const auto metrics = replay(replay_opts);
      if (!write_file(out_path, [&](std::ostream& o) { write_windows_csv(o, metrics); })) return kExitData;
      std::size_t reads = 0, hits = 0;
      for (const auto& w : metrics.windows) {
        reads += w.reads;
        hits += w.hits;
      }
      std::cout << dump_json({{"events", metrics.events},
                              {"windows", metrics.windows.size()},
                              {"reads", reads},
                              {"hits", hits}})
                << "\n";
      return kExitOk;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
