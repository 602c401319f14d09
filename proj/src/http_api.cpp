#include "hyperfeed/http_api.hpp"

#include <charconv>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "hyperfeed/json_io.hpp"

namespace hyperfeed {

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(dump_json(body), kJson);
}

void send_error(httplib::Response& res, const ApiError& e) { send_json(res, e.status(), e.body()); }

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ApiError(400, "BadJson", std::string("request body is not valid JSON: ") + e.what());
  }
}

double parse_coordinate(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) throw ApiError(400, "MissingField", std::string("query parameter '") + name + "' is required", name);
  const std::string v = req.get_param_value(name);
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ApiError(400, "OutOfRange", std::string("'") + name + "' is not a number", name);
  }
  return x;
}

std::uint64_t parse_unsigned(const std::string& v, const char* name) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ApiError(400, "OutOfRange", std::string("'") + name + "' is not an unsigned integer", name);
  }
  return x;
}

std::optional<Timestamp> now_override(const Engine& engine, const httplib::Request& req) {
  if (!engine.config().test_mode || !req.has_header(kNowHeader)) return std::nullopt;
  try {
    return Timestamp::parse(req.get_header_value(kNowHeader));
  } catch (const std::invalid_argument& e) {
    throw ApiError(400, "OutOfRange", std::string(kNowHeader) + ": " + e.what(), kNowHeader);
  }
}

// Runs a handler, mapping exceptions onto the error body contract.
template <typename F>
auto guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ApiError& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_error(res, ApiError(500, "Internal", e.what()));
    }
  };
}

}  // namespace

HttpApi::HttpApi(Engine& engine) : engine_(engine), server_(std::make_unique<httplib::Server>()) { install_routes(); }

HttpApi::~HttpApi() { stop(); }

void HttpApi::install_routes() {
  auto& s = *server_;

  s.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });

  s.Post("/v1/news", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const std::string id = engine_.post_news(parse_body(req));
           send_json(res, 201, {{"id", id}});
         }));

  s.Post("/v1/events", guarded([this](const httplib::Request& req, httplib::Response& res) {
           engine_.post_event(parse_body(req));
           send_json(res, 202, {{"status", "accepted"}});
         }));

  s.Get("/v1/recommendations", guarded([this](const httplib::Request& req, httplib::Response& res) {
          RecommendQuery q;
          q.user_id = req.get_param_value("user_id");
          if (q.user_id.empty()) throw ApiError(400, "MissingField", "query parameter 'user_id' is required", "user_id");
          q.location = {parse_coordinate(req, "lat"), parse_coordinate(req, "lon")};
          if (req.has_param("limit")) q.limit = parse_unsigned(req.get_param_value("limit"), "limit");
          if (req.has_param("seed")) q.seed = parse_unsigned(req.get_param_value("seed"), "seed");
          q.now = now_override(engine_, req);
          const auto result = engine_.recommend(q);
          send_json(res, 200, engine_.recommendations_json(result));
        }));

  s.Post(R"(/v1/users/([^/]+)/follows)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto body = parse_body(req);
           const auto it = body.find("followee_id");
           if (it == body.end() || !it->is_string()) {
             throw ApiError(400, "MissingField", "'followee_id' is required", "followee_id");
           }
           engine_.follow(req.matches[1], it->get<std::string>());
           res.status = 204;
         }));

  s.Get(R"(/v1/users/([^/]+)/profile)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const std::string user = req.matches[1];
          const auto profile = engine_.profile_json(user);
          if (!profile) throw ApiError(404, "UnknownUser", "user '" + user + "' has no profile", "user_id");
          send_json(res, 200, *profile);
        }));

  s.Post("/v1/admin/batch", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto summary = engine_.run_batch(now_override(engine_, req));
           send_json(res, 200,
                     {{"similarity_rows", summary.similarity_rows},
                      {"base_rows", summary.base_rows},
                      {"as_of", summary.as_of.to_rfc3339()}});
         }));
}

int HttpApi::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpApi::serve() { return server_->listen_after_bind(); }

void HttpApi::stop() {
  if (server_) server_->stop();
}

}  // namespace hyperfeed
