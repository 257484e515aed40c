#include "rboard/api.hpp"

#include <openssl/crypto.h>

#include <charconv>
#include <cstdlib>
#include <iostream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "rboard/platform.hpp"
#include "rboard/sha256.hpp"

namespace rboard {
using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";
constexpr const char* kZip = "application/zip";

std::string dump(const json& value) {
  return value.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
}

const char* reason(int status) {
  switch (status) {
    case 400: return "bad_request";
    case 401: return "unauthorized";
    case 404: return "not_found";
    case 405: return "method_not_allowed";
    case 409: return "conflict";
    case 413: return "payload_too_large";
    default: return status >= 500 ? "internal_error" : "request_error";
  }
}

void send_error(httplib::Response& res, int status, std::string_view code,
                std::string_view message) {
  res.status = status;
  res.set_content(dump({{"status", status}, {"code", code}, {"message", message}}), kJson);
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(dump(body), kJson);
}

void send_zip(httplib::Response& res, std::string bytes, const std::string& filename) {
  res.set_header("X-Checksum-SHA256", sha256_hex(bytes));
  res.set_header("Content-Disposition", "attachment; filename=\"" + filename + "\"");
  res.set_content(std::move(bytes), kZip);
}

// Runs a handler and turns exceptions into JSON errors. Messages of
// internal failures are not passed on.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    const int status = http_status(e.code());
    if (status >= 500) {
      std::cerr << "rboard: " << e.what() << '\n';
      send_error(res, status, machine_code(e.code()), "internal error");
    } else {
      send_error(res, status, machine_code(e.code()), e.what());
    }
  } catch (const json::exception& e) {
    send_error(res, 400, "invalid_argument", std::string("malformed JSON: ") + e.what());
  } catch (const std::exception& e) {
    std::cerr << "rboard: " << e.what() << '\n';
    send_error(res, 500, "internal_error", "internal error");
  }
}

std::size_t page_param(const httplib::Request& req, const char* name, std::size_t fallback,
                       std::size_t max) {
  if (!req.has_param(name)) return fallback;
  const std::string text = req.get_param_value(name);
  std::size_t value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size() || value > max) {
    throw Error(ErrorCode::InvalidArgument, std::string("query parameter '") + name +
                                                "' must be an integer in [0, " +
                                                std::to_string(max) + "]");
  }
  return value;
}

json paginate(const httplib::Request& req, const json& items) {
  const std::size_t offset = page_param(req, "offset", 0, SIZE_MAX);
  const std::size_t limit = page_param(req, "limit", kDefaultPageLimit, kMaxPageLimit);
  json page = json::array();
  for (std::size_t i = offset; i < items.size() && page.size() < limit; ++i) {
    page.push_back(items[i]);
  }
  return page;
}

std::optional<TaskType> task_param(const httplib::Request& req) {
  if (!req.has_param("task")) return std::nullopt;
  const auto task = parse_task(req.get_param_value("task"));
  if (!task) throw Error(ErrorCode::InvalidArgument, "task must be ctr or topn");
  return task;
}

std::string form_value(const httplib::Request& req, const char* name) {
  if (!req.has_file(name)) return {};
  return req.get_file_value(name).content;
}

std::string bearer_token(const httplib::Request& req) {
  const std::string header = req.get_header_value("Authorization");
  constexpr std::string_view kPrefix = "Bearer ";
  if (header.size() > kPrefix.size() && header.compare(0, kPrefix.size(), kPrefix) == 0) {
    return header.substr(kPrefix.size());
  }
  return {};
}

bool same_secret(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

std::string require_field(const httplib::Request& req, const char* name) {
  std::string value = form_value(req, name);
  if (value.empty()) {
    throw Error(ErrorCode::InvalidArgument, std::string("missing form field '") + name + "'");
  }
  return value;
}

TaskType require_task(std::string_view text) {
  const auto task = parse_task(text);
  if (!task) throw Error(ErrorCode::InvalidArgument, "task must be ctr or topn");
  return *task;
}

}  // namespace

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Unauthorized: return 401;
    case ErrorCode::ArchiveTooLarge: return 413;
    case ErrorCode::DuplicateId:
    case ErrorCode::InvalidState:
    case ErrorCode::NoDatasetsForTask:
    case ErrorCode::ImmutableRecord: return 409;
    case ErrorCode::IntegrityError:
    case ErrorCode::Io: return 500;
    default: return 400;
  }
}

ApiConfig ApiConfig::from_env() {
  ApiConfig config;
  if (const char* listen = std::getenv("RBOARD_LISTEN"); listen != nullptr && *listen != '\0') {
    const std::string text(listen);
    const auto colon = text.rfind(':');
    int port = -1;
    if (colon != std::string::npos) {
      const auto [end, ec] =
          std::from_chars(text.data() + colon + 1, text.data() + text.size(), port);
      if (ec != std::errc{} || end != text.data() + text.size()) port = -1;
    }
    if (colon == std::string::npos || port < 0 || port > 65535) {
      throw Error(ErrorCode::InvalidArgument, "RBOARD_LISTEN must be host:port, got '" + text + "'");
    }
    config.host = colon == 0 ? "0.0.0.0" : text.substr(0, colon);
    config.port = port;
  }
  auto add_tokens = [&](const char* variable) {
    const char* raw = std::getenv(variable);
    if (raw == nullptr) return;
    std::string_view rest(raw);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto token = rest.substr(0, comma);
      if (!token.empty()) config.submit_tokens.emplace(token);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
  };
  add_tokens("RBOARD_TOKENS");
  add_tokens("RBOARD_TOKEN");
  if (const char* admin = std::getenv("RBOARD_ADMIN_TOKEN")) config.admin_token = admin;
  return config;
}

struct ApiServer::Impl {
  Impl(Platform& p, ApiConfig c) : platform(p), config(std::move(c)) { routes(); }

  bool authorized_submitter(const httplib::Request& req) const {
    std::string token = form_value(req, "token");
    if (token.empty()) token = bearer_token(req);
    if (token.empty()) return false;
    bool ok = false;
    for (const auto& allowed : config.submit_tokens) ok = same_secret(token, allowed) || ok;
    return ok;
  }

  bool authorized_admin(const httplib::Request& req) const {
    std::string token = bearer_token(req);
    if (token.empty()) token = form_value(req, "token");
    return !config.admin_token.empty() && same_secret(token, config.admin_token);
  }

  void routes() {
    server.set_payload_max_length(config.max_request_bytes);
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
      const std::string message =
          res.status == 404 ? "no such resource" : httplib::status_message(res.status);
      send_error(res, res.status, reason(res.status), message);
      return httplib::Server::HandlerResponse::Handled;
    });
    server.set_exception_handler(
        [](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
          send_error(res, 500, "internal_error", "internal error");
        });

    server.Get("/api/v1/health", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, {{"status", "ok"}});
    });

    server.Get("/api/v1/datasets", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        json items = json::array();
        for (const auto& d : platform.registry().list_datasets(task_param(req))) {
          items.push_back(to_json(d));
        }
        send_json(res, paginate(req, items));
      });
    });

    server.Post("/api/v1/datasets", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (!authorized_admin(req)) {
          throw Error(ErrorCode::Unauthorized, "a valid admin token is required");
        }
        const TaskType task = require_task(require_field(req, "task"));
        const json schema = json::parse(require_field(req, "schema"));
        const std::string raw = require_field(req, "raw");
        const auto request = registration_from_json(require_field(req, "id"), task, schema);
        send_json(res, to_json(platform.register_dataset(request, raw)), 201);
      });
    });

    server.Get(R"(/api/v1/datasets/([a-z0-9-]{1,64}))",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   send_json(res, to_json(platform.registry().get_dataset(req.matches[1].str())));
                 });
               });

    server.Get(R"(/api/v1/datasets/([a-z0-9-]{1,64})/bundle)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   const std::string id = req.matches[1].str();
                   send_zip(res, platform.bundle_archive(id), id + "-bundle.zip");
                 });
               });

    server.Get(R"(/api/v1/datasets/([a-z0-9-]{1,64})/preprocessing)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   const std::string id = req.matches[1].str();
                   send_zip(res, platform.preprocessing_archive(id), id + "-preprocessing.zip");
                 });
               });

    server.Post("/api/v1/submissions",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    if (!authorized_submitter(req)) {
                      throw Error(ErrorCode::Unauthorized, "a valid submission token is required");
                    }
                    const TaskType task = require_task(require_field(req, "task"));
                    const std::string author = require_field(req, "author");
                    if (!req.has_file("archive")) {
                      throw Error(ErrorCode::InvalidArgument, "missing form field 'archive'");
                    }
                    const Submission s =
                        platform.submit(req.get_file_value("archive").content, task, author);
                    send_json(res,
                              {{"submission_id", s.submission_id},
                               {"status", to_string(s.status)},
                               {"archive_checksum", s.archive_checksum},
                               {"run_ids", s.run_ids}},
                              201);
                  });
                });

    server.Get("/api/v1/submissions",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   json items = json::array();
                   for (auto& s : platform.list_submissions(task_param(req))) {
                     items.push_back(std::move(s));
                   }
                   send_json(res, paginate(req, items));
                 });
               });

    server.Get(R"(/api/v1/submissions/([a-z0-9-]{1,64}))",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] { send_json(res, platform.submission_detail(req.matches[1])); });
               });

    server.Get(R"(/api/v1/submissions/([a-z0-9-]{1,64})/code)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   const std::string id = req.matches[1].str();
                   CodeArchive code = platform.code_archive(id);
                   res.set_header("X-Checksum-SHA256", code.checksum);
                   res.set_header("Content-Disposition",
                                  "attachment; filename=\"" + id + ".zip\"");
                   res.set_content(std::move(code.bytes), kZip);
                 });
               });

    server.Get(R"(/api/v1/leaderboard/([^/]+))",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   const auto task = parse_task(req.matches[1].str());
                   if (!task) throw Error(ErrorCode::NotFound, "unknown task");
                   send_json(res, paginate(req, leaderboard_to_json(platform.leaderboard(*task))));
                 });
               });

    server.Get(R"(/api/v1/runs/([a-z0-9.-]{1,160})/logs)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   const std::string id = req.matches[1].str();
                   if (!is_valid_record_id(id)) throw Error(ErrorCode::NotFound, "unknown run");
                   const RunRecord run = platform.run(id);
                   send_json(res, {{"run_id", id},
                                   {"status", to_string(run.status)},
                                   {"log", platform.run_logs(id)}});
                 });
               });
  }

  Platform& platform;
  ApiConfig config;
  httplib::Server server;
};

ApiServer::ApiServer(Platform& platform, ApiConfig config)
    : impl_(std::make_unique<Impl>(platform, std::move(config))) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind() {
  const auto& config = impl_->config;
  if (config.port == 0) {
    const int port = impl_->server.bind_to_any_port(config.host);
    if (port < 0) throw Error(ErrorCode::Io, "cannot listen on " + config.host);
    return port;
  }
  if (!impl_->server.bind_to_port(config.host, config.port)) {
    throw Error(ErrorCode::Io,
                "cannot listen on " + config.host + ":" + std::to_string(config.port));
  }
  return config.port;
}

void ApiServer::serve() { impl_->server.listen_after_bind(); }

void ApiServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace rboard
