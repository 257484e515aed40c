// rboard: operator and researcher command line for the benchmark platform.
//
// Exit codes: 0 success, 2 user or contract error, 3 transport error.

#include <signal.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "rboard/api.hpp"
#include "rboard/error.hpp"
#include "rboard/evaluation.hpp"
#include "rboard/fsutil.hpp"
#include "rboard/platform.hpp"
#include "rboard/sha256.hpp"

namespace {

using nlohmann::json;

constexpr int kOk = 0;
constexpr int kUserError = 2;
constexpr int kTransportError = 3;

// A failure already reported to the user; carries the exit code.
struct Exit {
  int code;
};

[[noreturn]] void fail(int code, const std::string& message) {
  std::cerr << "rboard: " << message << '\n';
  throw Exit{code};
}

std::string env_or(const char* name, std::string fallback) {
  const char* value = std::getenv(name);
  return value != nullptr && *value != '\0' ? std::string(value) : std::move(fallback);
}

rboard::TaskType task_arg(const std::string& text) {
  const auto task = rboard::parse_task(text);
  if (!task) fail(kUserError, "task must be ctr or topn, got '" + text + "'");
  return *task;
}

std::string read_input(const std::string& path) {
  try {
    return rboard::read_file(path);
  } catch (const rboard::Error&) {
    fail(kUserError, "cannot read " + path);
  }
}

std::string number(double value) { return json(value).dump(); }

class Client {
 public:
  explicit Client(const std::string& url) : url_(url), http_(url) {
    if (!http_.is_valid()) fail(kUserError, "invalid server URL '" + url + "'");
    http_.set_connection_timeout(5);
    http_.set_read_timeout(300);
    http_.set_write_timeout(300);
  }

  httplib::Result check(httplib::Result result) {
    if (!result) {
      fail(kTransportError, "cannot reach " + url_ + ": " + httplib::to_string(result.error()));
    }
    if (result->status >= 400) {
      std::string message = "HTTP " + std::to_string(result->status);
      try {
        const json body = json::parse(result->body);
        message = body.at("code").get<std::string>() + ": " + body.at("message").get<std::string>();
      } catch (const std::exception&) {
      }
      // Server-side failures are not the caller's fault.
      fail(result->status >= 500 ? kTransportError : kUserError, message);
    }
    return result;
  }

  httplib::Result get(const std::string& path) { return check(http_.Get(path)); }

  httplib::Result post(const std::string& path, const httplib::MultipartFormDataItems& items,
                       const std::string& bearer = {}) {
    httplib::Headers headers;
    if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);
    return check(http_.Post(path, headers, items));
  }

 private:
  std::string url_;
  httplib::Client http_;
};

bool all_runs_terminal(const json& detail) {
  const std::string status = detail.at("status");
  return status == "Completed" || status == "Failed";
}

void print_status(const json& detail) {
  std::cout << "submission " << detail.at("submission_id").get<std::string>() << "  "
            << detail.at("status").get<std::string>() << "  task "
            << detail.at("task").get<std::string>() << '\n';
  std::cout << std::left << std::setw(24) << "dataset" << std::setw(15) << "status"
            << std::setw(12) << "wall_s" << "metric" << '\n';
  for (const auto& run : detail.at("runs")) {
    std::ostringstream metric;
    if (!run.at("metrics").is_null()) {
      const std::string primary = run.at("primary_metric");
      metric << primary << '=' << number(run.at("metrics").at(primary).get<double>());
    } else if (!run.at("detail").get<std::string>().empty()) {
      metric << run.at("detail").get<std::string>();
    }
    std::ostringstream wall;
    wall << std::fixed << std::setprecision(2) << run.at("wall_clock_seconds").get<double>();
    std::cout << std::setw(24) << run.at("dataset_id").get<std::string>() << std::setw(15)
              << run.at("status").get<std::string>() << std::setw(12) << wall.str()
              << metric.str() << '\n';
  }
}

void print_leaderboard(const json& entries) {
  if (entries.empty()) {
    std::cout << "no entries\n";
    return;
  }
  std::size_t position = 0;
  for (const auto& entry : entries) {
    ++position;
    std::ostringstream line;
    line << std::left << std::setw(4) << (entry.at("eligible").get<bool>() ? std::to_string(position) : "-")
         << std::setw(22) << entry.at("submission_id").get<std::string>() << std::setw(16)
         << entry.at("author").get<std::string>();
    if (entry.at("mean_rank").is_null()) {
      line << "mean_rank=n/a";
    } else {
      line << "mean_rank=" << number(entry.at("mean_rank").get<double>());
    }
    line << "  runtime=" << std::fixed << std::setprecision(2)
         << entry.at("total_runtime_seconds").get<double>() << "s";
    std::cout << line.str() << '\n';
    for (const auto& [dataset, standing] : entry.at("per_dataset").items()) {
      std::cout << "      " << std::setw(24) << dataset << std::setw(15)
                << standing.at("status").get<std::string>();
      if (!standing.at("rank").is_null()) std::cout << "rank " << standing.at("rank").get<int>() << "  ";
      for (const auto& [name, value] : standing.at("metrics").items()) {
        std::cout << name << '=' << number(value.get<double>()) << ' ';
      }
      std::cout << '\n';
    }
  }
}

void write_output(const std::string& path, const std::string& bytes) {
  try {
    rboard::write_file_atomic(path, bytes);
  } catch (const rboard::Error& e) {
    fail(kUserError, "cannot write " + path + ": " + e.what());
  }
}

int serve(const std::string& root, const std::string& listen) {
  if (!root.empty()) ::setenv("RBOARD_ROOT", root.c_str(), 1);
  if (!listen.empty()) ::setenv("RBOARD_LISTEN", listen.c_str(), 1);

  // Signals are taken by a dedicated thread; every other thread inherits the mask.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);
  ::signal(SIGPIPE, SIG_IGN);

  rboard::Platform platform(rboard::PlatformConfig::from_env());
  const auto api_config = rboard::ApiConfig::from_env();
  if (api_config.submit_tokens.empty()) {
    std::cerr << "rboard: warning: no RBOARD_TOKENS configured, submissions will be refused\n";
  }
  for (const auto& dataset : platform.registry().list_datasets()) {
    const auto report = platform.verify_dataset(dataset.dataset_id);
    if (!report.matches_stored) {
      std::cerr << "rboard: warning: stored bundles of " << dataset.dataset_id
                << " differ from a fresh preparation\n";
    }
  }
  platform.start();
  rboard::ApiServer server(platform, api_config);
  const int port = server.bind();
  std::cout << "listening on " << api_config.host << ':' << port << std::endl;

  std::thread waiter([&] {
    int received = 0;
    sigwait(&stop_signals, &received);
    server.stop();
  });
  server.serve();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  platform.stop();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reproducible recommender benchmark platform"};
  app.require_subcommand(1);
  std::string url = env_or("RBOARD_URL", "http://127.0.0.1:8080");
  app.add_option("--url", url, "Server URL (env RBOARD_URL)");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the API server and worker pool");
  std::string serve_root;
  std::string serve_listen;
  serve_cmd->add_option("--root", serve_root, "Data directory (env RBOARD_ROOT)");
  serve_cmd->add_option("--listen", serve_listen, "host:port (env RBOARD_LISTEN)");

  // dataset register
  auto* dataset_cmd = app.add_subcommand("dataset", "Dataset administration");
  dataset_cmd->require_subcommand(1);
  auto* register_cmd = dataset_cmd->add_subcommand("register", "Register a raw dataset");
  std::string reg_task, reg_schema, reg_raw, reg_id, reg_root;
  std::string admin_token = env_or("RBOARD_ADMIN_TOKEN", "");
  register_cmd->add_option("--task", reg_task, "ctr or topn")->required();
  register_cmd->add_option("--schema", reg_schema, "Schema JSON file")->required();
  register_cmd->add_option("--raw", reg_raw, "Raw CSV file")->required();
  register_cmd->add_option("--id", reg_id, "Dataset id ([a-z0-9-]{1,64})")->required();
  register_cmd->add_option("--root", reg_root,
                           "Register directly into this data directory instead of the server");
  register_cmd->add_option("--admin-token", admin_token, "env RBOARD_ADMIN_TOKEN");

  auto* datasets_cmd = app.add_subcommand("datasets", "List registered datasets");
  bool datasets_json = false;
  datasets_cmd->add_flag("--json", datasets_json, "Print the API payload");

  // submit
  auto* submit_cmd = app.add_subcommand("submit", "Upload a submission archive");
  std::string sub_task, sub_archive, sub_author;
  std::string token = env_or("RBOARD_TOKEN", "");
  submit_cmd->add_option("--task", sub_task, "ctr or topn")->required();
  submit_cmd->add_option("--archive", sub_archive, "Zip with main.py at its root")->required();
  submit_cmd->add_option("--author", sub_author, "Author name")->required();
  submit_cmd->add_option("--token", token, "Submission token (env RBOARD_TOKEN)");

  // status
  auto* status_cmd = app.add_subcommand("status", "Show the runs of a submission");
  std::string status_id;
  bool watch = false;
  bool status_json = false;
  status_cmd->add_option("submission_id", status_id)->required();
  status_cmd->add_flag("--watch", watch, "Poll every 2 s until all runs are terminal");
  status_cmd->add_flag("--json", status_json, "Print the API payload");

  // leaderboard
  auto* board_cmd = app.add_subcommand("leaderboard", "Print the standings of a task");
  std::string board_task;
  bool board_json = false;
  board_cmd->add_option("task", board_task, "ctr or topn")->required();
  board_cmd->add_flag("--json", board_json, "Print the API payload");

  // eval-local
  auto* eval_cmd = app.add_subcommand("eval-local", "Score a prediction file offline");
  std::string eval_task, eval_predictions, eval_truth;
  bool eval_json = false;
  eval_cmd->add_option("--task", eval_task, "ctr or topn")->required();
  eval_cmd->add_option("--predictions", eval_predictions, "Prediction CSV")->required();
  eval_cmd->add_option("--truth", eval_truth, "Ground truth CSV")->required();
  eval_cmd->add_flag("--json", eval_json, "Print metrics as JSON");

  // logs
  auto* logs_cmd = app.add_subcommand("logs", "Print the captured output of a run");
  std::string logs_run;
  logs_cmd->add_option("run_id", logs_run)->required();

  // download
  auto* download_cmd = app.add_subcommand("download", "Download archives");
  download_cmd->require_subcommand(1);
  std::string out_path;
  std::string download_id;
  auto* code_cmd = download_cmd->add_subcommand("code", "Code archive of a submission");
  code_cmd->add_option("submission_id", download_id)->required();
  code_cmd->add_option("-o,--out", out_path, "Output file")->required();
  auto* bundle_cmd = download_cmd->add_subcommand("bundle", "Public bundle of a dataset");
  bundle_cmd->add_option("dataset_id", download_id)->required();
  bundle_cmd->add_option("-o,--out", out_path, "Output file")->required();
  auto* prep_cmd =
      download_cmd->add_subcommand("preprocessing", "Preprocessing code of a dataset");
  prep_cmd->add_option("dataset_id", download_id)->required();
  prep_cmd->add_option("-o,--out", out_path, "Output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUserError;
  }

  try {
    if (*serve_cmd) return serve(serve_root, serve_listen);

    if (*register_cmd) {
      const auto task = task_arg(reg_task);
      const std::string schema_text = read_input(reg_schema);
      const std::string raw = read_input(reg_raw);
      if (!reg_root.empty()) {
        rboard::PlatformConfig config = rboard::PlatformConfig::from_env();
        config.root = reg_root;
        rboard::Platform platform(config);
        const auto request = rboard::registration_from_json(reg_id, task, json::parse(schema_text));
        std::cout << platform.register_dataset(request, raw).dataset_id << '\n';
        return kOk;
      }
      Client client(url);
      const auto res = client.post("/api/v1/datasets",
                                   {{"id", reg_id, "", ""},
                                    {"task", reg_task, "", ""},
                                    {"schema", schema_text, "schema.json", "application/json"},
                                    {"raw", raw, "raw.csv", "text/csv"}},
                                   admin_token);
      std::cout << json::parse(res->body).at("dataset_id").get<std::string>() << '\n';
      return kOk;
    }

    if (*datasets_cmd) {
      Client client(url);
      const auto res = client.get("/api/v1/datasets?limit=1000");
      if (datasets_json) {
        std::cout << res->body;
        return kOk;
      }
      const json datasets = json::parse(res->body);
      if (datasets.empty()) std::cout << "no datasets\n";
      for (const auto& d : datasets) {
        std::cout << std::left << std::setw(24) << d.at("dataset_id").get<std::string>()
                  << std::setw(6) << d.at("task").get<std::string>()
                  << d.at("name").get<std::string>() << '\n';
      }
      return kOk;
    }

    if (*submit_cmd) {
      task_arg(sub_task);
      const std::string archive = read_input(sub_archive);
      Client client(url);
      const auto res = client.post("/api/v1/submissions",
                                   {{"task", sub_task, "", ""},
                                    {"author", sub_author, "", ""},
                                    {"archive", archive, "submission.zip", "application/zip"}},
                                   token);
      std::cout << json::parse(res->body).at("submission_id").get<std::string>() << '\n';
      return kOk;
    }

    if (*status_cmd) {
      Client client(url);
      for (;;) {
        const auto res = client.get("/api/v1/submissions/" + status_id);
        const json detail = json::parse(res->body);
        if (!watch || all_runs_terminal(detail)) {
          if (status_json) {
            std::cout << res->body;
          } else {
            print_status(detail);
          }
          return kOk;
        }
        if (!status_json) {
          print_status(detail);
          std::cout << '\n';
        }
        std::this_thread::sleep_for(std::chrono::seconds(2));
      }
    }

    if (*board_cmd) {
      Client client(url);
      const auto res = client.get("/api/v1/leaderboard/" + board_task);
      if (board_json) {
        std::cout << res->body;
      } else {
        print_leaderboard(json::parse(res->body));
      }
      return kOk;
    }

    if (*eval_cmd) {
      const auto task = task_arg(eval_task);
      const auto result = rboard::evaluate_predictions(task, read_input(eval_predictions),
                                                       read_input(eval_truth));
      if (eval_json) {
        std::cout << rboard::to_json(result).dump() << '\n';
      } else {
        for (const auto& [name, value] : result.metrics) std::cout << name << '=' << number(value) << '\n';
      }
      return kOk;
    }

    if (*logs_cmd) {
      Client client(url);
      const auto res = client.get("/api/v1/runs/" + logs_run + "/logs");
      std::cout << json::parse(res->body).at("log").get<std::string>();
      return kOk;
    }

    if (*download_cmd) {
      Client client(url);
      std::string path;
      if (*code_cmd) path = "/api/v1/submissions/" + download_id + "/code";
      if (*bundle_cmd) path = "/api/v1/datasets/" + download_id + "/bundle";
      if (*prep_cmd) path = "/api/v1/datasets/" + download_id + "/preprocessing";
      const auto res = client.get(path);
      const std::string expected = res->get_header_value("X-Checksum-SHA256");
      const std::string actual = rboard::sha256_hex(res->body);
      if (!expected.empty() && expected != actual) {
        fail(kTransportError, "checksum mismatch: expected " + expected + ", got " + actual);
      }
      write_output(out_path, res->body);
      std::cout << actual << "  " << out_path << '\n';
      return kOk;
    }
  } catch (const Exit& e) {
    return e.code;
  } catch (const rboard::Error& e) {
    std::cerr << "rboard: " << rboard::machine_code(e.code()) << ": " << e.what() << '\n';
    return kUserError;
  } catch (const json::exception& e) {
    std::cerr << "rboard: malformed JSON: " << e.what() << '\n';
    return kUserError;
  } catch (const std::exception& e) {
    std::cerr << "rboard: " << e.what() << '\n';
    return 1;
  }
  return kOk;
}
