#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <string_view>

#include "rboard/error.hpp"

namespace rboard {

class Platform;

inline constexpr std::size_t kDefaultPageLimit = 100;
inline constexpr std::size_t kMaxPageLimit = 1000;

struct ApiConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  // Tokens allowed to submit. Empty means submissions are refused.
  std::set<std::string, std::less<>> submit_tokens;
  // Token allowed to register datasets. Empty disables the endpoint.
  std::string admin_token;
  // Requests above this size are answered with 413 before being read.
  std::uint64_t max_request_bytes = 512ULL << 20;

  // RBOARD_LISTEN ("host:port"), RBOARD_TOKENS (comma separated) or
  // RBOARD_TOKEN, RBOARD_ADMIN_TOKEN.
  static ApiConfig from_env();
};

// HTTP status for an error code.
int http_status(ErrorCode code) noexcept;

// JSON over HTTP below /api/v1. Reads are public; submissions need a
// submit token and dataset registration the admin token.
class ApiServer {
 public:
  ApiServer(Platform& platform, ApiConfig config);
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;
  ~ApiServer();

  // Binds the listening socket and returns the port. Throws Io on failure.
  int bind();
  // Serves until stop(); bind() must have succeeded.
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rboard
