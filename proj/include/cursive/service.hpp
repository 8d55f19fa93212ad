#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cursive/model/checkpoint.hpp"
#include "cursive/project.hpp"
#include "cursive/record.hpp"
#include "cursive/sampler.hpp"

namespace cursive {

/// Append-only newline-delimited JSON file of canonical SampleRecords. One
/// writer at a time; every append is flushed before it returns.
class SampleStore {
 public:
  explicit SampleStore(std::string path);

  const std::string& path() const noexcept { return path_; }
  /// Returns the record count after the append.
  std::size_t append(const std::vector<SampleRecord>& records);
  std::vector<SampleRecord> load() const;
  std::size_t size() const;

 private:
  std::string path_;
  mutable std::mutex mutex_;
  mutable std::optional<std::size_t> count_;
};

struct HttpResult {
  int status = 200;
  nlohmann::json body;
};

/// Error body shared by every endpoint.
HttpResult error_result(int status, const std::string& code, const std::string& message, const std::string& path = "$");

/// Request handlers of the local service, independent of the HTTP transport.
class Service {
 public:
  Service(ProjectConfig project, std::optional<Checkpoint> checkpoint, const std::string& store_path);

  bool has_model() const noexcept { return model_ != nullptr; }

  HttpResult health() const;
  /// Next word of the seeded prompt bank, cycling.
  HttpResult prompt();
  HttpResult post_samples(const std::string& body);
  HttpResult export_samples() const;
  HttpResult generate(const std::string& body) const;
  HttpResult regenerate(const std::string& body) const;

 private:
  ProjectConfig project_;
  std::string hash_;
  std::unique_ptr<LoadedModel> model_;
  std::unique_ptr<Sampler> sampler_;
  SampleStore store_;
  std::vector<std::string> bank_;
  std::mutex prompt_mutex_;
  std::size_t next_prompt_ = 0;
};

/// HTTP binding of a Service: GET /health, GET /prompt, POST /samples,
/// GET /samples/export, POST /generate, POST /regenerate.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds to `host:port` (port 0 picks a free one) and returns the port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cursive
