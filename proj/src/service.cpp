#include "cursive/service.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "cursive/error.hpp"
#include "cursive/render.hpp"
#include "cursive/wordbank.hpp"

namespace cursive {

SampleStore::SampleStore(std::string path) : path_(std::move(path)) {}

std::size_t SampleStore::append(const std::vector<SampleRecord>& records) {
  std::lock_guard lock(mutex_);
  if (!count_) {
    std::size_t n = 0;
    std::ifstream in(path_);
    for (std::string line; std::getline(in, line);) n += !line.empty();
    count_ = n;
  }
  const auto parent = std::filesystem::path(path_).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::string chunk;
  for (const auto& r : records) chunk += record_to_json(r).dump() + "\n";
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out << chunk;
  out.flush();
  if (!out) throw ArtifactError("cannot append to " + path_);
  *count_ += records.size();
  return *count_;
}

std::vector<SampleRecord> SampleStore::load() const {
  std::lock_guard lock(mutex_);
  std::vector<SampleRecord> out;
  std::ifstream in(path_);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line); ++line_no) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError("$[" + std::to_string(out.size()) + "]", "line " + std::to_string(line_no + 1) + ": " + e.what());
    }
    out.push_back(record_from_json(j, "$[" + std::to_string(out.size()) + "]"));
  }
  count_ = out.size();
  return out;
}

std::size_t SampleStore::size() const {
  {
    std::lock_guard lock(mutex_);
    if (count_) return *count_;
  }
  return load().size();
}

HttpResult error_result(int status, const std::string& code, const std::string& message, const std::string& path) {
  return {status, {{"code", code}, {"message", message}, {"path", path}}};
}

Service::Service(ProjectConfig project, std::optional<Checkpoint> checkpoint, const std::string& store_path)
    : project_(std::move(project)), hash_(project_.hash()), store_(store_path) {
  if (checkpoint) {
    model_ = std::make_unique<LoadedModel>(*checkpoint);
    sampler_ = std::make_unique<Sampler>(*model_);
  }
  bank_ = generate_bank(project_.seed, project_.wordbank, project_.prompt_bank_size);
}

HttpResult Service::health() const {
  return {200,
          {{"status", "ok"},
           {"checkpoint_loaded", has_model()},
           {"config_hash", hash_},
           {"model_config_hash", model_ ? model_->config_hash : ""},
           {"samples", store_.size()}}};
}

HttpResult Service::prompt() {
  std::lock_guard lock(prompt_mutex_);
  const std::size_t index = next_prompt_ % bank_.size();
  ++next_prompt_;
  return {200, {{"word", bank_[index]}, {"index", index}, {"bank_size", bank_.size()}}};
}

HttpResult Service::post_samples(const std::string& body) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return error_result(400, "invalid_json", e.what());
  }
  std::vector<SampleRecord> records;
  try {
    records = ingest_document(doc);
  } catch (const SchemaError& e) {
    return error_result(422, "schema", e.what(), e.path());
  }
  const std::size_t total = store_.append(records);
  return {200, {{"accepted", records.size()}, {"total", total}}};
}

HttpResult Service::export_samples() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : store_.load()) out.push_back(record_to_json(r));
  return {200, out};
}

namespace {

struct RequestError {
  std::string path;
  std::string message;
};

template <typename V>
V get_field(const nlohmann::json& j, const char* key, V fallback, bool required = false) {
  const std::string path = std::string("$.") + key;
  if (!j.contains(key) || j[key].is_null()) {
    if (required) throw RequestError{path, "missing"};
    return fallback;
  }
  try {
    return j[key].get<V>();
  } catch (const nlohmann::json::exception&) {
    throw RequestError{path, "has the wrong type"};
  }
}

SamplingConfig sampling_from(const nlohmann::json& req, int max_context) {
  SamplingConfig sc;
  sc.temperature = get_field<double>(req, "temperature", 1.0);
  sc.seed = get_field<std::uint64_t>(req, "seed", 0);
  sc.max_tokens = get_field<int>(req, "max_tokens", max_context);
  if (!std::isfinite(sc.temperature) || sc.temperature <= 0.0) throw RequestError{"$.temperature", "must be positive"};
  if (sc.max_tokens < 2 || sc.max_tokens > max_context) {
    throw RequestError{"$.max_tokens", "must be in [2, " + std::to_string(max_context) + "]"};
  }
  return sc;
}

HttpResult page_result(const GeneratedPage& page, int line_width) {
  SvgOptions opt;
  opt.line_width_chars = line_width;
  return {200, {{"page", page_to_json(page, line_width)}, {"svg", render_svg(page, opt)}}};
}

}  // namespace

HttpResult Service::generate(const std::string& body) const {
  if (!sampler_) return error_result(503, "no_checkpoint", "no checkpoint is loaded");
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return error_result(400, "invalid_json", e.what());
  }
  if (!req.is_object()) return error_result(400, "invalid_request", "request must be an object");
  try {
    const auto text = get_field<std::string>(req, "text", "", true);
    const int width = get_field<int>(req, "line_width", 40);
    if (width < 1) throw RequestError{"$.line_width", "must be positive"};
    const SamplingConfig sc = sampling_from(req, model_->model.config().max_stroke_context);
    GeneratedPage page;
    try {
      page = generate_page(*sampler_, text, sc, model_->config_hash);
    } catch (const std::invalid_argument& e) {
      throw RequestError{"$.text", e.what()};
    }
    return page_result(page, width);
  } catch (const RequestError& e) {
    return error_result(400, "invalid_request", e.message, e.path);
  }
}

HttpResult Service::regenerate(const std::string& body) const {
  if (!sampler_) return error_result(503, "no_checkpoint", "no checkpoint is loaded");
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return error_result(400, "invalid_json", e.what());
  }
  if (!req.is_object()) return error_result(400, "invalid_request", "request must be an object");
  try {
    if (!req.contains("page")) throw RequestError{"$.page", "missing"};
    GeneratedPage page;
    try {
      page = page_from_json(req["page"]);
    } catch (const SchemaError& e) {
      return error_result(422, "schema", e.what(), "$.page" + e.path().substr(1));
    }
    const auto indices = get_field<std::vector<std::size_t>>(req, "word_indices", {}, true);
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] >= page.spans.size()) {
        throw RequestError{"$.word_indices[" + std::to_string(k) + "]",
                           "word " + std::to_string(indices[k]) + " is out of range for " +
                               std::to_string(page.spans.size()) + " words"};
      }
    }
    const int width = get_field<int>(req, "line_width", 40);
    if (width < 1) throw RequestError{"$.line_width", "must be positive"};
    const SamplingConfig sc = sampling_from(req, model_->model.config().max_stroke_context);
    GeneratedPage out;
    try {
      out = cursive::regenerate(*sampler_, page, indices, sc);
    } catch (const std::invalid_argument& e) {
      throw RequestError{"$.page", e.what()};
    }
    return page_result(out, width);
  } catch (const RequestError& e) {
    return error_result(400, "invalid_request", e.message, e.path);
  }
}

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;

  explicit Impl(Service& s) : service(s) {
    auto send = [](httplib::Response& res, const HttpResult& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    auto guarded = [send](auto&& fn) {
      return [fn, send](const httplib::Request& req, httplib::Response& res) {
        try {
          send(res, fn(req));
        } catch (const std::exception& e) {
          send(res, error_result(500, "internal", e.what()));
        }
      };
    };
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Get("/health", guarded([this](const httplib::Request&) { return service.health(); }));
    server.Get("/prompt", guarded([this](const httplib::Request&) { return service.prompt(); }));
    server.Post("/samples", guarded([this](const httplib::Request& r) { return service.post_samples(r.body); }));
    server.Get("/samples/export", guarded([this](const httplib::Request&) { return service.export_samples(); }));
    server.Post("/generate", guarded([this](const httplib::Request& r) { return service.generate(r.body); }));
    server.Post("/regenerate", guarded([this](const httplib::Request& r) { return service.regenerate(r.body); }));
    server.set_error_handler([send](const httplib::Request& req, httplib::Response& res) {
      if (res.status == 404) send(res, error_result(404, "not_found", "no endpoint " + req.method + " " + req.path));
    });
  }
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw ArtifactError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace cursive
