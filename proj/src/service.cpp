#include "livestyle/service.hpp"

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <random>

#include "httplib.h"

namespace livestyle::service {

using nlohmann::json;

namespace {

std::size_t env_size(const char* name, std::size_t fallback) {
  const char* v = std::getenv(name);
  if (!v || !*v) return fallback;
  char* end = nullptr;
  const unsigned long long parsed = std::strtoull(v, &end, 10);
  if (*end != '\0') throw InvalidParams(std::string(name) + " must be a positive integer");
  return static_cast<std::size_t>(parsed);
}

json error_body(const std::string& message) { return {{"error", message}}; }

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

void ServiceConfig::validate() const {
  if (max_upload_bytes == 0 || worker_count == 0 || max_image_side == 0 || !(job_retention_seconds > 0))
    throw InvalidParams("service configuration values must be positive");
  if (port < 0 || port > 65535) throw InvalidParams("port out of range");
}

ServiceConfig ServiceConfig::from_env() {
  ServiceConfig c;
  c.worker_count = env_size("LIVESTYLE_WORKERS", c.worker_count);
  c.max_upload_bytes = env_size("LIVESTYLE_MAX_UPLOAD_BYTES", c.max_upload_bytes);
  c.max_image_side = env_size("LIVESTYLE_MAX_IMAGE_SIDE", c.max_image_side);
  c.port = static_cast<int>(env_size("LIVESTYLE_PORT", static_cast<std::size_t>(c.port)));
  c.job_retention_seconds =
      static_cast<double>(env_size("LIVESTYLE_JOB_RETENTION", static_cast<std::size_t>(c.job_retention_seconds)));
  if (const char* d = std::getenv("LIVESTYLE_CHECKPOINT_DIR")) c.checkpoint_dir = d;
  if (const char* d = std::getenv("LIVESTYLE_STATIC_DIR")) c.static_dir = d;
  c.validate();
  return c;
}

const char* to_string(JobStatus s) {
  switch (s) {
    case JobStatus::queued: return "QUEUED";
    case JobStatus::running: return "RUNNING";
    case JobStatus::done: return "DONE";
    case JobStatus::failed: return "FAILED";
  }
  return "?";
}

std::string iso8601(Clock::time_point t) {
  const auto secs = std::chrono::time_point_cast<std::chrono::seconds>(t);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t - secs).count();
  const std::time_t tt = Clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

// ------------------------------------------------------------------ registry

ModelRegistry::ModelRegistry(std::vector<RegistryEntry> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  for (std::size_t i = 1; i < entries_.size(); ++i)
    if (entries_[i].name == entries_[i - 1].name)
      throw InvalidParams("duplicate registry entry '" + entries_[i].name + "'");
}

ModelRegistry ModelRegistry::defaults() {
  using engine::ModelKind;
  return ModelRegistry({
      {"gatys", ModelKind::gatys,
       "Optimization-based transfer: gradient descent on the output pixels against Gram-matrix style "
       "and feature content losses from a convolutional backbone.",
       "backbone", engine::default_params(ModelKind::gatys)},
      {"ast", ModelKind::ast,
       "Arbitrary style transfer: a style-prediction network emits conditional instance-normalization "
       "parameters for a feed-forward transfer network; supports stylization strength.",
       "ast", engine::default_params(ModelKind::ast)},
      {"cyclegan", ModelKind::cyclegan,
       "Unpaired image-to-image translation with a generator trained under adversarial and "
       "cycle-consistency losses; needs only a content image.",
       "cyclegan", engine::default_params(ModelKind::cyclegan)},
  });
}

const RegistryEntry* ModelRegistry::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

json ModelRegistry::to_json() const {
  json out = json::array();
  for (const auto& e : entries_)
    out.push_back({{"name", e.name},
                   {"kind", engine::to_string(e.kind)},
                   {"description", e.description},
                   {"checkpoint", e.checkpoint},
                   {"default_params", e.default_params}});
  return out;
}

// ------------------------------------------------------------------ service

Service::Service(ServiceConfig cfg, engine::Models models, ModelRegistry registry)
    : cfg_(std::move(cfg)),
      models_(std::move(models)),
      registry_(std::move(registry)),
      http_(std::make_unique<httplib::Server>()) {
  cfg_.validate();
  if (!models_.checkpoint_loader && !cfg_.checkpoint_dir.empty())
    models_.checkpoint_loader = engine::directory_checkpoints(cfg_.checkpoint_dir);
  // SO_REUSEADDR without SO_REUSEPORT, so a port held by another server fails to bind.
  http_->set_socket_options([](int sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  install_routes();
  for (std::size_t i = 0; i < cfg_.worker_count; ++i) workers_.emplace_back([this] { worker_loop(); });
}

Service::~Service() { stop(); }

std::string Service::submit(const std::string& model, std::span<const std::uint8_t> content,
                            std::optional<std::span<const std::uint8_t>> style, const json& params) {
  const RegistryEntry* entry = registry_.find(model);
  if (!entry) throw RequestError(404, "unknown model");

  auto job = std::make_shared<StyleJob>();
  job->model_name = model;
  job->model = entry->kind;
  job->params = params.is_null() ? json::object() : params;
  try {
    job->content = image::decode_image(content);
    if (style) job->style = image::decode_image(*style);
  } catch (const Error& e) {
    throw RequestError(400, std::string("invalid image: ") + e.what());
  }
  if (entry->kind != engine::ModelKind::cyclegan && !job->style)
    throw RequestError(400, "invalid image: model " + model + " needs a style image");
  try {
    engine::validate_params(entry->kind, job->params);
    engine::working_side(job->content, job->params, cfg_.max_image_side);
  } catch (const Error& e) {
    throw RequestError(400, std::string("invalid params: ") + e.what());
  }

  static thread_local std::mt19937_64 gen{std::random_device{}()};
  std::lock_guard lk(mu_);
  if (stopping_) throw RequestError(503, "service is shutting down");
  evict_expired();
  do {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(gen() ^ ++id_counter_));
    job->id = buf;
  } while (jobs_.count(job->id) || evicted_.count(job->id));
  job->submitted_at = Clock::now();
  jobs_[job->id] = job;
  queue_.push_back(job->id);
  work_cv_.notify_one();
  return job->id;
}

void Service::evict_expired() {
  const auto now = Clock::now();
  const auto retention = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double>(cfg_.job_retention_seconds));
  for (auto it = jobs_.begin(); it != jobs_.end();) {
    const auto& j = *it->second;
    if (j.finished_at && *j.finished_at + retention < now) {
      evicted_.insert(it->first);
      it = jobs_.erase(it);
    } else {
      ++it;
    }
  }
}

json Service::job_document(const std::string& id) {
  std::lock_guard lk(mu_);
  evict_expired();
  if (evicted_.count(id)) throw RequestError(410, "job expired");
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw RequestError(404, "unknown job");
  const auto& j = *it->second;
  json doc{{"id", j.id},
           {"model", j.model_name},
           {"status", to_string(j.status)},
           {"submitted_at", iso8601(j.submitted_at)}};
  if (j.finished_at) doc["finished_at"] = iso8601(*j.finished_at);
  if (j.status == JobStatus::failed) doc["error"] = j.error;
  if (j.status == JobStatus::done) {
    doc["result_url"] = "/api/v1/jobs/" + j.id + "/result";
    doc["info"] = j.info;
  }
  return doc;
}

JobStatus Service::job_status(const std::string& id) {
  std::lock_guard lk(mu_);
  if (evicted_.count(id)) throw RequestError(410, "job expired");
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw RequestError(404, "unknown job");
  return it->second->status;
}

std::vector<std::uint8_t> Service::job_result(const std::string& id) {
  std::lock_guard lk(mu_);
  evict_expired();
  if (evicted_.count(id)) throw RequestError(410, "job expired");
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw RequestError(404, "unknown job");
  if (it->second->status != JobStatus::done) throw RequestError(409, "job has no result");
  return it->second->result;
}

JobStatus Service::wait(const std::string& id) {
  std::unique_lock lk(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw RequestError(404, "unknown job");
  auto job = it->second;
  done_cv_.wait(lk, [&] { return job->status == JobStatus::done || job->status == JobStatus::failed; });
  return job->status;
}

json Service::health() {
  std::lock_guard lk(mu_);
  return {{"status", stopping_ ? "stopping" : "ok"}, {"queue_depth", queue_.size()}, {"workers_busy", running_}};
}

void Service::pause() {
  std::lock_guard lk(mu_);
  paused_ = true;
}

void Service::resume() {
  {
    std::lock_guard lk(mu_);
    paused_ = false;
  }
  work_cv_.notify_all();
}

void Service::worker_loop() {
  for (;;) {
    std::shared_ptr<StyleJob> job;
    {
      std::unique_lock lk(mu_);
      work_cv_.wait(lk, [&] { return stopping_ || (!paused_ && !queue_.empty()); });
      if (stopping_) return;
      job = jobs_.at(queue_.front());
      queue_.pop_front();
      job->status = JobStatus::running;
      ++running_;
      std::size_t peak = peak_running_.load();
      while (running_ > peak && !peak_running_.compare_exchange_weak(peak, running_)) {
      }
    }

    std::vector<std::uint8_t> bytes;
    json info;
    std::string error;
    try {
      auto r = engine::run(models_, job->model, job->content, job->style ? &*job->style : nullptr, job->params,
                           cfg_.max_image_side);
      bytes = image::encode_image(r.image, image::Format::png);
      info = std::move(r.info);
    } catch (const Error& e) {
      error = e.kind() + ": " + e.what();
    } catch (const std::exception& e) {
      error = std::string("internal error: ") + e.what();
    }

    {
      std::lock_guard lk(mu_);
      if (error.empty()) {
        job->status = JobStatus::done;
        job->result = std::move(bytes);
        job->info = std::move(info);
      } else {
        job->status = JobStatus::failed;
        job->error = std::move(error);
      }
      job->finished_at = Clock::now();
      job->content = {};
      job->style.reset();
      --running_;
    }
    done_cv_.notify_all();
  }
}

bool Service::bind(const std::string& host, int port) {
  if (port == 0) {
    bound_port_ = http_->bind_to_any_port(host);
    return bound_port_ > 0;
  }
  if (!http_->bind_to_port(host, port)) return false;
  bound_port_ = port;
  return true;
}

void Service::listen() { http_->listen_after_bind(); }

void Service::stop() {
  {
    std::lock_guard lk(mu_);
    if (!stopping_) {
      stopping_ = true;
      for (const auto& id : queue_) {
        auto& j = *jobs_.at(id);
        j.status = JobStatus::failed;
        j.error = "service shutting down";
        j.finished_at = Clock::now();
      }
      queue_.clear();
    }
  }
  work_cv_.notify_all();
  done_cv_.notify_all();
  if (http_) http_->stop();
  for (auto& w : workers_)
    if (w.joinable()) w.join();
}

void Service::install_routes() {
  auto& s = *http_;
  s.set_payload_max_length(cfg_.max_upload_bytes);

  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const char* msg = res.status == 413 ? "payload too large" : httplib::status_message(res.status);
    res.set_content(error_body(msg).dump(), "application/json");
  });

  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg += std::string(": ") + e.what();
    } catch (...) {
    }
    send_json(res, 500, error_body(msg));
  });

  s.Post("/api/v1/jobs", [this](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data()) return send_json(res, 400, error_body("expected multipart/form-data"));
    auto field = [&](const char* name) -> std::optional<std::string> {
      if (!req.has_file(name)) return std::nullopt;
      return req.get_file_value(name).content;
    };
    const auto model = field("model");
    if (!model) return send_json(res, 400, error_body("missing field 'model'"));
    const auto content = field("content");
    if (!content) return send_json(res, 400, error_body("invalid image: missing field 'content'"));
    const auto style = field("style");
    json params = json::object();
    if (auto p = field("params"); p && !p->empty()) {
      try {
        params = json::parse(*p);
      } catch (const json::exception& e) {
        return send_json(res, 400, error_body(std::string("invalid params: ") + e.what()));
      }
    }
    const bool sync = req.get_param_value("sync") == "true" || field("sync").value_or("") == "true";

    auto bytes = [](const std::string& s) {
      return std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
    };
    try {
      std::optional<std::span<const std::uint8_t>> style_bytes;
      if (style) style_bytes = bytes(*style);
      const std::string id = submit(*model, bytes(*content), style_bytes, params);
      if (!sync) return send_json(res, 202, {{"job_id", id}});
      if (wait(id) != JobStatus::done) return send_json(res, 500, job_document(id));
      const auto png = job_result(id);
      res.set_header("X-Job-Id", id);
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    } catch (const RequestError& e) {
      send_json(res, e.status(), error_body(e.what()));
    }
  });

  s.Get(R"(/api/v1/jobs/([0-9a-zA-Z]+))", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      send_json(res, 200, job_document(req.matches[1]));
    } catch (const RequestError& e) {
      send_json(res, e.status(), error_body(e.what()));
    }
  });

  s.Get(R"(/api/v1/jobs/([0-9a-zA-Z]+)/result)", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto png = job_result(req.matches[1]);
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    } catch (const RequestError& e) {
      send_json(res, e.status(), error_body(e.what()));
    }
  });

  s.Get("/api/v1/models", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, registry_.to_json());
  });

  s.Get("/api/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, health());
  });

  if (!cfg_.static_dir.empty() && std::filesystem::is_directory(cfg_.static_dir))
    s.set_mount_point("/", cfg_.static_dir.string());
}

}  // namespace livestyle::service
