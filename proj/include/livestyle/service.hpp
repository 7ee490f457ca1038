#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "livestyle/engine.hpp"

namespace httplib {
class Server;
}

namespace livestyle::service {

struct ServiceConfig {
  std::size_t max_upload_bytes = 10 * 1024 * 1024;
  std::size_t worker_count = 2;
  std::size_t max_image_side = 512;
  double job_retention_seconds = 3600.0;
  int port = 8000;
  std::string host = "0.0.0.0";
  std::filesystem::path checkpoint_dir;
  std::filesystem::path static_dir;  // served at "/" when set

  void validate() const;
  // Reads LIVESTYLE_WORKERS, LIVESTYLE_MAX_UPLOAD_BYTES,
  // LIVESTYLE_MAX_IMAGE_SIDE, LIVESTYLE_PORT, LIVESTYLE_JOB_RETENTION,
  // LIVESTYLE_CHECKPOINT_DIR and LIVESTYLE_STATIC_DIR over the defaults.
  static ServiceConfig from_env();
};

enum class JobStatus { queued, running, done, failed };
const char* to_string(JobStatus s);

using Clock = std::chrono::system_clock;

struct StyleJob {
  std::string id;
  std::string model_name;
  engine::ModelKind model = engine::ModelKind::gatys;
  nlohmann::json params;
  JobStatus status = JobStatus::queued;
  Clock::time_point submitted_at;
  std::optional<Clock::time_point> finished_at;
  std::vector<std::uint8_t> result;  // PNG bytes when done
  std::string error;                 // message when failed
  nlohmann::json info;
  image::RawImage content;
  std::optional<image::RawImage> style;
};

struct RegistryEntry {
  std::string name;
  engine::ModelKind kind;
  std::string description;
  std::string checkpoint;
  nlohmann::json default_params;
};

// Model metadata served to clients, ordered by name.
class ModelRegistry {
 public:
  ModelRegistry() = default;
  explicit ModelRegistry(std::vector<RegistryEntry> entries);

  static ModelRegistry defaults();

  const RegistryEntry* find(const std::string& name) const;
  const std::vector<RegistryEntry>& entries() const { return entries_; }
  nlohmann::json to_json() const;

 private:
  std::vector<RegistryEntry> entries_;
};

// Thrown by Service::submit; carries the HTTP status it maps to.
class RequestError : public Error {
 public:
  RequestError(int status, const std::string& what) : Error("RequestError", what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class Service {
 public:
  Service(ServiceConfig cfg, engine::Models models, ModelRegistry registry);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Validates and enqueues a job; returns its id. Throws RequestError.
  std::string submit(const std::string& model, std::span<const std::uint8_t> content,
                     std::optional<std::span<const std::uint8_t>> style, const nlohmann::json& params);

  // Status document; throws RequestError (404 unknown, 410 evicted).
  nlohmann::json job_document(const std::string& id);
  JobStatus job_status(const std::string& id);
  std::vector<std::uint8_t> job_result(const std::string& id);
  // Blocks until the job is terminal.
  JobStatus wait(const std::string& id);

  nlohmann::json health();
  const ModelRegistry& registry() const { return registry_; }
  const ServiceConfig& config() const { return cfg_; }

  // Workers stop taking new jobs while paused.
  void pause();
  void resume();
  std::size_t peak_running() const { return peak_running_.load(); }

  // Binds the HTTP listener; false when the port is unavailable.
  bool bind(const std::string& host, int port);
  int bound_port() const { return bound_port_; }
  // Serves until stop() is called.
  void listen();
  // Stops accepting requests, lets RUNNING jobs finish, fails QUEUED jobs
  // and joins the workers. Idempotent.
  void stop();

  httplib::Server& http() { return *http_; }

 private:
  void worker_loop();
  void evict_expired();
  void install_routes();

  ServiceConfig cfg_;
  engine::Models models_;
  ModelRegistry registry_;
  std::unique_ptr<httplib::Server> http_;
  int bound_port_ = -1;

  mutable std::mutex mu_;
  std::condition_variable work_cv_;
  std::condition_variable done_cv_;
  std::map<std::string, std::shared_ptr<StyleJob>> jobs_;
  std::set<std::string> evicted_;
  std::deque<std::string> queue_;
  std::size_t running_ = 0;
  std::atomic<std::size_t> peak_running_{0};
  bool paused_ = false;
  bool stopping_ = false;
  std::uint64_t id_counter_ = 0;
  std::vector<std::thread> workers_;
};

std::string iso8601(Clock::time_point t);

}  // namespace livestyle::service
