#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "maskadv/dataset.hpp"
#include "maskadv/pipeline.hpp"

namespace maskadv {

// Attack settings shared by the CLI and the HTTP API so both produce the same report.
struct AttackDefaults {
  DeepFoolConfig deepfool;
  BBConfig bb;
  SmoothGradConfig saliency;
};

/// Constraint as the user states it. kind is "uniform", "region", "ratio"
/// or "imperceptible"; eps defaults to the model's range width.
struct ConstraintOptions {
  std::string kind = "uniform";
  std::optional<double> eps;
  std::optional<double> ratio;
  std::optional<RegionMask> region;
  bool adaptive = true;
};

// Checks option combinations (distinct message per conflict) and builds the source.
ConstraintSource make_constraint_source(const ConstraintOptions& opts, const NetworkModel& model);

AttackRequest make_request(std::shared_ptr<const NetworkModel> model, Tensor x0, const ConstraintOptions& opts,
                           std::uint64_t seed, const AttackDefaults& defaults = {});

/// Fixed-size worker pool. Tasks run in submission order as workers free up.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  void submit(std::function<void()> task);
  // Blocks until the queue is empty and no task is running.
  void wait_idle();

 private:
  void loop();

  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<std::function<void()>> queue_;
  std::size_t running_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

enum class JobStatus { queued, running, done, failed };
std::string to_string(JobStatus s);

struct JobSnapshot {
  std::string id;
  JobStatus status = JobStatus::queued;
  std::optional<std::string> error;
  std::optional<std::string> report;  // report.json text
  std::optional<nlohmann::json> timing;
  std::optional<std::filesystem::path> run_dir;
  std::map<std::string, std::vector<std::uint8_t>> images;  // name -> PNG bytes
};

struct ServiceConfig {
  std::map<std::string, std::shared_ptr<const NetworkModel>> models;
  std::map<std::string, std::shared_ptr<const Dataset>> datasets;
  std::filesystem::path output_dir = "runs";
  std::size_t workers = 2;
  AttackDefaults defaults;
};

/// Attack jobs plus the HTTP front end. Models and datasets are shared
/// read-only; job records live until the service is destroyed.
class AttackService {
 public:
  explicit AttackService(ServiceConfig cfg);
  ~AttackService();

  // POST /attacks body -> job id. Throws InputError on a bad request.
  std::string submit(const nlohmann::json& body);
  std::optional<JobSnapshot> job(const std::string& id) const;
  void wait_idle();

  // GET /models, GET /datasets, POST /importance bodies.
  nlohmann::json models_json() const;
  nlohmann::json datasets_json() const;
  nlohmann::json image_json(const std::string& dataset, std::size_t index, const std::string& model) const;
  nlohmann::json importance(const nlohmann::json& body) const;

  /// Binds the HTTP server; port 0 picks a free port. Throws Error when the
  /// address cannot be bound. Returns the bound port.
  int bind(const std::string& host, int port);
  // Serves until stop() is called.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// "host:port" or ":port"/"port" (host defaults to 127.0.0.1).
std::pair<std::string, int> parse_bind_address(const std::string& text);

}  // namespace maskadv
