#pragma once

// HTTP/JSON control service over the application engine and the registry.
//
//   GET  /api/info                       backbone, encoder and limits
//   GET  /api/deltas                     registry listing
//   POST /api/generate                   -> 202 {job_id}
//   POST /api/sweep                      -> 202 {job_id}; grid manifest on the job
//   GET  /api/jobs/{id}                  job status
//   GET  /api/jobs/{id}/image            PNG, X-Provenance header
//   GET  /api/jobs/{id}/cells/{k}/image  PNG of one sweep cell
//   POST /api/reload                     re-scan the registry

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "adelta/engine.hpp"
#include "adelta/model.hpp"
#include "adelta/registry.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace adelta {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  int workers = 1;
  std::string cors_origin = "*";
  std::size_t max_sweep_cells = 49;
  std::size_t max_sweep_axes = 2;
};

enum class JobState { Queued, Running, Done, Failed };
std::string_view to_string(JobState s);

struct JobCell {
  std::size_t row = 0;
  std::size_t col = 0;
  std::vector<double> scales;
  bool unmodified = false;
  std::vector<std::uint8_t> png;
  nlohmann::json provenance;
};

struct GenerationJob {
  std::string id;
  std::string kind;  // "generate" or "sweep"
  JobState state = JobState::Queued;
  nlohmann::json request;  // resolved request echo
  std::optional<std::string> error;
  std::chrono::steady_clock::time_point created;
  std::optional<std::chrono::steady_clock::time_point> started;
  std::optional<std::chrono::steady_clock::time_point> finished;

  // generate
  GenerationConfig config;
  std::vector<std::uint8_t> png;
  nlohmann::json provenance;
  std::vector<std::string> warnings;

  // sweep
  std::optional<SweepAxis> axis1;
  std::optional<SweepAxis> axis2;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<JobCell> cells;

  nlohmann::json status_json() const;
};

// Result of request validation: either a job to enqueue or an HTTP error.
struct RequestOutcome {
  int status = 202;
  nlohmann::json body;
  std::shared_ptr<GenerationJob> job;
};

// PNG bytes of a generated sample, as served by the image endpoints.
std::vector<std::uint8_t> sample_png(const Sample& image);

class ControlService {
 public:
  // Workers start immediately; HTTP only after start().
  ControlService(ServiceOptions opts, std::shared_ptr<const Backbone> backbone,
                 std::shared_ptr<const TextEncoder> encoder, std::shared_ptr<Registry> registry);
  ~ControlService();
  ControlService(const ControlService&) = delete;
  ControlService& operator=(const ControlService&) = delete;

  // Binds and starts the listener thread; returns the bound port.
  int start();
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

  // Request handling without the HTTP layer.
  nlohmann::json list_deltas() const;
  RequestOutcome submit_generate(const nlohmann::json& request);
  RequestOutcome submit_sweep(const nlohmann::json& request);
  // Consistent copy of the job's current state.
  std::optional<GenerationJob> job(const std::string& id) const;
  // Blocks until the job leaves queued/running; false on timeout.
  bool wait_for(const std::string& id, std::chrono::milliseconds timeout) const;

 private:
  GenerationConfig parse_generation(const nlohmann::json& req, bool allow_applications) const;
  DeltaApplication parse_application(const nlohmann::json& a) const;
  std::string next_id();
  void enqueue(std::shared_ptr<GenerationJob> job);
  void worker_loop();
  void install_routes();

  ServiceOptions opts_;
  std::shared_ptr<const Backbone> backbone_;
  std::shared_ptr<const TextEncoder> encoder_;
  std::shared_ptr<Registry> registry_;
  std::unique_ptr<httplib::Server> server_;
  std::thread listener_;
  std::vector<std::thread> workers_;

  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  std::deque<std::shared_ptr<GenerationJob>> queue_;
  std::map<std::string, std::shared_ptr<GenerationJob>> jobs_;
  std::uint64_t counter_ = 0;
  bool stopping_ = false;
};

}  // namespace adelta
