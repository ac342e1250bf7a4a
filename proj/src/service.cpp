#include "adelta/service.hpp"

#include <httplib.h>

#include <cmath>
#include <random>

#include "adelta/image.hpp"

namespace adelta {
namespace {

using Clock = std::chrono::steady_clock;

double millis(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

nlohmann::json error_body(std::string_view code, std::string_view message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

int http_status_for(ErrorCode code) { return code == ErrorCode::NotFound ? 404 : 400; }

// JSON seeds above 2^53 are not representable in browser clients.
std::uint64_t server_seed() {
  std::random_device rd;
  const std::uint64_t hi = rd();
  const std::uint64_t lo = rd();
  return ((hi << 32) | lo) & ((std::uint64_t{1} << 53) - 1);
}

std::string header_json(const nlohmann::json& j) { return j.dump(-1, ' ', true); }

}  // namespace

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
  }
  return "unknown";
}

std::vector<std::uint8_t> sample_png(const Sample& image) { return encode_png(render_sample(image)); }

nlohmann::json GenerationJob::status_json() const {
  nlohmann::json j{{"job_id", id}, {"kind", kind}, {"state", std::string(to_string(state))}, {"request", request}};
  nlohmann::json timings{{"queued_ms", millis(created, started.value_or(Clock::now()))}};
  if (started) timings["running_ms"] = millis(*started, finished.value_or(Clock::now()));
  j["timings"] = timings;
  if (error) j["error"] = *error;
  if (state == JobState::Done) {
    const std::string base = "/api/jobs/" + id;
    if (kind == "generate") {
      j["result"] = {{"image_url", base + "/image"}, {"provenance", provenance}, {"warnings", warnings}};
    } else {
      nlohmann::json cells_json = nlohmann::json::array();
      for (std::size_t k = 0; k < cells.size(); ++k) {
        const auto& c = cells[k];
        cells_json.push_back({{"index", k},
                              {"row", c.row},
                              {"col", c.col},
                              {"scales", c.scales},
                              {"unmodified", c.unmodified},
                              {"image_url", base + "/cells/" + std::to_string(k) + "/image"}});
      }
      j["result"] = {{"rows", rows}, {"cols", cols}, {"cells", cells_json}};
    }
  }
  return j;
}

ControlService::ControlService(ServiceOptions opts, std::shared_ptr<const Backbone> backbone,
                               std::shared_ptr<const TextEncoder> encoder, std::shared_ptr<Registry> registry)
    : opts_(std::move(opts)),
      backbone_(std::move(backbone)),
      encoder_(std::move(encoder)),
      registry_(std::move(registry)) {
  if (!backbone_ || !encoder_ || !registry_)
    throw Error(ErrorCode::InvalidArgument, "service needs a backbone, an encoder and a registry");
  if (backbone_->embedding_dim() != encoder_->embedding_dim())
    throw Error(ErrorCode::DimensionMismatch, "backbone and encoder widths differ");
  if (opts_.workers < 1) throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
  for (int i = 0; i < opts_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

ControlService::~ControlService() { stop(); }

int ControlService::start() {
  if (server_) throw Error(ErrorCode::InvalidArgument, "service already started");
  server_ = std::make_unique<httplib::Server>();
  install_routes();
  const int port = opts_.port == 0 ? server_->bind_to_any_port(opts_.host)
                                   : (server_->bind_to_port(opts_.host, opts_.port) ? opts_.port : -1);
  if (port < 0) throw Error(ErrorCode::IoError, "cannot bind " + opts_.host + ":" + std::to_string(opts_.port));
  listener_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void ControlService::stop() {
  if (server_) server_->stop();
  if (listener_.joinable()) listener_.join();
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& w : workers_)
    if (w.joinable()) w.join();
}

void ControlService::wait() {
  if (listener_.joinable()) listener_.join();
}

nlohmann::json ControlService::list_deltas() const {
  nlohmann::json deltas = nlohmann::json::array();
  for (const auto& e : registry_->list()) {
    deltas.push_back({{"name", e.name},
                      {"encoder_id", e.encoder_id},
                      {"method", std::string(to_string(e.delta->method))},
                      {"training_nouns", e.delta->training_nouns},
                      {"embedding_dim", e.delta->dim()}});
  }
  return {{"deltas", deltas}, {"warnings", registry_->warnings()}};
}

DeltaApplication ControlService::parse_application(const nlohmann::json& a) const {
  DeltaApplication app;
  app.delta = registry_->get(a.at("delta").get<std::string>(), encoder_->id());
  app.subject_word = a.at("subject").get<std::string>();
  app.scale = a.value("scale", 0.0);
  app.delay_steps = a.value("delay", 0);
  if (a.contains("occurrence")) {
    const auto& o = a.at("occurrence");
    if (o.is_string()) {
      if (o.get<std::string>() != "all")
        throw Error(ErrorCode::InvalidArgument, "occurrence must be an index or \"all\"");
      app.occurrence = Occurrence::every();
    } else {
      app.occurrence = Occurrence::nth(o.get<std::size_t>());
    }
  }
  return app;
}

GenerationConfig ControlService::parse_generation(const nlohmann::json& req, bool allow_applications) const {
  if (!req.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be a JSON object");
  GenerationConfig cfg;
  cfg.prompt = req.at("prompt").get<std::string>();
  cfg.seed = req.contains("seed") && !req.at("seed").is_null() ? req.at("seed").get<std::uint64_t>()
                                                                : server_seed();
  cfg.steps = req.value("steps", 50);
  cfg.guidance_weight = req.value("guidance", 7.5);
  if (cfg.steps > backbone_->schedule().num_train_steps())
    throw Error(ErrorCode::InvalidArgument, "steps exceed the backbone's timestep count");
  if (req.contains("applications")) {
    if (!allow_applications && !req.at("applications").empty())
      throw Error(ErrorCode::InvalidArgument, "applications are not accepted here");
    for (const auto& a : req.at("applications")) cfg.applications.push_back(parse_application(a));
  }
  cfg.validate(*encoder_);
  const TokenizedPrompt tp = encoder_->encode(cfg.prompt);
  for (const auto& a : cfg.applications) resolve_spans(tp, a.subject_word, a.occurrence);
  return cfg;
}

std::string ControlService::next_id() {
  std::lock_guard lock(mutex_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "job-%06llu", static_cast<unsigned long long>(++counter_));
  return buf;
}

void ControlService::enqueue(std::shared_ptr<GenerationJob> job) {
  {
    std::lock_guard lock(mutex_);
    jobs_[job->id] = job;
    queue_.push_back(std::move(job));
  }
  cv_.notify_all();
}

RequestOutcome ControlService::submit_generate(const nlohmann::json& request) {
  RequestOutcome out;
  try {
    auto job = std::make_shared<GenerationJob>();
    job->kind = "generate";
    job->config = parse_generation(request, true);
    job->request = job->config.to_json();
    job->id = next_id();
    job->created = Clock::now();
    out.body = {{"job_id", job->id}, {"seed", job->config.seed}};
    out.job = job;
    enqueue(std::move(job));
  } catch (const Error& e) {
    out.status = http_status_for(e.code());
    out.body = error_body(to_string(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    out.status = 400;
    out.body = error_body("InvalidArgument", e.what());
  }
  return out;
}

RequestOutcome ControlService::submit_sweep(const nlohmann::json& request) {
  RequestOutcome out;
  try {
    auto job = std::make_shared<GenerationJob>();
    job->kind = "sweep";
    job->config = parse_generation(request, true);
    const auto& axes = request.at("axes");
    if (!axes.is_array() || axes.empty() || axes.size() > opts_.max_sweep_axes)
      throw Error(ErrorCode::InvalidArgument,
                  "a sweep needs 1 to " + std::to_string(opts_.max_sweep_axes) + " axes");
    std::vector<SweepAxis> parsed;
    for (const auto& ax : axes) {
      SweepAxis axis;
      axis.application = parse_application(ax);
      if (ax.contains("scales")) {
        axis.scales = ax.at("scales").get<std::vector<double>>();
      } else {
        const int count = ax.at("count").get<int>();
        if (count < 1) throw Error(ErrorCode::InvalidArgument, "sweep axis is empty");
        axis.scales = linear_scales(ax.at("min").get<double>(), ax.at("max").get<double>(), count);
      }
      if (axis.scales.empty()) throw Error(ErrorCode::InvalidArgument, "sweep axis is empty");
      for (double s : axis.scales)
        if (!std::isfinite(s)) throw Error(ErrorCode::InvalidArgument, "sweep scales must be finite");
      parsed.push_back(std::move(axis));
    }
    std::size_t cells = 1;
    for (const auto& a : parsed) cells *= a.scales.size();
    if (cells > opts_.max_sweep_cells)
      throw Error(ErrorCode::InvalidArgument, "sweep has " + std::to_string(cells) + " cells, limit is " +
                                                  std::to_string(opts_.max_sweep_cells));

    GenerationConfig probe = job->config;
    for (const auto& a : parsed) probe.applications.push_back(a.application);
    probe.validate(*encoder_);
    const TokenizedPrompt tp = encoder_->encode(probe.prompt);
    for (const auto& a : parsed) resolve_spans(tp, a.application.subject_word, a.application.occurrence);

    job->axis1 = parsed[0];
    if (parsed.size() > 1) job->axis2 = parsed[1];
    job->rows = parsed[0].scales.size();
    job->cols = parsed.size() > 1 ? parsed[1].scales.size() : 1;
    job->request = job->config.to_json();
    nlohmann::json axes_echo = nlohmann::json::array();
    for (const auto& a : parsed) {
      auto j = a.application.to_json();
      j.erase("scale");
      j["scales"] = a.scales;
      axes_echo.push_back(j);
    }
    job->request["axes"] = axes_echo;
    job->id = next_id();
    job->created = Clock::now();
    out.body = {{"job_id", job->id}, {"seed", job->config.seed}, {"cells", cells}};
    out.job = job;
    enqueue(std::move(job));
  } catch (const Error& e) {
    out.status = http_status_for(e.code());
    out.body = error_body(to_string(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    out.status = 400;
    out.body = error_body("InvalidArgument", e.what());
  }
  return out;
}

std::optional<GenerationJob> ControlService::job(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return *it->second;
}

bool ControlService::wait_for(const std::string& id, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return false;
  const auto job = it->second;
  return cv_.wait_for(lock, timeout, [&] {
    return job->state == JobState::Done || job->state == JobState::Failed;
  });
}

void ControlService::worker_loop() {
  for (;;) {
    std::shared_ptr<GenerationJob> job;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      job = std::move(queue_.front());
      queue_.pop_front();
      job->state = JobState::Running;
      job->started = Clock::now();
    }
    cv_.notify_all();

    // Inputs are immutable once queued, so the job runs without the lock.
    std::vector<std::uint8_t> png;
    nlohmann::json provenance;
    std::vector<std::string> warnings;
    std::vector<JobCell> cells;
    std::optional<std::string> error;
    try {
      if (job->kind == "generate") {
        const auto result = generate_with_deltas(*backbone_, *encoder_, job->config);
        png = sample_png(result.image);
        provenance = result.provenance;
        warnings = result.warnings;
      } else {
        const auto grid = sweep_grid(*backbone_, *encoder_, job->config, *job->axis1, job->axis2);
        for (const auto& c : grid.cells)
          cells.push_back({c.row, c.col, c.scales, c.unmodified, sample_png(c.result.image), c.result.provenance});
      }
    } catch (const std::exception& e) {
      error = e.what();
    }

    {
      std::lock_guard lock(mutex_);
      job->finished = Clock::now();
      if (error) {
        job->state = JobState::Failed;
        job->error = error;
      } else {
        job->png = std::move(png);
        job->provenance = std::move(provenance);
        job->warnings = std::move(warnings);
        job->cells = std::move(cells);
        job->state = JobState::Done;
      }
    }
    cv_.notify_all();
  }
}

void ControlService::install_routes() {
  auto& svr = *server_;
  svr.set_default_headers({{"Access-Control-Allow-Origin", opts_.cors_origin},
                           {"Access-Control-Expose-Headers", "X-Provenance"}});

  auto send_json = [](httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };

  svr.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  svr.Get("/api/info", [this, send_json](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200,
              {{"backbone_id", backbone_->id()},
               {"encoder_id", encoder_->id()},
               {"embedding_dim", encoder_->embedding_dim()},
               {"max_sweep_cells", opts_.max_sweep_cells},
               {"max_sweep_axes", opts_.max_sweep_axes},
               {"workers", opts_.workers}});
  });

  svr.Get("/api/deltas", [this, send_json](const httplib::Request&, httplib::Response& res) {
    try {
      send_json(res, 200, list_deltas());
    } catch (const std::exception& e) {
      send_json(res, 500, error_body("IoError", e.what()));
    }
  });

  auto post_job = [send_json](httplib::Response& res, const std::string& body,
                              const std::function<RequestOutcome(const nlohmann::json&)>& submit) {
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      send_json(res, 400, error_body("InvalidArgument", e.what()));
      return;
    }
    const RequestOutcome out = submit(req);
    send_json(res, out.status, out.body);
  };

  svr.Post("/api/generate", [this, post_job](const httplib::Request& req, httplib::Response& res) {
    post_job(res, req.body, [this](const nlohmann::json& j) { return submit_generate(j); });
  });

  svr.Post("/api/sweep", [this, post_job](const httplib::Request& req, httplib::Response& res) {
    post_job(res, req.body, [this](const nlohmann::json& j) { return submit_sweep(j); });
  });

  svr.Post("/api/reload", [this, send_json](const httplib::Request&, httplib::Response& res) {
    try {
      registry_->reload();
      send_json(res, 200, {{"count", registry_->list().size()}, {"warnings", registry_->warnings()}});
    } catch (const std::exception& e) {
      send_json(res, 500, error_body("IoError", e.what()));
    }
  });

  svr.Get(R"(/api/jobs/([A-Za-z0-9_-]+))", [this, send_json](const httplib::Request& req, httplib::Response& res) {
    const auto j = job(req.matches[1]);
    if (!j) return send_json(res, 404, error_body("NotFound", "unknown job"));
    send_json(res, 200, j->status_json());
  });

  svr.Get(R"(/api/jobs/([A-Za-z0-9_-]+)/image)",
          [this, send_json](const httplib::Request& req, httplib::Response& res) {
            const auto j = job(req.matches[1]);
            if (!j) return send_json(res, 404, error_body("NotFound", "unknown job"));
            if (j->kind != "generate")
              return send_json(res, 400, error_body("InvalidArgument", "sweep jobs serve cell images"));
            if (j->state != JobState::Done)
              return send_json(res, 409, error_body("NotReady", "job is " + std::string(to_string(j->state))));
            res.set_header("X-Provenance", header_json(j->provenance));
            res.set_content(std::string(j->png.begin(), j->png.end()), "image/png");
          });

  svr.Get(R"(/api/jobs/([A-Za-z0-9_-]+)/cells/(\d+)/image)",
          [this, send_json](const httplib::Request& req, httplib::Response& res) {
            const auto j = job(req.matches[1]);
            if (!j) return send_json(res, 404, error_body("NotFound", "unknown job"));
            if (j->state != JobState::Done)
              return send_json(res, 409, error_body("NotReady", "job is " + std::string(to_string(j->state))));
            const std::size_t k = std::stoul(req.matches[2]);
            if (k >= j->cells.size()) return send_json(res, 404, error_body("NotFound", "unknown cell"));
            res.set_header("X-Provenance", header_json(j->cells[k].provenance));
            res.set_content(std::string(j->cells[k].png.begin(), j->cells[k].png.end()), "image/png");
          });
}

}  // namespace adelta
