#include "maskadv/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <charconv>
#include <cstdio>

#include "maskadv/errors.hpp"
#include "maskadv/image_io.hpp"
#include "maskadv/run_io.hpp"

namespace maskadv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// 404 material: a name or id that does not exist.
class NotFound : public Error {
 public:
  using Error::Error;
};

const json* field(const json& body, const char* key) {
  auto it = body.find(key);
  return it == body.end() || it->is_null() ? nullptr : &*it;
}

std::optional<double> number_field(const json& body, const char* key) {
  const json* v = field(body, key);
  if (!v) return std::nullopt;
  if (!v->is_number()) throw InputError(std::string("field '") + key + "' must be a number");
  return v->get<double>();
}

std::optional<std::uint64_t> count_field(const json& body, const char* key) {
  const json* v = field(body, key);
  if (!v) return std::nullopt;
  if (!v->is_number_integer() || v->get<std::int64_t>() < 0)
    throw InputError(std::string("field '") + key + "' must be a non-negative integer");
  return v->get<std::uint64_t>();
}

std::optional<std::string> string_field(const json& body, const char* key) {
  const json* v = field(body, key);
  if (!v) return std::nullopt;
  if (!v->is_string()) throw InputError(std::string("field '") + key + "' must be a string");
  return v->get<std::string>();
}

template <class Map>
const typename Map::mapped_type& lookup(const Map& items, const std::optional<std::string>& name, const char* what) {
  if (!name) {
    if (items.size() == 1) return items.begin()->second;
    throw InputError(std::string("request must name a ") + what);
  }
  auto it = items.find(*name);
  if (it == items.end()) throw NotFound(std::string("unknown ") + what + " '" + *name + "'");
  return it->second;
}

json region_json(const RegionScore& r) {
  return {{"top", r.top},
          {"left", r.left},
          {"height", r.height},
          {"width", r.width},
          {"score", r.score},
          {"robust_radius", r.robust_radius ? json(*r.robust_radius) : json()}};
}

}  // namespace

ConstraintSource make_constraint_source(const ConstraintOptions& opts, const NetworkModel& model) {
  const double width = model.input_range().width();
  if (opts.eps && !(*opts.eps > 0.0 && *opts.eps <= width)) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "eps %g is outside (0, %g], the input range width", *opts.eps, width);
    throw InputError(buf);
  }
  if (opts.kind == "uniform") {
    if (opts.ratio) throw InputError("ratio given for a uniform constraint; use kind 'ratio'");
    if (opts.region) throw InputError("a region mask needs kind 'region'");
    return UniformSource{opts.eps.value_or(width)};
  }
  if (opts.kind == "region") {
    if (opts.ratio) throw InputError("ratio cannot be combined with a region mask");
    if (!opts.region) throw InputError("region constraint needs a mask");
    return RegionSource{*opts.region, opts.eps.value_or(width)};
  }
  if (opts.kind == "ratio") {
    if (!opts.ratio) throw InputError("ratio constraint needs a ratio value");
    if (!(*opts.ratio > 0.0)) throw InputError("ratio must be > 0");
    if (opts.region) throw InputError("a region mask cannot be combined with a ratio");
    return RatioSource{*opts.ratio, opts.eps};
  }
  if (opts.kind == "imperceptible") {
    if (opts.eps) throw InputError("eps cannot be combined with the imperceptible constraint (bounds come from the variance map)");
    if (opts.ratio) throw InputError("ratio cannot be combined with the imperceptible constraint");
    if (opts.region) throw InputError("a region mask cannot be combined with the imperceptible constraint");
    return ImperceptibleSource{opts.adaptive};
  }
  throw InputError("unknown constraint kind '" + opts.kind + "' (expected uniform, region, ratio or imperceptible)");
}

AttackRequest make_request(std::shared_ptr<const NetworkModel> model, Tensor x0, const ConstraintOptions& opts,
                           std::uint64_t seed, const AttackDefaults& defaults) {
  if (!model) throw InputError("no model");
  ConstraintSource source = make_constraint_source(opts, *model);
  AttackRequest req{std::move(model), std::move(x0), std::move(source), defaults.deepfool, defaults.bb,
                    defaults.saliency, seed, std::nullopt};
  req.deepfool.adaptive = false;  // set from the constraint source inside the pipeline
  validate_request(req);
  return req;
}

WorkerPool::WorkerPool(std::size_t workers) {
  if (workers == 0) throw InputError("worker pool needs at least one worker");
  for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { loop(); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::submit(std::function<void()> task) {
  {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(task));
  }
  cv_.notify_one();
}

void WorkerPool::wait_idle() {
  std::unique_lock lock(mu_);
  idle_cv_.wait(lock, [&] { return queue_.empty() && running_ == 0; });
}

void WorkerPool::loop() {
  for (;;) {
    std::function<void()> task;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;  // stopping with nothing left
      task = std::move(queue_.front());
      queue_.pop_front();
      ++running_;
    }
    task();
    {
      std::lock_guard lock(mu_);
      --running_;
    }
    idle_cv_.notify_all();
  }
}

std::string to_string(JobStatus s) {
  switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "unknown";
}

struct AttackService::Impl {
  ServiceConfig cfg;
  mutable std::mutex jobs_mu;
  std::map<std::string, JobSnapshot> jobs;
  httplib::Server http;
  WorkerPool pool;

  explicit Impl(ServiceConfig c) : cfg(std::move(c)), pool(cfg.workers) {}

  void set_status(const std::string& id, JobStatus s) {
    std::lock_guard lock(jobs_mu);
    jobs.at(id).status = s;
  }

  void execute(const std::string& id, const AttackRequest& req) {
    set_status(id, JobStatus::running);
    try {
      const AttackResult result = run_attack(req);
      const InputRange range = req.model->input_range();
      const fs::path dir = write_run(cfg.output_dir, id, result, req.x0, range);
      std::map<std::string, std::vector<std::uint8_t>> images;
      for (const char* name : {"clean", "mask", "adversarial", "delta"})
        if (fs::exists(dir / (std::string(name) + ".png"))) images[name] = read_file(dir / (std::string(name) + ".png"));
      std::lock_guard lock(jobs_mu);
      JobSnapshot& job = jobs.at(id);
      job.report = report_json_text(result);
      job.timing = timing_json(result);
      job.run_dir = dir;
      job.images = std::move(images);
      job.status = JobStatus::done;
    } catch (const std::exception& e) {
      std::lock_guard lock(jobs_mu);
      JobSnapshot& job = jobs.at(id);
      job.error = e.what();
      job.status = JobStatus::failed;
    }
  }

  void routes(AttackService& svc);
};

AttackService::AttackService(ServiceConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {
  impl_->routes(*this);
}

AttackService::~AttackService() {
  stop();
  impl_->pool.wait_idle();
}

std::string AttackService::submit(const json& body) {
  if (!body.is_object()) throw InputError("request body must be a JSON object");
  const auto& model = lookup(impl_->cfg.models, string_field(body, "model"), "model");
  const auto& dataset = lookup(impl_->cfg.datasets, string_field(body, "dataset"), "dataset");
  const std::size_t index = count_field(body, "index").value_or(0);
  if (index >= dataset->size())
    throw InputError("image index " + std::to_string(index) + " out of range (" + std::to_string(dataset->size()) +
                     " items)");
  if (dataset->image_shape() != model->input_shape())
    throw InputError("dataset images " + shape_to_string(dataset->image_shape()) + " do not fit the model input " +
                     shape_to_string(model->input_shape()));

  const json* c = field(body, "constraint");
  if (!c || !c->is_object()) throw InputError("request needs a constraint object");
  ConstraintOptions opts;
  opts.kind = string_field(*c, "kind").value_or("");
  if (opts.kind.empty()) throw InputError("constraint needs a kind");
  opts.eps = number_field(*c, "eps");
  opts.ratio = number_field(*c, "ratio");
  if (const json* a = field(*c, "adaptive")) {
    if (!a->is_boolean()) throw InputError("field 'adaptive' must be a boolean");
    opts.adaptive = a->get<bool>();
  }
  if (auto mask = string_field(*c, "mask")) {
    RegionMask region = region_from_png(base64_decode(*mask));
    const ImageDims dims = image_dims(model->input_shape());
    if (region.height() != dims.height || region.width() != dims.width)
      throw InputError("mask is " + std::to_string(region.height()) + "x" + std::to_string(region.width()) +
                       " but the image is " + std::to_string(dims.height) + "x" + std::to_string(dims.width));
    opts.region = std::move(region);
  }
  const std::uint64_t seed = count_field(body, "seed").value_or(0);

  auto req = std::make_shared<AttackRequest>(
      make_request(model, dataset->image(index, model->input_range()), opts, seed, impl_->cfg.defaults));
  std::string id;
  {
    std::lock_guard lock(impl_->jobs_mu);
    do id = new_job_id();
    while (impl_->jobs.count(id));
    impl_->jobs[id].id = id;
  }
  impl_->pool.submit([this, id, req] { impl_->execute(id, *req); });
  return id;
}

std::optional<JobSnapshot> AttackService::job(const std::string& id) const {
  std::lock_guard lock(impl_->jobs_mu);
  auto it = impl_->jobs.find(id);
  if (it == impl_->jobs.end()) return std::nullopt;
  return it->second;
}

void AttackService::wait_idle() { impl_->pool.wait_idle(); }

json AttackService::models_json() const {
  json out = json::array();
  for (const auto& [name, m] : impl_->cfg.models)
    out.push_back({{"name", name},
                   {"input_shape", m->input_shape()},
                   {"input_range", {m->input_range().lo, m->input_range().hi}},
                   {"num_classes", m->num_classes()},
                   {"layers", m->layers().size()}});
  return out;
}

json AttackService::datasets_json() const {
  json out = json::array();
  for (const auto& [name, d] : impl_->cfg.datasets)
    out.push_back({{"name", name}, {"size", d->size()}, {"image_shape", d->image_shape()}});
  return out;
}

json AttackService::image_json(const std::string& dataset, std::size_t index, const std::string& model) const {
  auto it = impl_->cfg.datasets.find(dataset);
  if (it == impl_->cfg.datasets.end()) throw NotFound("unknown dataset '" + dataset + "'");
  const Dataset& d = *it->second;
  if (index >= d.size()) throw NotFound("image index " + std::to_string(index) + " out of range");
  const Image8 img{d.image_shape()[0], d.image_shape()[1], d.image_shape()[2], d.raw(index)};
  json out{{"dataset", dataset},
           {"index", index},
           {"label", d.label(index)},
           {"shape", d.image_shape()},
           {"png", base64_encode(encode_png(img))},
           {"prediction", nullptr}};
  // Prediction from the named model, or the first model that accepts the image.
  for (const auto& [name, m] : impl_->cfg.models) {
    if ((!model.empty() && name != model) || m->input_shape() != d.image_shape()) continue;
    out["prediction"] = {{"model", name}, {"label", forward(*m, d.image(index, m->input_range())).predicted_label}};
    break;
  }
  if (!model.empty() && out["prediction"].is_null()) {
    if (!impl_->cfg.models.count(model)) throw NotFound("unknown model '" + model + "'");
    throw InputError("model '" + model + "' does not accept images of shape " + shape_to_string(d.image_shape()));
  }
  return out;
}

json AttackService::importance(const json& body) const {
  if (!body.is_object()) throw InputError("request body must be a JSON object");
  const auto& model = lookup(impl_->cfg.models, string_field(body, "model"), "model");
  const auto& dataset = lookup(impl_->cfg.datasets, string_field(body, "dataset"), "dataset");
  const std::size_t index = count_field(body, "index").value_or(0);
  if (index >= dataset->size()) throw InputError("image index " + std::to_string(index) + " out of range");
  if (dataset->image_shape() != model->input_shape())
    throw InputError("dataset images do not fit the model input");

  SmoothGradConfig sg = impl_->cfg.defaults.saliency;
  if (auto m = count_field(body, "m")) sg.ig_steps = *m;
  if (auto n = count_field(body, "n")) sg.samples = *n;
  if (auto s = number_field(body, "sigma")) sg.sigma = *s;
  sg.seed = count_field(body, "seed").value_or(0);
  if (sg.ig_steps == 0 || sg.samples == 0) throw InputError("m and n must be >= 1");
  if (sg.sigma && !(*sg.sigma >= 0.0)) throw InputError("sigma must be >= 0");

  const Tensor x0 = dataset->image(index, model->input_range());
  const ImportanceMap imp = smoothgrad(*model, x0, black_baseline(*model), sg);
  const Tensor corrected = imp.corrected();
  const double peak = *std::max_element(corrected.values().begin(), corrected.values().end());
  json out{{"shape", corrected.shape()},
           {"target", sg.target.value_or(forward(*model, x0).predicted_label)},
           {"max", peak},
           {"png", base64_encode(encode_png(heat_map(corrected)))},
           {"regions", json::array()},
           {"most_vulnerable", nullptr}};

  if (const json* window = field(body, "window")) {
    if (!window->is_object()) throw InputError("window must be an object {h, w}");
    const auto h = count_field(*window, "h"), w = count_field(*window, "w");
    if (!h || !w) throw InputError("window needs h and w");
    const std::size_t k = count_field(body, "k").value_or(1);
    if (k == 0) throw InputError("k must be >= 1");
    const RadiusConfig rc{impl_->cfg.defaults.deepfool, impl_->cfg.defaults.bb};
    const auto measured = refine_topk(*model, x0, imp, *h, *w, k, rc);
    for (const auto& r : measured) out["regions"].push_back(region_json(r));
    out["most_vulnerable"] = region_json(most_vulnerable(measured));
  }
  return out;
}

void AttackService::Impl::routes(AttackService& svc) {
  auto reply = [](httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  // Runs fn and maps library errors onto HTTP statuses.
  auto guarded = [reply](auto fn) {
    return [reply, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const NotFound& e) {
        reply(res, 404, {{"error", e.what()}});
      } catch (const InputError& e) {
        reply(res, 400, {{"error", e.what()}});
      } catch (const std::exception& e) {
        reply(res, 500, {{"error", e.what()}});
      }
    };
  };
  auto parse_body = [](const httplib::Request& req) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) throw InputError("request body is not valid JSON");
    return body;
  };
  auto parse_index = [](const std::string& text) {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) throw NotFound("bad image index '" + text + "'");
    return v;
  };

  http.set_payload_max_length(16 * 1024 * 1024);
  // httplib defaults to SO_REUSEPORT, which lets a second server share a busy
  // port silently. Plain SO_REUSEADDR keeps restarts quick and still fails.
  http.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });

  http.Get("/models", guarded([&svc, reply](const httplib::Request&, httplib::Response& res) {
             reply(res, 200, svc.models_json());
           }));
  http.Get("/datasets", guarded([&svc, reply](const httplib::Request&, httplib::Response& res) {
             reply(res, 200, svc.datasets_json());
           }));
  http.Get(R"(/datasets/([^/]+)/images/(\d+)\.png)",
           guarded([this, parse_index](const httplib::Request& req, httplib::Response& res) {
             auto it = cfg.datasets.find(req.matches[1]);
             if (it == cfg.datasets.end()) throw NotFound("unknown dataset");
             const Dataset& d = *it->second;
             const std::size_t i = parse_index(req.matches[2]);
             if (i >= d.size()) throw NotFound("image index out of range");
             const auto png = encode_png({d.image_shape()[0], d.image_shape()[1], d.image_shape()[2], d.raw(i)});
             res.set_content(std::string(png.begin(), png.end()), "image/png");
           }));
  http.Get(R"(/datasets/([^/]+)/images/(\d+))",
           guarded([&svc, reply, parse_index](const httplib::Request& req, httplib::Response& res) {
             const std::string model = req.has_param("model") ? req.get_param_value("model") : "";
             reply(res, 200, svc.image_json(req.matches[1], parse_index(req.matches[2]), model));
           }));
  http.Post("/attacks", guarded([&svc, reply, parse_body](const httplib::Request& req, httplib::Response& res) {
              reply(res, 202, {{"job_id", svc.submit(parse_body(req))}});
            }));
  http.Get(R"(/attacks/([^/]+))", guarded([&svc, reply](const httplib::Request& req, httplib::Response& res) {
             const std::string id = req.matches[1];
             auto job = svc.job(id);
             if (!job) throw NotFound("unknown job '" + id + "'");
             json out{{"job_id", id}, {"status", to_string(job->status)}};
             if (job->error) out["error"] = *job->error;
             if (job->report) out["report"] = json::parse(*job->report);
             if (job->timing) out["timing"] = *job->timing;
             json urls = json::object();
             for (const auto& [name, bytes] : job->images) urls[name] = "/attacks/" + id + "/images/" + name + ".png";
             out["images"] = urls;
             reply(res, 200, out);
           }));
  http.Get(R"(/attacks/([^/]+)/images/([a-z]+)\.png)",
           guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             auto job = svc.job(req.matches[1]);
             if (!job) throw NotFound("unknown job");
             auto it = job->images.find(req.matches[2]);
             if (it == job->images.end()) throw NotFound("no such image for this job");
             res.set_content(std::string(it->second.begin(), it->second.end()), "image/png");
           }));
  http.Post("/importance", guarded([&svc, reply, parse_body](const httplib::Request& req, httplib::Response& res) {
              reply(res, 200, svc.importance(parse_body(req)));
            }));
}

int AttackService::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->http.bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind " + host + " to a free port");
  } else if (!impl_->http.bind_to_port(host, port)) {
    throw Error("cannot bind " + host + ":" + std::to_string(port) + " (address in use or not available)");
  }
  return bound;
}

void AttackService::run() { impl_->http.listen_after_bind(); }

void AttackService::stop() {
  if (impl_->http.is_running()) impl_->http.stop();
}

std::pair<std::string, int> parse_bind_address(const std::string& text) {
  const auto colon = text.rfind(':');
  std::string host = colon == std::string::npos ? "" : text.substr(0, colon);
  const std::string port_text = colon == std::string::npos ? text : text.substr(colon + 1);
  int port = -1;
  auto [p, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc() || p != port_text.data() + port_text.size() || port < 0 || port > 65535)
    throw InputError("bad bind address '" + text + "', expected host:port");
  if (host.empty()) host = "127.0.0.1";
  return {host, port};
}

}  // namespace maskadv
