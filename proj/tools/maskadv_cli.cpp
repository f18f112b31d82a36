// Command-line front end: one attack per invocation, or --serve for the HTTP API.
//
// Exit codes: 0 attack succeeded, 2 attack found no adversarial example, 1 error.

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include "maskadv/dataset.hpp"
#include "maskadv/errors.hpp"
#include "maskadv/model_io.hpp"
#include "maskadv/run_io.hpp"
#include "maskadv/service.hpp"

namespace fs = std::filesystem;
using namespace maskadv;

namespace {

struct Options {
  std::optional<double> eps;
  std::string region = "whole";
  bool imperceptible = false;
  std::optional<double> ratio;
  std::vector<std::string> datasets;
  std::vector<std::string> models;
  std::size_t index = 0;
  std::optional<std::string> mask_file;
  std::string output = "runs";
  std::uint64_t seed = 0;
  std::optional<std::string> serve;
};

// An existing path, or a name looked up under $MASKADV_DATA_DIR and ./data.
Dataset resolve_dataset(const std::string& spec) {
  std::vector<fs::path> candidates{spec};
  if (const char* dir = std::getenv("MASKADV_DATA_DIR")) candidates.push_back(fs::path(dir) / spec);
  candidates.push_back(fs::path("data") / spec);
  for (const fs::path& p : candidates)
    if (fs::exists(p) || fs::exists(p.string() + "-images-idx3-ubyte")) return Dataset::open(p);
  throw InputError("dataset '" + spec + "' not found (tried the path, $MASKADV_DATA_DIR and ./data)");
}

ConstraintOptions constraint_from(const Options& o, std::size_t height, std::size_t width) {
  if (o.region != "whole" && o.region != "select")
    throw InputError("--region must be 'whole' or 'select', got '" + o.region + "'");
  if (o.mask_file && o.region != "select") throw InputError("--mask-file is only used with --region select");
  ConstraintOptions c;
  c.eps = o.eps;
  if (o.imperceptible) {
    if (o.region == "select") throw InputError("--imperceptible cannot be combined with --region select");
    if (o.ratio) throw InputError("--imperceptible cannot be combined with --ratio");
    if (o.eps) throw InputError("--imperceptible sets its own bounds; drop --eps");
    c.kind = "imperceptible";
    c.adaptive = true;
  } else if (o.ratio) {
    if (o.region == "select") throw InputError("--ratio cannot be combined with --region select");
    c.kind = "ratio";
    c.ratio = o.ratio;
  } else if (o.region == "select") {
    if (!o.mask_file)
      throw InputError("--region select needs --mask-file when no interactive UI is attached (see --serve)");
    c.kind = "region";
    c.region = load_region_mask(*o.mask_file, height, width);
  } else {
    c.kind = "uniform";
  }
  return c;
}

int run_once(const Options& o) {
  if (o.models.size() != 1) throw InputError("give exactly one --path_model for an attack");
  if (o.datasets.size() != 1) throw InputError("give exactly one --dataset for an attack");
  auto model = std::make_shared<const NetworkModel>(load_model(o.models.front()));
  const Dataset dataset = resolve_dataset(o.datasets.front());
  if (dataset.image_shape() != model->input_shape())
    throw InputError("dataset images " + shape_to_string(dataset.image_shape()) + " do not fit the model input " +
                     shape_to_string(model->input_shape()));
  Tensor x0 = dataset.image(o.index, model->input_range());
  const ImageDims dims = image_dims(x0.shape());

  const AttackRequest req = make_request(model, x0, constraint_from(o, dims.height, dims.width), o.seed);
  const AttackResult result = run_attack(req);
  const fs::path dir = write_run(o.output, new_job_id(), result, req.x0, model->input_range());
  std::cout << report_text(result) << "\n" << "run: " << dir.string() << "\n";
  return result.success ? 0 : 2;
}

int serve(const Options& o) {
  if (o.eps || o.ratio || o.imperceptible || o.mask_file || o.region != "whole")
    throw InputError("attack options are set per request in --serve mode");
  if (o.models.empty()) throw InputError("--serve needs at least one --path_model");
  if (o.datasets.empty()) throw InputError("--serve needs at least one --dataset");
  ServiceConfig cfg;
  for (const auto& path : o.models) {
    const std::string name = fs::path(path).stem().string();
    if (cfg.models.count(name)) throw InputError("two models share the name '" + name + "'");
    cfg.models[name] = std::make_shared<const NetworkModel>(load_model(path));
  }
  for (const auto& spec : o.datasets) {
    auto d = std::make_shared<const Dataset>(resolve_dataset(spec));
    if (cfg.datasets.count(d->name())) throw InputError("two datasets share the name '" + d->name() + "'");
    cfg.datasets[d->name()] = d;
  }
  cfg.output_dir = o.output;
  if (const char* w = std::getenv("MASKADV_WORKERS")) cfg.workers = std::max(1, std::atoi(w));
  const auto [host, port] = parse_bind_address(*o.serve);

  // Handle SIGINT/SIGTERM on a dedicated thread so shutdown runs outside signal context.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  AttackService service(std::move(cfg));
  const int bound = service.bind(host, port);
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  service.run();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mask-constrained adversarial examples (DeepFool + boundary walk)"};
  Options o;
  app.add_option("--eps", o.eps, "Perturbation bound per value, in (0, range width]");
  app.add_option("--region", o.region, "whole: every pixel; select: pixels from --mask-file")
      ->check(CLI::IsMember({"whole", "select"}));
  app.add_flag("--imperceptible", o.imperceptible, "Bound each value by its local variance, loosened adaptively");
  app.add_option("--ratio", o.ratio, "Attack only the most important pixels: a fraction < 1 or a pixel count");
  app.add_option("--dataset", o.datasets, "Dataset path or name (repeatable with --serve)");
  app.add_option("--path_model", o.models, "Model JSON file (repeatable with --serve)");
  app.add_option("--index", o.index, "Image index in the dataset");
  app.add_option("--mask-file", o.mask_file, "Region mask (PNG or tensor JSON) for --region select");
  app.add_option("--output", o.output, "Directory that receives one sub-directory per run");
  app.add_option("--seed", o.seed, "Seed for importance sampling");
  app.add_option("--serve", o.serve, "Serve the HTTP API on host:port instead of attacking");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    return o.serve ? serve(o) : run_once(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
