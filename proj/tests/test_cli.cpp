#include <doctest.h>

#include <fstream>
#include <sstream>

#include "maskadv/image_io.hpp"
#include "maskadv/model_io.hpp"
#include "maskadv/service.hpp"
#include "support.hpp"

using namespace maskadv;
using namespace maskadv::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string err;
  fs::path run_dir;  // empty when nothing was written

  std::string report() const {
    const auto bytes = read_file(run_dir / "report.json");
    return std::string(bytes.begin(), bytes.end());
  }
  json report_json() const { return json::parse(report()); }
};

CliRun cli(const std::string& name, const std::string& args) {
  const fs::path dir = scratch_dir("cli_" + name);
  const std::string cmd = cli_binary().string() + " --path_model " + fixture_model().string() + " --dataset " +
                          mnist_dir().string() + " --output " + (dir / "runs").string() + " " + args + " > " +
                          (dir / "out.txt").string() + " 2> " + (dir / "err.txt").string();
  CliRun r{run_command(cmd), {}, {}};
  std::ifstream in(dir / "err.txt");
  std::stringstream ss;
  ss << in.rdbuf();
  r.err = ss.str();
  if (fs::exists(dir / "runs"))
    for (const auto& e : fs::directory_iterator(dir / "runs")) r.run_dir = e.path();
  return r;
}

}  // namespace

TEST_CASE("cli uniform attack") {
  const CliRun r = cli("uniform", "--eps 0.1 --region whole --index 0");
  REQUIRE(r.code != 1);
  REQUIRE(!r.run_dir.empty());
  const json rep = r.report_json();
  CHECK((r.code == 0) == rep["success"].get<bool>());
  if (r.code == 0) {
    CHECK(rep["norms"]["linf"].get<double>() <= 0.1 + 1e-12);
    for (const char* f : {"report.json", "timing.json", "clean.png", "mask.png", "adversarial.png", "delta.png"})
      CHECK(fs::exists(r.run_dir / f));
  }
}

TEST_CASE("cli ratio attack records the pixel count") {
  const CliRun r = cli("ratio", "--ratio 0.3 --index 1 --seed 5");
  REQUIRE(r.code != 1);
  const json rep = r.report_json();
  CHECK(rep["constraint"]["kind"] == "ratio");
  CHECK(rep["constraint"]["params"]["pixels"] == 235);
  CHECK(rep["seed"] == 5);
}

TEST_CASE("cli imperceptible attack on a constant image exits 2") {
  const fs::path data = scratch_dir("cli_flat_data");
  write_png(data / "flat.png", Image8{28, 28, 1, std::vector<std::uint8_t>(784, 128)});
  write_file(data / "labels.json", R"({"flat.png": 3})");
  const fs::path out = scratch_dir("cli_flat");
  const std::string cmd = cli_binary().string() + " --imperceptible --path_model " + fixture_model().string() +
                          " --dataset " + data.string() + " --output " + out.string() + " > /dev/null";
  CHECK(run_command(cmd) == 2);
  REQUIRE(!fs::is_empty(out));
  const fs::path dir = fs::directory_iterator(out)->path();
  const auto bytes = read_file(dir / "report.json");
  const json rep = json::parse(std::string(bytes.begin(), bytes.end()));
  CHECK(rep["success"] == false);
  CHECK(rep["norms"].is_null());
  CHECK_FALSE(fs::exists(dir / "adversarial.png"));
}

TEST_CASE("cli region select needs a mask file") {
  const CliRun bare = cli("select_bare", "--region select");
  CHECK(bare.code == 1);
  CHECK(bare.err.find("--mask-file") != std::string::npos);

  const fs::path masks = scratch_dir("cli_masks");
  Image8 m{28, 28, 1, std::vector<std::uint8_t>(784, 0)};
  for (std::size_t y = 4; y < 24; ++y)
    for (std::size_t x = 4; x < 24; ++x) m.data[y * 28 + x] = 255;
  write_png(masks / "m.png", m);
  const CliRun r = cli("select", "--region select --mask-file " + (masks / "m.png").string());
  REQUIRE(r.code != 1);
  CHECK(r.report_json()["constraint"]["params"]["pixels"] == 400);
}

TEST_CASE("cli misconfigurations have distinct messages") {
  const std::vector<std::string> bad{
      "--imperceptible --ratio 0.3",
      "--imperceptible --eps 0.1",
      "--imperceptible --region select",
      "--ratio 0.3 --region select",
      "--mask-file x.png",
      "--eps 1.5",
      "--eps 0",
      "--ratio 5000",
      "--index 100000",
      "--region diagonal",
  };
  std::vector<std::string> messages;
  for (std::size_t i = 0; i < bad.size(); ++i) {
    const CliRun r = cli("bad" + std::to_string(i), bad[i]);
    CHECK_MESSAGE(r.code == 1, bad[i]);
    CHECK_MESSAGE(r.run_dir.empty(), bad[i]);
    messages.push_back(r.err);
  }
  std::sort(messages.begin(), messages.end());
  CHECK(std::unique(messages.begin(), messages.end()) == messages.end());
}

TEST_CASE("cli reports are deterministic") {
  const CliRun a = cli("det_a", "--ratio 0.2 --index 4 --seed 11");
  const CliRun b = cli("det_b", "--ratio 0.2 --index 4 --seed 11");
  REQUIRE(a.code != 1);
  CHECK(a.report() == b.report());
  CHECK(a.run_dir.filename() != b.run_dir.filename());
}

TEST_CASE("cli and service reports are byte-identical") {
  const CliRun c = cli("vs_api", "--eps 0.15 --index 7 --seed 2");
  REQUIRE(c.code != 1);

  ServiceConfig cfg;
  cfg.models["mnist_mlp"] = std::make_shared<const NetworkModel>(load_model(fixture_model()));
  cfg.datasets["mnist"] = std::make_shared<const Dataset>(Dataset::open(mnist_dir()));
  cfg.output_dir = scratch_dir("vs_api_service");
  cfg.workers = 1;
  AttackService service(std::move(cfg));
  const std::string id = service.submit(
      {{"index", 7}, {"seed", 2}, {"constraint", {{"kind", "uniform"}, {"eps", 0.15}}}});
  service.wait_idle();
  const auto job = service.job(id);
  REQUIRE(job);
  REQUIRE(job->report);
  CHECK(*job->report == c.report());
}
