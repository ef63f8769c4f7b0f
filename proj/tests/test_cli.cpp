// Apache License, Version 2.0, refer to LICENSE.txt

#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "dpgp/cli.hpp"
#include "dpgp/errors.hpp"
#include "dpgp/synth.hpp"
#include "helpers.hpp"

using namespace dpgp;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "dpgp");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

/// One pattern trained on uniform (10, 0) motion with matching prior mean.
fs::path constant_fixture(const fs::path& dir, std::size_t count_mass = 1) {
  FittedModel m;
  m.roi = {-10, 100, -10, 10, 4, 2};
  for (std::size_t i = 0; i < 3; ++i) {
    Frame f{i, 0.5 * static_cast<double>(i), {}};
    for (std::size_t j = 0; j < count_mass; ++j) {
      f.vehicles.push_back({10.0 * static_cast<double>(i + j), 1.0, 10.0, 0.0});
    }
    m.frames.push_back(f);
  }
  m.prior.mu0_x = 10;
  m.prior.mu0_y = 0;
  m.prior.sigma0_sq_x = 1;
  m.prior.sigma0_sq_y = 1;
  m.dists = fit_empirical_dists(m.frames, m.roi);
  m.state = make_single_pattern_state(3, KernelParams{1, 1, 5, 5, 1}, 10, 0, 1.0);
  const fs::path path = dir / "constant.dpgp";
  save_model(m, path);
  return path;
}

std::size_t data_rows(const fs::path& csv) {
  const std::string t = testutil::slurp(csv);
  return static_cast<std::size_t>(std::count(t.begin(), t.end(), '\n')) - 1;
}

/// Bundled 150-frame synthetic run shared by several cases.
const fs::path& fitted_run() {
  static const fs::path dir = [] {
    const fs::path d = testutil::temp_dir("cli_fit");
    REQUIRE(run({"synth", "--out", (d / "data").string()}) == 0);
    REQUIRE(run({"fit", "--input", (d / "data/trajectories.csv").string(), "--roi", "0,100,0,100",
                 "--n-gibbs", "10", "--seed", "3", "--quiet", "--out", (d / "run").string()}) == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("fit on the synthetic dataset writes a complete run") {
    const fs::path run_dir = fitted_run() / "run";
    for (const char* f : {"model.dpgp", "trace.csv", "proportions.csv", "manifest.json"}) {
      CHECK(fs::exists(run_dir / f));
    }
    const auto manifest = nlohmann::json::parse(testutil::slurp(run_dir / "manifest.json"));
    CHECK(manifest["result"]["K"].get<int>() >= 2);
    CHECK(manifest["config"]["n_gibbs"].get<int>() == 10);
    CHECK(manifest["config"]["seed"].get<int>() == 3);
    CHECK(data_rows(run_dir / "trace.csv") == 10);
  }

  TEST_CASE("missing input is an ingestion failure naming the path") {
    RunConfig c;
    c.input = "/no/such/trajectories.csv";
    c.output_dir = testutil::temp_dir("cli_missing");
    std::ostringstream log;
    CHECK(cmd_fit(c, log) == kExitIngestion);
    CHECK(log.str().find("/no/such/trajectories.csv") != std::string::npos);
  }

  TEST_CASE("zero iterations save the single-pattern model") {
    const fs::path d = testutil::temp_dir("cli_zero");
    REQUIRE(run({"synth", "--frames", "20", "--out", (d / "data").string()}) == 0);
    CHECK(run({"fit", "--input", (d / "data/trajectories.csv").string(), "--n-gibbs", "0",
               "--quiet", "--out", (d / "run").string()}) == 0);
    CHECK(load_model(d / "run/model.dpgp").state.K() == 1);
  }

  TEST_CASE("config files and overrides") {
    const fs::path d = testutil::temp_dir("cli_config");
    REQUIRE(run({"synth", "--frames", "20", "--out", (d / "data").string()}) == 0);
    testutil::write_text(d / "run.json", "{\"input\": \"" + (d / "data/trajectories.csv").string() +
                                             "\", \"n_gibbs\": 50, \"roi\": [0, 100, 0, 100], "
                                             "\"bins\": [5, 5], \"output_dir\": \"" +
                                             (d / "run").string() + "\"}");
    CHECK(run({"fit", "--config", (d / "run.json").string(), "--n-gibbs", "1", "--quiet"}) == 0);
    const FittedModel m = load_model(d / "run/model.dpgp");
    CHECK(m.prior.n_gibbs == 1);
    CHECK(m.roi.n_bins_x == 5);

    testutil::write_text(d / "bad.json", "{\"n_gibbz\": 3}");
    CHECK(run({"fit", "--config", (d / "bad.json").string()}) == kExitConfig);
    testutil::write_text(d / "neg.json", "{\"a\": -1, \"input\": \"" +
                                             (d / "data/trajectories.csv").string() + "\"}");
    CHECK(run({"fit", "--config", (d / "neg.json").string(), "--out", (d / "neg").string()}) ==
          kExitConfig);
    CHECK(run({"fit", "--bogus-flag"}) == kExitConfig);
  }

  TEST_CASE("simulate on the constant fixture follows Euler") {
    const fs::path d = testutil::temp_dir("cli_sim");
    const fs::path model = constant_fixture(d);
    testutil::write_text(d / "frame.csv", "x,y\n0,0\n");
    CHECK(run({"simulate", "--model", model.string(), "--frame", (d / "frame.csv").string(),
               "--pattern", "1", "--dt", "0.5", "--steps", "4", "--out", (d / "out").string()}) == 0);
    CHECK(testutil::slurp(d / "out/trajectories.csv") ==
          "vehicle_id,t,x,y,vx,vy\n0,0,0,0,10,0\n0,0.5,5,0,10,0\n0,1,10,0,10,0\n"
          "0,1.5,15,0,10,0\n0,2,20,0,10,0\n");
    CHECK(run({"simulate", "--model", model.string(), "--frame", (d / "frame.csv").string(),
               "--out", (d / "out2").string()}) == kExitConfig);
  }

  TEST_CASE("generate draws as many vehicles as the point-mass count") {
    const fs::path d = testutil::temp_dir("cli_gen");
    const fs::path model = constant_fixture(d, 3);
    CHECK(run({"simulate", "--model", model.string(), "--generate", "--steps", "2", "--out",
               (d / "out").string()}) == 0);
    const auto report = nlohmann::json::parse(testutil::slurp(d / "out/classification.json"));
    CHECK(report["generated_vehicles"].get<int>() == 3);
    const std::string t = testutil::slurp(d / "out/trajectories.csv");
    std::set<std::string> ids;
    std::istringstream in(t);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) ids.insert(line.substr(0, line.find(',')));
    CHECK(ids.size() == 3);
  }

  TEST_CASE("a training frame is classified into its fitted pattern") {
    const fs::path run_dir = fitted_run() / "run";
    const FittedModel m = load_model(run_dir / "model.dpgp");
    int agree = 0;
    for (std::size_t i : {0u, 17u, 42u, 99u, 149u}) {
      const fs::path out = fitted_run() / ("sim" + std::to_string(i));
      REQUIRE(run({"simulate", "--model", (run_dir / "model.dpgp").string(), "--frame-index",
                   std::to_string(i), "--steps", "3", "--out", out.string()}) == 0);
      const auto report = nlohmann::json::parse(testutil::slurp(out / "classification.json"));
      agree += report["classified_pattern"] == report["fitted_pattern"];
      CHECK(report["fitted_pattern"].get<std::int64_t>() == to_int(m.state.assignments[i]));
    }
    CHECK(agree == 5);
  }

  TEST_CASE("export-field grid, unknown ids and determinism") {
    const fs::path d = testutil::temp_dir("cli_field");
    const fs::path model = constant_fixture(d);
    CHECK(run({"export-field", "--model", model.string(), "--pattern", "1", "--nx", "2", "--ny", "2",
               "--out", (d / "a.csv").string()}) == 0);
    CHECK(data_rows(d / "a.csv") == 4);
    CHECK(run({"export-field", "--model", model.string(), "--pattern", "1", "--nx", "2", "--ny", "2",
               "--out", (d / "b.csv").string()}) == 0);
    CHECK(testutil::slurp(d / "a.csv") == testutil::slurp(d / "b.csv"));

    std::ostringstream log;
    ExportFieldArgs args;
    args.model = model;
    args.pattern = 9;
    args.output = d / "c.csv";
    CHECK(cmd_export_field(args, log) == kExitConfig);
    CHECK(log.str().find("valid ids: 1") != std::string::npos);
  }

  TEST_CASE("synth output is seeded") {
    const fs::path d = testutil::temp_dir("cli_synth");
    CHECK(run({"synth", "--seed", "4", "--frames", "30", "--out", (d / "a").string()}) == 0);
    CHECK(run({"synth", "--seed", "4", "--frames", "30", "--out", (d / "b").string()}) == 0);
    CHECK(testutil::slurp(d / "a/trajectories.csv") == testutil::slurp(d / "b/trajectories.csv"));
    CHECK(data_rows(d / "a/labels.csv") == 30);
    CHECK(run({"synth", "--preset", "nothing", "--out", (d / "c").string()}) == kExitConfig);
  }

  TEST_CASE("inspect reports the model") {
    const fs::path run_dir = fitted_run() / "run";
    const FittedModel m = load_model(run_dir / "model.dpgp");
    std::ostringstream out, log;
    CHECK(cmd_inspect(run_dir / "model.dpgp", out, log) == 0);
    const std::string text = out.str();
    CHECK(text.find("patterns K: " + std::to_string(m.state.K()) + "\n") != std::string::npos);
    const auto pos = text.find("proportion sum: ");
    REQUIRE(pos != std::string::npos);
    CHECK(std::abs(std::stod(text.substr(pos + 16)) - 1.0) <= 1e-12);

    testutil::write_text(fitted_run() / "corrupt.dpgp", "dpgp-model 1\n[roi]\n{\"x_min\":\n");
    CHECK(cmd_inspect(fitted_run() / "corrupt.dpgp", out, log) == kExitConfig);
  }

  TEST_CASE("exit codes follow the error kind") {
    CHECK(exit_code_for(ConfigError("x")) == kExitConfig);
    CHECK(exit_code_for(ModelLoadError("x")) == kExitConfig);
    CHECK(exit_code_for(IngestionError("x")) == kExitIngestion);
    CHECK(exit_code_for(NumericalError("x")) == kExitNumerics);
    CHECK(exit_code_for(ConditioningError("x", {})) == kExitNumerics);
    CHECK(exit_code_for(std::runtime_error("x")) == kExitFailure);
  }
}
