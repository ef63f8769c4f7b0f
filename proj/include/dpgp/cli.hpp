// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "dpgp/core_model.hpp"
#include "dpgp/data_io.hpp"
#include "dpgp/dp_inference.hpp"

namespace dpgp {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitIngestion = 3,
  kExitNumerics = 4,
};

/// Fully resolved settings of a fit run.
struct RunConfig {
  std::filesystem::path input;
  std::filesystem::path output_dir = "dpgp_run";
  IngestConfig ingest;
  std::optional<RegionOfInterest> roi;  // bounding box of the data when unset
  int n_bins_x = 20;
  int n_bins_y = 20;
  double dt = 0.5;
  std::size_t frame_cap = 1000;
  PriorConfig prior;
  AssignmentMode assignment = AssignmentMode::kMap;
  std::size_t training_cap = kDefaultTrainingCap;
  std::size_t workers = 1;
  bool quiet = false;
};

/// Reads a JSON config file; unknown keys are rejected.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const std::string& text);
/// Output directory, worker count and verbosity are left out: they do not affect results.
std::string run_config_to_json(const RunConfig& config);

/// Maps an exception from the library onto an exit code.
int exit_code_for(const std::exception& e);

int cmd_fit(const RunConfig& config, std::ostream& log);

struct SimulateArgs {
  std::filesystem::path model;
  std::filesystem::path output_dir = "dpgp_sim";
  std::optional<std::filesystem::path> frame_file;
  std::optional<std::size_t> frame_index;
  bool generate = false;
  std::optional<std::int64_t> pattern;
  double dt = 0.5;
  int steps = 20;
  Integrator integrator = Integrator::kEuler;
  RolloutVelocity velocity = RolloutVelocity::kMean;
  std::uint64_t seed = 1;
};
int cmd_simulate(const SimulateArgs& args, std::ostream& log);

struct ExportFieldArgs {
  std::filesystem::path model;
  std::int64_t pattern = 1;
  int nx = 20;
  int ny = 20;
  std::filesystem::path output = "field.csv";
};
int cmd_export_field(const ExportFieldArgs& args, std::ostream& log);

struct SynthArgs {
  std::optional<std::filesystem::path> spec_file;
  std::string preset = "planted3";
  std::filesystem::path output_dir = "dpgp_synth";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_frames;
};
int cmd_synth(const SynthArgs& args, std::ostream& log);

int cmd_inspect(const std::filesystem::path& model, std::ostream& out, std::ostream& log);

/// Parses argv and dispatches to a subcommand.
int run_cli(int argc, char** argv);

}  // namespace dpgp
