// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgp/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpgp/errors.hpp"
#include "dpgp/simulation.hpp"
#include "dpgp/synth.hpp"

namespace dpgp {

namespace {

using nlohmann::json;

int guarded(std::ostream& log, const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

const char* assignment_name(AssignmentMode m) {
  return m == AssignmentMode::kMap ? "map" : "sample";
}

AssignmentMode assignment_from_name(const std::string& s) {
  if (s == "map") return AssignmentMode::kMap;
  if (s == "sample") return AssignmentMode::kSample;
  throw ConfigError("assignment must be 'map' or 'sample', got '" + s + "'");
}

RegionOfInterest bounding_roi(const std::vector<TrajectoryRecord>& records, int nx, int ny) {
  if (records.empty()) throw IngestionError("no trajectory records");
  RegionOfInterest r{records[0].x, records[0].x, records[0].y, records[0].y, nx, ny};
  for (const auto& rec : records) {
    r.x_min = std::min(r.x_min, rec.x);
    r.x_max = std::max(r.x_max, rec.x);
    r.y_min = std::min(r.y_min, rec.y);
    r.y_max = std::max(r.y_max, rec.y);
  }
  if (r.x_max - r.x_min <= 0) r.x_max = r.x_min + 1.0;
  if (r.y_max - r.y_min <= 0) r.y_max = r.y_min + 1.0;
  return r;
}

std::string counts_text(const IterationRecord& r) {
  std::string s;
  for (const auto& [id, n] : r.counts) {
    if (!s.empty()) s += ';';
    s += std::to_string(to_int(id)) + ':' + std::to_string(n);
  }
  return s;
}

void write_trace_csv(const GibbsTrace& trace, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "iteration,K,alpha,log_likelihood,sum_nk,counts\n";
  for (const auto& r : trace.records) {
    std::size_t total = 0;
    for (const auto& c : r.counts) total += c.second;
    out << r.iteration << ',' << r.K << ',' << format_double(r.alpha) << ','
        << format_double(r.log_likelihood) << ',' << total << ',' << counts_text(r) << '\n';
  }
}

void write_proportions_csv(const MixtureState& state, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "rank,pattern,n_k,proportion\n";
  const auto props = mixture_proportions(state);
  for (std::size_t i = 0; i < props.size(); ++i) {
    out << i + 1 << ',' << to_int(props[i].first) << ',' << state.find(props[i].first)->count()
        << ',' << format_double(props[i].second) << '\n';
  }
}

const MotionPattern& require_pattern(const FittedModel& model, std::int64_t id) {
  const MotionPattern* p = model.state.find(PatternId{id});
  if (!p) {
    std::string ids;
    for (const auto& q : model.state.patterns) {
      ids += (ids.empty() ? "" : ", ") + std::to_string(to_int(q.id));
    }
    throw ConfigError("unknown pattern id " + std::to_string(id) + "; valid ids: " + ids);
  }
  return *p;
}

/// Predictor for the unseen-pattern option: the GP prior with the mean
/// length scale of the Gamma hyperprior.
GpPredictor prior_predictor(const FittedModel& model) {
  KernelParams params;
  params.sigma_sq_x = model.prior.sigma0_sq_x;
  params.sigma_sq_y = model.prior.sigma0_sq_y;
  params.w_x = model.prior.a * model.prior.b;
  params.w_y = params.w_x;
  params.sigma_n_sq = model.prior.sigma_n_sq;
  return GpPredictor(TrainingSet{}, params, model.prior.mu0_x, model.prior.mu0_y);
}

json scores_json(const Classification& c) {
  json options = json::array();
  const auto& s = c.scores;
  for (std::size_t k = 0; k < s.score.size(); ++k) {
    const bool is_new = k == s.new_index();
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    options.push_back({{"pattern", is_new ? json("new") : json(to_int(s.ids[k]))},
                       {"log_prior", num(s.log_prior[k])},
                       {"log_likelihood", num(s.log_likelihood[k])},
                       {"score", num(s.score[k])}});
  }
  return options;
}

template <class T>
void set_if(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ModelLoadError*>(&e)) {
    return kExitConfig;
  }
  if (dynamic_cast<const IngestionError*>(&e) || dynamic_cast<const DomainError*>(&e)) {
    return kExitIngestion;
  }
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const ConditioningError*>(&e)) {
    return kExitNumerics;
  }
  return kExitFailure;
}

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected an object");
  static const std::set<std::string> known = {
      "input", "output_dir", "preset", "columns", "units", "max_bad_row_ratio", "roi", "bins",
      "dt", "frame_cap", "a", "b", "sigma_n_sq", "n_mc", "n_gibbs", "seed", "assignment",
      "training_cap", "workers"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "'");
  }
  RunConfig c;
  try {
    if (j.contains("preset")) {
      const auto preset = j.at("preset").get<std::string>();
      if (preset == "ngsim") {
        c.ingest = ngsim_ingest_config();
      } else if (preset != "default") {
        throw ConfigError("config: unknown preset '" + preset + "'");
      }
    }
    if (j.contains("input")) c.input = j.at("input").get<std::string>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("columns")) {
      const json& cj = j.at("columns");
      auto& cols = c.ingest.columns;
      set_if(cj, "vehicle_id", cols.vehicle_id);
      set_if(cj, "time", cols.time);
      set_if(cj, "x", cols.x);
      set_if(cj, "y", cols.y);
      if (cj.contains("vx")) cols.vx = cj.at("vx").get<std::string>();
      if (cj.contains("vy")) cols.vy = cj.at("vy").get<std::string>();
      if (cj.contains("delimiter")) {
        const auto d = cj.at("delimiter").get<std::string>();
        if (d.size() != 1) throw ConfigError("config: delimiter must be one character");
        cols.delimiter = d[0];
      }
    }
    if (j.contains("units")) {
      set_if(j.at("units"), "position_scale", c.ingest.units.position_scale);
      set_if(j.at("units"), "time_scale", c.ingest.units.time_scale);
    }
    set_if(j, "max_bad_row_ratio", c.ingest.max_bad_row_ratio);
    if (j.contains("bins")) {
      const auto b = j.at("bins").get<std::vector<int>>();
      if (b.size() != 2) throw ConfigError("config: bins needs two integers");
      c.n_bins_x = b[0];
      c.n_bins_y = b[1];
    }
    if (j.contains("roi")) {
      const auto r = j.at("roi").get<std::vector<double>>();
      if (r.size() != 4) throw ConfigError("config: roi needs [x_min, x_max, y_min, y_max]");
      c.roi = RegionOfInterest{r[0], r[1], r[2], r[3], c.n_bins_x, c.n_bins_y};
    }
    set_if(j, "dt", c.dt);
    set_if(j, "frame_cap", c.frame_cap);
    set_if(j, "a", c.prior.a);
    set_if(j, "b", c.prior.b);
    set_if(j, "sigma_n_sq", c.prior.sigma_n_sq);
    set_if(j, "n_mc", c.prior.n_mc);
    set_if(j, "n_gibbs", c.prior.n_gibbs);
    set_if(j, "seed", c.prior.rng_seed);
    if (j.contains("assignment")) c.assignment = assignment_from_name(j.at("assignment").get<std::string>());
    set_if(j, "training_cap", c.training_cap);
    set_if(j, "workers", c.workers);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_text(path));
}

std::string run_config_to_json(const RunConfig& c) {
  const auto& cols = c.ingest.columns;
  json columns = {{"vehicle_id", cols.vehicle_id}, {"time", cols.time}, {"x", cols.x},
                  {"y", cols.y}, {"delimiter", std::string(1, cols.delimiter)}};
  if (cols.vx) columns["vx"] = *cols.vx;
  if (cols.vy) columns["vy"] = *cols.vy;
  json j = {{"input", c.input.string()},
            {"columns", columns},
            {"units",
             {{"position_scale", c.ingest.units.position_scale},
              {"time_scale", c.ingest.units.time_scale}}},
            {"max_bad_row_ratio", c.ingest.max_bad_row_ratio},
            {"bins", {c.n_bins_x, c.n_bins_y}},
            {"dt", c.dt},
            {"frame_cap", c.frame_cap},
            {"a", c.prior.a},
            {"b", c.prior.b},
            {"sigma_n_sq", c.prior.sigma_n_sq},
            {"n_mc", c.prior.n_mc},
            {"n_gibbs", c.prior.n_gibbs},
            {"seed", c.prior.rng_seed},
            {"assignment", assignment_name(c.assignment)},
            {"training_cap", c.training_cap}};
  if (c.roi) j["roi"] = {c.roi->x_min, c.roi->x_max, c.roi->y_min, c.roi->y_max};
  return j.dump(2);
}

int cmd_fit(const RunConfig& config, std::ostream& log) {
  return guarded(log, [&] {
    if (config.input.empty()) throw ConfigError("no input file given");
    if (!std::filesystem::exists(config.input)) {
      throw IngestionError("input file not found: " + config.input.string());
    }
    if (config.frame_cap == 0) throw ConfigError("frame_cap must be positive");
    try {
      config.prior.validate();
    } catch (const DomainError& e) {
      throw ConfigError(std::string("prior: ") + e.what());
    }

    const ParsedRecords parsed = parse_trajectory_csv(config.input, config.ingest);
    if (parsed.report.rejected > 0) {
      log << "skipped " << parsed.report.rejected << " malformed rows of " << parsed.report.rows
          << '\n';
    }
    RegionOfInterest roi = config.roi ? *config.roi
                                      : bounding_roi(parsed.records, config.n_bins_x, config.n_bins_y);
    roi.n_bins_x = config.n_bins_x;
    roi.n_bins_y = config.n_bins_y;
    try {
      roi.validate();
    } catch (const DomainError& e) {
      throw ConfigError(std::string("roi: ") + e.what());
    }
    ExtractResult ex = extract_frames(parsed.records, roi, config.dt);
    if (ex.frames.empty()) throw IngestionError("no frames with vehicles inside the region");
    const std::size_t extracted = ex.frames.size();
    std::vector<Frame> frames = downsample_frames(std::move(ex.frames), config.frame_cap);
    log << "frames: " << frames.size() << " (extracted " << extracted << ")\n";

    FittedModel model;
    model.roi = roi;
    model.prior = config.prior;
    fill_data_moments(model.prior, frames);
    model.options.assignment = config.assignment;
    model.options.training_cap = config.training_cap;
    model.options.workers = config.workers;
    if (!config.quiet) model.options.progress = &log;
    model.dists = fit_empirical_dists(frames, roi);
    GibbsResult result = run_gibbs(frames, model.prior, model.dists, model.options);
    model.frames = std::move(frames);
    model.state = std::move(result.state);
    model.trace = std::move(result.trace);
    model.options.progress = nullptr;

    const auto& dir = config.output_dir;
    std::filesystem::create_directories(dir);
    save_model(model, dir / "model.dpgp");
    write_trace_csv(model.trace, dir / "trace.csv");
    write_proportions_csv(model.state, dir / "proportions.csv");

    const auto& s = ex.stats;
    json manifest = {
        {"command", "fit"},
        {"config", json::parse(run_config_to_json(config))},
        {"resolved_roi", {roi.x_min, roi.x_max, roi.y_min, roi.y_max}},
        {"data_moments",
         {{"mu0_x", model.prior.mu0_x},
          {"mu0_y", model.prior.mu0_y},
          {"sigma0_sq_x", model.prior.sigma0_sq_x},
          {"sigma0_sq_y", model.prior.sigma0_sq_y}}},
        {"ingestion",
         {{"rows", parsed.report.rows},
          {"rejected_rows", parsed.report.rejected},
          {"records", s.input_records},
          {"emitted", s.emitted},
          {"duplicate_timestamp", s.duplicate_timestamp},
          {"underivable_velocity", s.underivable_velocity},
          {"off_grid", s.off_grid},
          {"outside_roi", s.outside_roi},
          {"frames_extracted", extracted},
          {"frames_used", model.frames.size()}}},
        {"result", {{"K", model.state.K()}, {"alpha", model.state.alpha}}},
        {"outputs", {"model.dpgp", "trace.csv", "proportions.csv"}}};
    std::ofstream out = open_out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
    log << "K=" << model.state.K() << " written to " << dir.string() << '\n';
  });
}

int cmd_simulate(const SimulateArgs& args, std::ostream& log) {
  return guarded(log, [&] {
    const int sources = (args.frame_file ? 1 : 0) + (args.frame_index ? 1 : 0) + (args.generate ? 1 : 0);
    if (sources != 1) throw ConfigError("give exactly one of --frame, --frame-index, --generate");
    if (!(args.dt > 0) || args.steps < 1) throw ConfigError("dt must be positive and steps at least 1");
    const FittedModel model = load_model(args.model);

    Frame frame;
    bool has_velocity = true;
    if (args.frame_file) {
      std::ifstream probe(*args.frame_file);
      if (!probe) throw IngestionError("cannot open " + args.frame_file->string());
      std::string header;
      std::getline(probe, header);
      has_velocity = header.find("vx") != std::string::npos;
      frame = read_frame_csv(*args.frame_file, false);
      validate_frame(frame, model.roi);
    } else if (args.frame_index) {
      if (*args.frame_index >= model.frames.size()) {
        throw ConfigError("frame index " + std::to_string(*args.frame_index) + " out of range (" +
                          std::to_string(model.frames.size()) + " frames)");
      }
      frame = model.frames[*args.frame_index];
    }

    json report;
    std::optional<GpPredictor> predictor;
    if (args.pattern) {
      const MotionPattern& p = require_pattern(model, *args.pattern);
      predictor = pattern_predictor(model, p.id);
      report["pattern"] = to_int(p.id);
      report["source"] = "requested";
    }
    if (args.generate) {
      if (!predictor) {
        const auto props = mixture_proportions(model.state);
        predictor = pattern_predictor(model, props.front().first);
        report["pattern"] = to_int(props.front().first);
        report["source"] = "largest pattern";
      }
      Rng rng = make_stream(args.seed, {tag(StreamTag::kGenerate)});
      frame = generate_frame(*predictor, model.dists, rng);
      report["generated_vehicles"] = frame.size();
    } else if (has_velocity) {
      const Classification c = classify_frame(frame, model);
      report["classified_pattern"] = c.is_new ? json("new") : json(to_int(c.pattern));
      report["scores"] = scores_json(c);
      if (args.frame_index) {
        report["fitted_pattern"] = to_int(model.state.assignments[*args.frame_index]);
      }
      if (!predictor) {
        predictor = c.is_new ? prior_predictor(model) : pattern_predictor(model, c.pattern);
        report["pattern"] = c.is_new ? json("new") : json(to_int(c.pattern));
        report["source"] = "classified";
      }
    } else if (!predictor) {
      throw ConfigError("frame has no velocities; pass --pattern to choose a field");
    }

    SimulationOptions opts;
    opts.dt = args.dt;
    opts.n_steps = args.steps;
    opts.integrator = args.integrator;
    opts.velocity = args.velocity;
    opts.seed = args.seed;
    const auto trajectories = simulate_trajectories(*predictor, frame, model.roi, opts);
    std::filesystem::create_directories(args.output_dir);
    export_trajectories(trajectories, args.output_dir / "trajectories.csv");
    std::ofstream out = open_out(args.output_dir / "classification.json");
    out << report.dump(2) << '\n';
    log << "simulated " << trajectories.size() << " vehicles\n";
  });
}

int cmd_export_field(const ExportFieldArgs& args, std::ostream& log) {
  return guarded(log, [&] {
    if (args.nx < 1 || args.ny < 1) throw ConfigError("grid sizes must be positive");
    const FittedModel model = load_model(args.model);
    const MotionPattern& p = require_pattern(model, args.pattern);
    const GpPredictor predictor = pattern_predictor(model, p.id);
    const GridSpec grid{args.nx, args.ny};
    export_field(evaluate_field(predictor, grid.points(model.roi)), args.output);
    log << "field of pattern " << args.pattern << " written to " << args.output.string() << '\n';
  });
}

int cmd_synth(const SynthArgs& args, std::ostream& log) {
  return guarded(log, [&] {
    SynthSpec spec;
    if (args.spec_file) {
      spec = synth_spec_from_json(read_text(*args.spec_file));
    } else if (args.preset == "planted3") {
      spec = planted3_spec();
    } else {
      throw ConfigError("unknown synth preset '" + args.preset + "'");
    }
    if (args.seed) spec.seed = *args.seed;
    if (args.n_frames) spec.n_frames = *args.n_frames;
    spec.validate();
    const SynthTrajectories data = synth_trajectories(spec);
    const auto& dir = args.output_dir;
    std::filesystem::create_directories(dir);
    write_synth_csv(data, dir / "trajectories.csv", dir / "labels.csv");
    std::ofstream out = open_out(dir / "spec.json");
    out << synth_spec_to_json(spec) << '\n';
    log << data.tick_times.size() << " ticks, " << data.records.size() << " records written to "
        << dir.string() << '\n';
  });
}

int cmd_inspect(const std::filesystem::path& model_path, std::ostream& out, std::ostream& log) {
  return guarded(log, [&] {
    const FittedModel model = load_model(model_path);
    const auto& st = model.state;
    out << std::setprecision(10);
    out << "frames N: " << st.N() << '\n';
    out << "patterns K: " << st.K() << '\n';
    out << "alpha: " << st.alpha << '\n';
    out << "prior: a=" << model.prior.a << " b=" << model.prior.b
        << " sigma_n_sq=" << model.prior.sigma_n_sq << " n_mc=" << model.prior.n_mc
        << " n_gibbs=" << model.prior.n_gibbs << " seed=" << model.prior.rng_seed << '\n';
    out << "data moments: mu0=(" << model.prior.mu0_x << ", " << model.prior.mu0_y
        << ") sigma0_sq=(" << model.prior.sigma0_sq_x << ", " << model.prior.sigma0_sq_y << ")\n";
    out << "pattern,n_k,proportion,w_x,w_y,sigma_sq_x,sigma_sq_y\n";
    double total = 0.0;
    for (const auto& [id, share] : mixture_proportions(st)) {
      const MotionPattern& p = *st.find(id);
      total += share;
      out << to_int(id) << ',' << p.count() << ',' << share << ',' << p.params.w_x << ','
          << p.params.w_y << ',' << p.params.sigma_sq_x << ',' << p.params.sigma_sq_y << '\n';
    }
    out << "proportion sum: " << std::setprecision(17) << total << std::setprecision(10) << '\n';
    const auto& rec = model.trace.records;
    out << "trace iterations: " << rec.size() << '\n';
    if (!rec.empty()) {
      std::size_t k_min = rec.front().K, k_max = rec.front().K;
      bool sums_ok = true;
      for (const auto& r : rec) {
        k_min = std::min(k_min, r.K);
        k_max = std::max(k_max, r.K);
        std::size_t total_n = 0;
        for (const auto& c : r.counts) total_n += c.second;
        sums_ok = sums_ok && total_n == st.N();
      }
      out << "trace K range: " << k_min << ".." << k_max << '\n';
      out << "final log-likelihood: " << rec.back().log_likelihood << '\n';
      out << "counts sum to N every iteration: " << (sums_ok ? "yes" : "no") << '\n';
    }
  });
}

int run_cli(int argc, char** argv) {
  CLI::App app{"DP mixture of Gaussian-process velocity fields"};
  app.require_subcommand(1);

  RunConfig fit_cfg;
  std::string config_path;
  std::optional<std::string> input, out_dir, roi_text, bins_text, assignment;
  std::optional<std::uint64_t> seed;
  std::optional<double> a, b, sigma_n_sq, dt;
  std::optional<int> n_gibbs, n_mc;
  std::optional<std::size_t> workers, frame_cap, training_cap;
  bool quiet = false;
  auto* fit = app.add_subcommand("fit", "learn motion patterns from a trajectory file");
  fit->add_option("--config", config_path, "JSON run configuration");
  fit->add_option("--input", input, "trajectory CSV");
  fit->add_option("--out", out_dir, "output directory");
  fit->add_option("--seed", seed);
  fit->add_option("--a", a, "Gamma shape of the length-scale prior");
  fit->add_option("--b", b, "Gamma scale of the length-scale prior");
  fit->add_option("--sigma-n-sq", sigma_n_sq, "observation noise variance");
  fit->add_option("--n-gibbs", n_gibbs, "Gibbs iterations");
  fit->add_option("--n-mc", n_mc, "Monte-Carlo draws for the new-pattern likelihood");
  fit->add_option("--dt", dt, "frame spacing in seconds");
  fit->add_option("--workers", workers);
  fit->add_option("--roi", roi_text, "x_min,x_max,y_min,y_max");
  fit->add_option("--bins", bins_text, "nx,ny");
  fit->add_option("--frame-cap", frame_cap);
  fit->add_option("--training-cap", training_cap);
  fit->add_option("--assignment", assignment, "map or sample");
  fit->add_flag("--quiet", quiet, "no per-iteration progress");

  SimulateArgs sim;
  std::optional<std::string> integrator, rollout;
  auto* simulate = app.add_subcommand("simulate", "roll vehicles forward along a learned field");
  simulate->add_option("--model", sim.model)->required();
  simulate->add_option("--out", sim.output_dir);
  simulate->add_option("--frame", sim.frame_file, "CSV with x,y[,vx,vy]");
  simulate->add_option("--frame-index", sim.frame_index, "training frame to re-simulate");
  simulate->add_flag("--generate", sim.generate, "draw a frame from the model");
  simulate->add_option("--pattern", sim.pattern);
  simulate->add_option("--dt", sim.dt);
  simulate->add_option("--steps", sim.steps);
  simulate->add_option("--integrator", integrator, "euler or midpoint");
  simulate->add_option("--rollout", rollout, "mean or sampled");
  simulate->add_option("--seed", sim.seed);

  ExportFieldArgs fld;
  auto* export_field_cmd = app.add_subcommand("export-field", "write a pattern's mean field");
  export_field_cmd->add_option("--model", fld.model)->required();
  export_field_cmd->add_option("--pattern", fld.pattern)->required();
  export_field_cmd->add_option("--nx", fld.nx);
  export_field_cmd->add_option("--ny", fld.ny);
  export_field_cmd->add_option("--out", fld.output);

  SynthArgs syn;
  auto* synth = app.add_subcommand("synth", "write a planted-pattern trajectory file");
  synth->add_option("--spec", syn.spec_file, "JSON scenario");
  synth->add_option("--preset", syn.preset);
  synth->add_option("--out", syn.output_dir);
  synth->add_option("--seed", syn.seed);
  synth->add_option("--frames", syn.n_frames);

  std::filesystem::path inspect_model;
  auto* inspect = app.add_subcommand("inspect", "summarize a model file");
  inspect->add_option("--model", inspect_model)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (fit->parsed()) {
    const int resolved = guarded(std::cerr, [&] {
      if (!config_path.empty()) fit_cfg = load_run_config(config_path);
      if (input) fit_cfg.input = *input;
      if (out_dir) fit_cfg.output_dir = *out_dir;
      if (seed) fit_cfg.prior.rng_seed = *seed;
      if (a) fit_cfg.prior.a = *a;
      if (b) fit_cfg.prior.b = *b;
      if (sigma_n_sq) fit_cfg.prior.sigma_n_sq = *sigma_n_sq;
      if (n_gibbs) fit_cfg.prior.n_gibbs = *n_gibbs;
      if (n_mc) fit_cfg.prior.n_mc = *n_mc;
      if (dt) fit_cfg.dt = *dt;
      if (workers) fit_cfg.workers = *workers;
      if (frame_cap) fit_cfg.frame_cap = *frame_cap;
      if (training_cap) fit_cfg.training_cap = *training_cap;
      if (assignment) fit_cfg.assignment = assignment_from_name(*assignment);
      if (bins_text) {
        char sep = 0;
        std::istringstream in(*bins_text);
        if (!(in >> fit_cfg.n_bins_x >> sep >> fit_cfg.n_bins_y)) {
          throw ConfigError("--bins expects nx,ny");
        }
        if (fit_cfg.roi) {
          fit_cfg.roi->n_bins_x = fit_cfg.n_bins_x;
          fit_cfg.roi->n_bins_y = fit_cfg.n_bins_y;
        }
      }
      if (roi_text) {
        RegionOfInterest r;
        char s1 = 0, s2 = 0, s3 = 0;
        std::istringstream in(*roi_text);
        if (!(in >> r.x_min >> s1 >> r.x_max >> s2 >> r.y_min >> s3 >> r.y_max)) {
          throw ConfigError("--roi expects x_min,x_max,y_min,y_max");
        }
        r.n_bins_x = fit_cfg.n_bins_x;
        r.n_bins_y = fit_cfg.n_bins_y;
        fit_cfg.roi = r;
      }
      fit_cfg.quiet = quiet;
    });
    if (resolved != kExitOk) return resolved;
    return cmd_fit(fit_cfg, std::cerr);
  }
  if (simulate->parsed()) {
    try {
      if (integrator) {
        if (*integrator == "euler") sim.integrator = Integrator::kEuler;
        else if (*integrator == "midpoint") sim.integrator = Integrator::kMidpoint;
        else throw ConfigError("--integrator must be euler or midpoint");
      }
      if (rollout) {
        if (*rollout == "mean") sim.velocity = RolloutVelocity::kMean;
        else if (*rollout == "sampled") sim.velocity = RolloutVelocity::kSampled;
        else throw ConfigError("--rollout must be mean or sampled");
      }
    } catch (const ConfigError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitConfig;
    }
    return cmd_simulate(sim, std::cerr);
  }
  if (export_field_cmd->parsed()) return cmd_export_field(fld, std::cerr);
  if (synth->parsed()) return cmd_synth(syn, std::cerr);
  if (inspect->parsed()) return cmd_inspect(inspect_model, std::cout, std::cerr);
  return kExitFailure;
}

}  // namespace dpgp
