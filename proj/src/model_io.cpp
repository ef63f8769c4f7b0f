// Apache License, Version 2.0, refer to LICENSE.txt

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dpgp/data_io.hpp"
#include "dpgp/errors.hpp"

namespace dpgp {

namespace {

using nlohmann::json;

constexpr std::array<const char*, 8> kSections = {"roi",   "prior",  "options", "distributions",
                                                  "state", "frames", "trace",   "end"};

std::string child(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string item(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

const json& field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ModelLoadError(path + ": expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ModelLoadError(child(path, key) + ": missing");
  return *it;
}

double get_double(const json& j, const std::string& key, const std::string& path) {
  const json& v = field(j, key, path);
  if (!v.is_number()) throw ModelLoadError(child(path, key) + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ModelLoadError(child(path, key) + ": not finite");
  return d;
}

double get_positive(const json& j, const std::string& key, const std::string& path) {
  const double d = get_double(j, key, path);
  if (!(d > 0)) throw ModelLoadError(child(path, key) + ": must be positive");
  return d;
}

std::int64_t get_int(const json& j, const std::string& key, const std::string& path) {
  const json& v = field(j, key, path);
  if (!v.is_number_integer()) throw ModelLoadError(child(path, key) + ": expected an integer");
  return v.get<std::int64_t>();
}

std::uint64_t get_uint(const json& j, const std::string& key, const std::string& path) {
  const json& v = field(j, key, path);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ModelLoadError(child(path, key) + ": expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

const json& get_array(const json& j, const std::string& key, const std::string& path) {
  const json& v = field(j, key, path);
  if (!v.is_array()) throw ModelLoadError(child(path, key) + ": expected an array");
  return v;
}

double element_double(const json& v, const std::string& path) {
  if (!v.is_number() || !std::isfinite(v.get<double>())) {
    throw ModelLoadError(path + ": expected a finite number");
  }
  return v.get<double>();
}

json roi_to_json(const RegionOfInterest& r) {
  return {{"x_min", r.x_min}, {"x_max", r.x_max},       {"y_min", r.y_min},
          {"y_max", r.y_max}, {"n_bins_x", r.n_bins_x}, {"n_bins_y", r.n_bins_y}};
}

RegionOfInterest roi_from_json(const json& j, const std::string& path) {
  RegionOfInterest r;
  r.x_min = get_double(j, "x_min", path);
  r.x_max = get_double(j, "x_max", path);
  r.y_min = get_double(j, "y_min", path);
  r.y_max = get_double(j, "y_max", path);
  r.n_bins_x = static_cast<int>(get_int(j, "n_bins_x", path));
  r.n_bins_y = static_cast<int>(get_int(j, "n_bins_y", path));
  try {
    r.validate();
  } catch (const Error& e) {
    throw ModelLoadError(path + ": " + e.what());
  }
  return r;
}

json prior_to_json(const PriorConfig& p) {
  return {{"a", p.a},
          {"b", p.b},
          {"mu0_x", p.mu0_x},
          {"mu0_y", p.mu0_y},
          {"sigma0_sq_x", p.sigma0_sq_x},
          {"sigma0_sq_y", p.sigma0_sq_y},
          {"sigma_n_sq", p.sigma_n_sq},
          {"n_mc", p.n_mc},
          {"n_gibbs", p.n_gibbs},
          {"rng_seed", p.rng_seed}};
}

PriorConfig prior_from_json(const json& j, const std::string& path) {
  PriorConfig p;
  p.a = get_positive(j, "a", path);
  p.b = get_positive(j, "b", path);
  p.mu0_x = get_double(j, "mu0_x", path);
  p.mu0_y = get_double(j, "mu0_y", path);
  p.sigma0_sq_x = get_positive(j, "sigma0_sq_x", path);
  p.sigma0_sq_y = get_positive(j, "sigma0_sq_y", path);
  p.sigma_n_sq = get_double(j, "sigma_n_sq", path);
  p.n_mc = static_cast<int>(get_int(j, "n_mc", path));
  p.n_gibbs = static_cast<int>(get_int(j, "n_gibbs", path));
  p.rng_seed = get_uint(j, "rng_seed", path);
  try {
    p.validate();
  } catch (const Error& e) {
    throw ModelLoadError(path + ": " + e.what());
  }
  return p;
}

json options_to_json(const SamplerOptions& o) {
  return {{"assignment", o.assignment == AssignmentMode::kMap ? "map" : "sample"},
          {"mh_step", o.mh_step},
          {"alpha_min", o.alpha_min},
          {"alpha_max", o.alpha_max},
          {"alpha_grid_points", o.alpha_grid_points},
          {"training_cap", o.training_cap}};
}

SamplerOptions options_from_json(const json& j, const std::string& path) {
  SamplerOptions o;
  const json& mode = field(j, "assignment", path);
  if (mode == "map") {
    o.assignment = AssignmentMode::kMap;
  } else if (mode == "sample") {
    o.assignment = AssignmentMode::kSample;
  } else {
    throw ModelLoadError(child(path, "assignment") + ": expected \"map\" or \"sample\"");
  }
  o.mh_step = get_positive(j, "mh_step", path);
  o.alpha_min = get_positive(j, "alpha_min", path);
  o.alpha_max = get_positive(j, "alpha_max", path);
  o.alpha_grid_points = static_cast<int>(get_int(j, "alpha_grid_points", path));
  o.training_cap = get_uint(j, "training_cap", path);
  if (o.alpha_max <= o.alpha_min || o.alpha_grid_points < 2 || o.training_cap == 0) {
    throw ModelLoadError(path + ": inconsistent sampler options");
  }
  return o;
}

json dists_to_json(const EmpiricalDists& d) {
  json counts = json::array();
  for (const auto& [m, p] : d.count.probabilities()) counts.push_back({m, p});
  return {{"count", counts}, {"position", d.position.weights()}};
}

EmpiricalDists dists_from_json(const json& j, const RegionOfInterest& roi,
                               const std::string& path) {
  std::map<std::size_t, double> probs;
  const std::string cpath = child(path, "count");
  const json& counts = get_array(j, "count", path);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const json& e = counts[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned()) {
      throw ModelLoadError(item(cpath, i) + ": expected [count, probability]");
    }
    probs[e[0].get<std::size_t>()] = element_double(e[1], item(cpath, i) + "[1]");
  }
  std::vector<double> weights;
  const std::string ppath = child(path, "position");
  const json& pos = get_array(j, "position", path);
  for (std::size_t i = 0; i < pos.size(); ++i) weights.push_back(element_double(pos[i], item(ppath, i)));
  EmpiricalDists d;
  try {
    d.count = CountDistribution(std::move(probs));
  } catch (const Error& e) {
    throw ModelLoadError(cpath + ": " + e.what());
  }
  try {
    d.position = PositionDistribution(roi, std::move(weights));
  } catch (const Error& e) {
    throw ModelLoadError(ppath + ": " + e.what());
  }
  return d;
}

json state_to_json(const MixtureState& s) {
  json assignments = json::array();
  for (const PatternId id : s.assignments) assignments.push_back(to_int(id));
  json patterns = json::array();
  for (const auto& p : s.patterns) {
    patterns.push_back({{"id", to_int(p.id)},
                        {"members", p.member_frames},
                        {"params",
                         {{"sigma_sq_x", p.params.sigma_sq_x},
                          {"sigma_sq_y", p.params.sigma_sq_y},
                          {"w_x", p.params.w_x},
                          {"w_y", p.params.w_y},
                          {"sigma_n_sq", p.params.sigma_n_sq}}},
                        {"prior_mean_x", p.prior_mean_x},
                        {"prior_mean_y", p.prior_mean_y}});
  }
  return {{"alpha", s.alpha},
          {"next_id", s.next_id},
          {"assignments", assignments},
          {"patterns", patterns}};
}

MixtureState state_from_json(const json& j, const std::string& path) {
  MixtureState s;
  s.alpha = get_positive(j, "alpha", path);
  s.next_id = get_int(j, "next_id", path);
  const std::string apath = child(path, "assignments");
  const json& assignments = get_array(j, "assignments", path);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (!assignments[i].is_number_integer()) throw ModelLoadError(item(apath, i) + ": expected an integer");
    s.assignments.push_back(PatternId{assignments[i].get<std::int64_t>()});
  }
  const std::string ppath = child(path, "patterns");
  const json& patterns = get_array(j, "patterns", path);
  for (std::size_t k = 0; k < patterns.size(); ++k) {
    const json& pj = patterns[k];
    const std::string here = item(ppath, k);
    MotionPattern p;
    p.id = PatternId{get_int(pj, "id", here)};
    const std::string mpath = child(here, "members");
    const json& members = get_array(pj, "members", here);
    for (std::size_t m = 0; m < members.size(); ++m) {
      if (!members[m].is_number_unsigned()) throw ModelLoadError(item(mpath, m) + ": expected a frame index");
      p.member_frames.insert(members[m].get<std::size_t>());
    }
    const std::string kpath = child(here, "params");
    const json& params = field(pj, "params", here);
    p.params.sigma_sq_x = get_positive(params, "sigma_sq_x", kpath);
    p.params.sigma_sq_y = get_positive(params, "sigma_sq_y", kpath);
    p.params.w_x = get_positive(params, "w_x", kpath);
    p.params.w_y = get_positive(params, "w_y", kpath);
    p.params.sigma_n_sq = get_double(params, "sigma_n_sq", kpath);
    if (p.params.sigma_n_sq < 0) throw ModelLoadError(child(kpath, "sigma_n_sq") + ": must be non-negative");
    p.prior_mean_x = get_double(pj, "prior_mean_x", here);
    p.prior_mean_y = get_double(pj, "prior_mean_y", here);
    s.patterns.push_back(std::move(p));
  }
  const auto problems = validate_state(s);
  if (!problems.empty()) throw ModelLoadError(path + ": " + problems.front());
  return s;
}

json frames_to_json(const std::vector<Frame>& frames) {
  json out = json::array();
  for (const auto& f : frames) {
    json vehicles = json::array();
    for (const auto& v : f.vehicles) vehicles.push_back({v.x, v.y, v.vx, v.vy});
    out.push_back({{"id", f.frame_id}, {"t", f.timestamp}, {"v", vehicles}});
  }
  return out;
}

std::vector<Frame> frames_from_json(const json& j, const RegionOfInterest& roi,
                                    const std::string& path) {
  if (!j.is_array()) throw ModelLoadError(path + ": expected an array");
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string here = item(path, i);
    Frame f;
    f.frame_id = get_uint(j[i], "id", here);
    f.timestamp = get_double(j[i], "t", here);
    const std::string vpath = child(here, "v");
    const json& vehicles = get_array(j[i], "v", here);
    for (std::size_t m = 0; m < vehicles.size(); ++m) {
      const json& v = vehicles[m];
      const std::string vp = item(vpath, m);
      if (!v.is_array() || v.size() != 4) throw ModelLoadError(vp + ": expected [x, y, vx, vy]");
      f.vehicles.push_back({element_double(v[0], vp + "[0]"), element_double(v[1], vp + "[1]"),
                            element_double(v[2], vp + "[2]"), element_double(v[3], vp + "[3]")});
    }
    try {
      validate_frame(f, roi);
    } catch (const Error& e) {
      throw ModelLoadError(here + ": " + e.what());
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

json trace_to_json(const GibbsTrace& trace) {
  json out = json::array();
  for (const auto& r : trace.records) {
    json counts = json::array();
    for (const auto& [id, n] : r.counts) counts.push_back({to_int(id), n});
    json ll = std::isfinite(r.log_likelihood) ? json(r.log_likelihood) : json(nullptr);
    out.push_back({{"iteration", r.iteration},
                   {"K", r.K},
                   {"alpha", r.alpha},
                   {"counts", counts},
                   {"log_likelihood", ll}});
  }
  return out;
}

GibbsTrace trace_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw ModelLoadError(path + ": expected an array");
  GibbsTrace trace;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string here = item(path, i);
    IterationRecord r;
    r.iteration = static_cast<int>(get_int(j[i], "iteration", here));
    r.K = get_uint(j[i], "K", here);
    r.alpha = get_positive(j[i], "alpha", here);
    const json& ll = field(j[i], "log_likelihood", here);
    r.log_likelihood = ll.is_null() ? -std::numeric_limits<double>::infinity()
                                    : element_double(ll, child(here, "log_likelihood"));
    const std::string cpath = child(here, "counts");
    const json& counts = get_array(j[i], "counts", here);
    for (std::size_t c = 0; c < counts.size(); ++c) {
      const json& e = counts[c];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_unsigned()) {
        throw ModelLoadError(item(cpath, c) + ": expected [pattern id, count]");
      }
      r.counts.emplace_back(PatternId{e[0].get<std::int64_t>()}, e[1].get<std::size_t>());
    }
    trace.records.push_back(std::move(r));
  }
  return trace;
}

}  // namespace

void save_model(const FittedModel& model, std::ostream& out) {
  out << "dpgp-model " << kModelFormatVersion << '\n';
  auto section = [&](const char* name, const json& body) {
    out << '[' << name << "]\n" << body.dump() << '\n';
  };
  section("roi", roi_to_json(model.roi));
  section("prior", prior_to_json(model.prior));
  section("options", options_to_json(model.options));
  section("distributions", dists_to_json(model.dists));
  section("state", state_to_json(model.state));
  section("frames", frames_to_json(model.frames));
  section("trace", trace_to_json(model.trace));
  out << "[end]\n";
}

void save_model(const FittedModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  save_model(model, out);
  if (!out) throw Error("write failed: " + path.string());
}

FittedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelLoadError("cannot open model file " + path.string());
  return load_model(in);
}

FittedModel load_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ModelLoadError("empty model file");
  {
    std::istringstream head(line);
    std::string magic;
    int version = 0;
    if (!(head >> magic) || magic != "dpgp-model" || !(head >> version)) {
      throw ModelLoadError("not a dpgp model file (bad header line)");
    }
    if (version != kModelFormatVersion) {
      throw ModelLoadError("unsupported model format version " + std::to_string(version) +
                           " (this build reads version " + std::to_string(kModelFormatVersion) +
                           ")");
    }
  }

  std::map<std::string, json> bodies;
  for (const char* name : kSections) {
    const std::string expected = std::string("[") + name + "]";
    if (!std::getline(in, line)) throw ModelLoadError(std::string("missing section ") + expected);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected) {
      throw ModelLoadError("missing section " + expected + " (found '" + line + "')");
    }
    if (std::string(name) == "end") break;
    if (!std::getline(in, line)) throw ModelLoadError("section " + expected + " has no body");
    try {
      bodies[name] = json::parse(line);
    } catch (const json::exception& e) {
      throw ModelLoadError("section " + expected + ": malformed JSON: " + e.what());
    }
  }

  FittedModel model;
  model.roi = roi_from_json(bodies["roi"], "roi");
  model.prior = prior_from_json(bodies["prior"], "prior");
  model.options = options_from_json(bodies["options"], "options");
  model.dists = dists_from_json(bodies["distributions"], model.roi, "distributions");
  model.state = state_from_json(bodies["state"], "state");
  model.frames = frames_from_json(bodies["frames"], model.roi, "frames");
  model.trace = trace_from_json(bodies["trace"], "trace");
  if (model.frames.size() != model.state.N()) {
    throw ModelLoadError("frames: " + std::to_string(model.frames.size()) +
                         " frames but state assigns " + std::to_string(model.state.N()));
  }
  return model;
}

}  // namespace dpgp
