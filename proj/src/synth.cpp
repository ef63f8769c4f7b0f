// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include <json.hpp>

#include "dpgp/errors.hpp"
#include "dpgp/rng.hpp"

namespace dpgp {

namespace {

using nlohmann::json;

constexpr int kMaxPlacementTries = 200;

const char* kind_name(FieldKind k) {
  switch (k) {
    case FieldKind::kConstant: return "constant";
    case FieldKind::kRotational: return "rotational";
    case FieldKind::kShear: return "shear";
  }
  return "constant";
}

FieldKind kind_from_name(const std::string& s) {
  if (s == "constant") return FieldKind::kConstant;
  if (s == "rotational") return FieldKind::kRotational;
  if (s == "shear") return FieldKind::kShear;
  throw ConfigError("unknown field kind '" + s + "'");
}

Eigen::Vector2d rk4_step(const AnalyticField& f, const Eigen::Vector2d& p,
                         const Eigen::Vector2d& offset, double h) {
  auto v = [&](const Eigen::Vector2d& q) { return Eigen::Vector2d(f.velocity(q.x(), q.y()) + offset); };
  const Eigen::Vector2d k1 = v(p);
  const Eigen::Vector2d k2 = v(p + 0.5 * h * k1);
  const Eigen::Vector2d k3 = v(p + 0.5 * h * k2);
  const Eigen::Vector2d k4 = v(p + h * k3);
  return p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

Eigen::Vector2d AnalyticField::velocity(double x, double y) const {
  switch (kind) {
    case FieldKind::kConstant: return {vx, vy};
    case FieldKind::kRotational: return {-omega * (y - cy), omega * (x - cx)};
    case FieldKind::kShear: return {vx + rate * (y - cy), vy};
  }
  return {vx, vy};
}

void SynthSpec::validate() const {
  roi.validate();
  if (fields.empty()) throw ConfigError("synth: at least one field is required");
  if (n_frames == 0 || frames_per_block == 0) throw ConfigError("synth: frame counts must be positive");
  if (!(dt > 0) || samples_per_tick < 1) throw ConfigError("synth: bad time step");
  if (vehicles_min < 1 || vehicles_max < vehicles_min) throw ConfigError("synth: bad vehicle range");
  if (velocity_offset_sd < 0 || position_noise_sd < 0) throw ConfigError("synth: negative noise");
}

SynthSpec planted3_spec() {
  SynthSpec s;
  AnalyticField uniform;
  uniform.kind = FieldKind::kConstant;
  uniform.vx = 6.0;
  AnalyticField rotation;
  rotation.kind = FieldKind::kRotational;
  rotation.cx = 50.0;
  rotation.cy = 50.0;
  rotation.omega = 0.2;
  AnalyticField shear;
  shear.kind = FieldKind::kShear;
  shear.cy = 50.0;
  shear.vy = -4.0;
  shear.rate = 0.2;
  s.fields = {uniform, rotation, shear};
  return s;
}

std::string synth_spec_to_json(const SynthSpec& s) {
  json fields = json::array();
  for (const auto& f : s.fields) {
    fields.push_back({{"kind", kind_name(f.kind)}, {"vx", f.vx}, {"vy", f.vy}, {"cx", f.cx},
                      {"cy", f.cy}, {"omega", f.omega}, {"rate", f.rate}});
  }
  json j = {{"fields", fields},
            {"roi", {s.roi.x_min, s.roi.x_max, s.roi.y_min, s.roi.y_max}},
            {"bins", {s.roi.n_bins_x, s.roi.n_bins_y}},
            {"n_frames", s.n_frames},
            {"frames_per_block", s.frames_per_block},
            {"dt", s.dt},
            {"samples_per_tick", s.samples_per_tick},
            {"vehicles_min", s.vehicles_min},
            {"vehicles_max", s.vehicles_max},
            {"velocity_offset_sd", s.velocity_offset_sd},
            {"position_noise_sd", s.position_noise_sd},
            {"seed", s.seed}};
  return j.dump(2);
}

SynthSpec synth_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth spec: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("synth spec: expected an object");
  SynthSpec s = planted3_spec();
  try {
    if (j.contains("fields")) {
      s.fields.clear();
      for (const auto& fj : j.at("fields")) {
        AnalyticField f;
        f.kind = kind_from_name(fj.at("kind").get<std::string>());
        f.vx = fj.value("vx", 0.0);
        f.vy = fj.value("vy", 0.0);
        f.cx = fj.value("cx", 0.0);
        f.cy = fj.value("cy", 0.0);
        f.omega = fj.value("omega", 0.0);
        f.rate = fj.value("rate", 0.0);
        s.fields.push_back(f);
      }
    }
    if (j.contains("roi")) {
      const auto r = j.at("roi").get<std::vector<double>>();
      if (r.size() != 4) throw ConfigError("synth spec: roi needs 4 numbers");
      s.roi.x_min = r[0];
      s.roi.x_max = r[1];
      s.roi.y_min = r[2];
      s.roi.y_max = r[3];
    }
    if (j.contains("bins")) {
      const auto b = j.at("bins").get<std::vector<int>>();
      if (b.size() != 2) throw ConfigError("synth spec: bins needs 2 integers");
      s.roi.n_bins_x = b[0];
      s.roi.n_bins_y = b[1];
    }
    s.n_frames = j.value("n_frames", s.n_frames);
    s.frames_per_block = j.value("frames_per_block", s.frames_per_block);
    s.dt = j.value("dt", s.dt);
    s.samples_per_tick = j.value("samples_per_tick", s.samples_per_tick);
    s.vehicles_min = j.value("vehicles_min", s.vehicles_min);
    s.vehicles_max = j.value("vehicles_max", s.vehicles_max);
    s.velocity_offset_sd = j.value("velocity_offset_sd", s.velocity_offset_sd);
    s.position_noise_sd = j.value("position_noise_sd", s.position_noise_sd);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

SynthTrajectories synth_trajectories(const SynthSpec& spec) {
  spec.validate();
  SynthTrajectories out;
  const std::size_t n_blocks = (spec.n_frames + spec.frames_per_block - 1) / spec.frames_per_block;
  const std::size_t n_fields = spec.fields.size();
  const double h = spec.dt / spec.samples_per_tick;
  const auto& roi = spec.roi;

  // Fields are dealt in shuffled rounds so every field appears.
  std::vector<int> block_field(n_blocks);
  {
    Rng rng = make_stream(spec.seed, {tag(StreamTag::kSynth), 0});
    std::vector<int> round(n_fields);
    for (std::size_t b = 0; b < n_blocks; ++b) {
      if (b % n_fields == 0) {
        std::iota(round.begin(), round.end(), 0);
        std::shuffle(round.begin(), round.end(), rng);
      }
      block_field[b] = round[b % n_fields];
    }
  }

  std::int64_t next_vehicle = 1;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const AnalyticField& field = spec.fields[static_cast<std::size_t>(block_field[b])];
    const std::size_t first_tick = b * spec.frames_per_block;
    const std::size_t ticks = std::min(spec.frames_per_block, spec.n_frames - first_tick);
    for (std::size_t k = 0; k < ticks; ++k) {
      out.tick_times.push_back(static_cast<double>(first_tick + k) * spec.dt);
      out.tick_labels.push_back(block_field[b]);
    }
    const std::size_t n_steps = (ticks - 1) * static_cast<std::size_t>(spec.samples_per_tick);

    Rng rng = make_stream(spec.seed, {tag(StreamTag::kSynth), 1, b});
    std::uniform_int_distribution<int> count_dist(spec.vehicles_min, spec.vehicles_max);
    std::uniform_real_distribution<double> ux(roi.x_min, roi.x_max);
    std::uniform_real_distribution<double> uy(roi.y_min, roi.y_max);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n_vehicles = count_dist(rng);
    for (int v = 0; v < n_vehicles; ++v) {
      std::vector<Eigen::Vector2d> path;
      for (int attempt = 0; attempt < kMaxPlacementTries; ++attempt) {
        const Eigen::Vector2d offset(spec.velocity_offset_sd * normal(rng),
                                     spec.velocity_offset_sd * normal(rng));
        Eigen::Vector2d p(ux(rng), uy(rng));
        path.assign(1, p);
        bool inside = true;
        for (std::size_t s = 0; s < n_steps && inside; ++s) {
          p = rk4_step(field, p, offset, h);
          inside = roi.contains(p.x(), p.y());
          path.push_back(p);
        }
        if (inside) break;
        path.clear();
      }
      if (path.empty()) continue;  // field sweeps everything out of the region
      const std::int64_t id = next_vehicle++;
      for (std::size_t s = 0; s < path.size(); ++s) {
        TrajectoryRecord r;
        r.vehicle_id = id;
        r.timestamp = static_cast<double>(first_tick) * spec.dt + static_cast<double>(s) * h;
        r.x = path[s].x() + spec.position_noise_sd * normal(rng);
        r.y = path[s].y() + spec.position_noise_sd * normal(rng);
        r.x = std::clamp(r.x, roi.x_min, roi.x_max);
        r.y = std::clamp(r.y, roi.y_min, roi.y_max);
        out.records.push_back(r);
      }
    }
  }
  std::stable_sort(out.records.begin(), out.records.end(),
                   [](const TrajectoryRecord& a, const TrajectoryRecord& b) {
                     return a.timestamp < b.timestamp;
                   });
  return out;
}

std::vector<std::int64_t> labels_for_frames(const std::vector<Frame>& frames,
                                            const std::vector<double>& tick_times,
                                            const std::vector<int>& tick_labels, double dt) {
  std::map<long long, int> by_tick;
  for (std::size_t k = 0; k < tick_times.size(); ++k) {
    by_tick[std::llround(tick_times[k] / dt)] = tick_labels[k];
  }
  std::vector<std::int64_t> labels;
  labels.reserve(frames.size());
  for (const auto& f : frames) {
    const auto it = by_tick.find(std::llround(f.timestamp / dt));
    labels.push_back(it == by_tick.end() ? -1 : it->second);
  }
  return labels;
}

SynthFrames synth_frames(const SynthSpec& spec) {
  const SynthTrajectories traj = synth_trajectories(spec);
  ExtractResult ex = extract_frames(traj.records, spec.roi, spec.dt);
  SynthFrames out;
  out.labels = labels_for_frames(ex.frames, traj.tick_times, traj.tick_labels, spec.dt);
  out.frames = std::move(ex.frames);
  out.stats = ex.stats;
  return out;
}

void write_synth_csv(const SynthTrajectories& data, const std::filesystem::path& csv,
                     const std::filesystem::path& labels) {
  for (const auto* p : {&csv, &labels}) {
    if (p->has_parent_path()) std::filesystem::create_directories(p->parent_path());
  }
  std::ofstream out(csv, std::ios::trunc);
  if (!out) throw Error("cannot write " + csv.string());
  out << "vehicle_id,t,x,y\n";
  for (const auto& r : data.records) {
    out << r.vehicle_id << ',' << format_double(r.timestamp) << ',' << format_double(r.x) << ','
        << format_double(r.y) << '\n';
  }
  std::ofstream lab(labels, std::ios::trunc);
  if (!lab) throw Error("cannot write " + labels.string());
  lab << "t,label\n";
  for (std::size_t k = 0; k < data.tick_times.size(); ++k) {
    lab << format_double(data.tick_times[k]) << ',' << data.tick_labels[k] << '\n';
  }
  if (!out || !lab) throw Error("write failed");
}

void read_labels_csv(const std::filesystem::path& path, std::vector<double>& tick_times,
                     std::vector<int>& tick_labels) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  tick_times.clear();
  tick_labels.clear();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IngestionError(path.string() + ": bad row");
    try {
      tick_times.push_back(std::stod(line.substr(0, comma)));
      tick_labels.push_back(std::stoi(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw IngestionError(path.string() + ": bad row");
    }
  }
}

}  // namespace dpgp
