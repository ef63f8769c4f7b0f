// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgp/data_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "dpgp/errors.hpp"

namespace dpgp {

namespace {

constexpr std::size_t kMaxSampleErrors = 5;

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    std::string_view cell = line.substr(start, pos == std::string_view::npos ? pos : pos - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) {
      cell.remove_suffix(1);
    }
    if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"') {
      cell = cell.substr(1, cell.size() - 2);
    }
    out.push_back(cell);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_number(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_id(std::string_view s, std::int64_t& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec == std::errc() && ptr == s.data() + s.size()) return true;
  // Integral values written as floating point ("12.0").
  double d = 0.0;
  if (!parse_number(s, d) || d != std::floor(d) || std::abs(d) > 9e15) return false;
  out = static_cast<std::int64_t>(d);
  return true;
}

std::size_t column_index(const std::vector<std::string_view>& header, const std::string& name,
                         const std::string& source) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError(source + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

IngestConfig ngsim_ingest_config() {
  IngestConfig c;
  c.columns.vehicle_id = "Vehicle_ID";
  c.columns.time = "Global_Time";
  c.columns.x = "Local_X";
  c.columns.y = "Local_Y";
  c.units.position_scale = kFeetToMeters;
  c.units.time_scale = 0.001;
  return c;
}

ParsedRecords parse_trajectory_csv(const std::filesystem::path& path, const IngestConfig& config) {
  std::ifstream in = open_input(path);
  return parse_trajectory_csv(in, config, path.string());
}

ParsedRecords parse_trajectory_csv(std::istream& in, const IngestConfig& config,
                                   const std::string& source) {
  const ColumnMapping& cols = config.columns;
  if (cols.vx.has_value() != cols.vy.has_value()) {
    throw ConfigError("velocity columns must be mapped together");
  }
  if (!(config.units.position_scale > 0) || !(config.units.time_scale > 0)) {
    throw ConfigError("unit scales must be positive");
  }

  std::string line;
  if (!std::getline(in, line)) throw IngestionError(source + ": empty file");
  const std::string header_line = line;
  const auto header = split(header_line, cols.delimiter);
  const std::size_t i_id = column_index(header, cols.vehicle_id, source);
  const std::size_t i_t = column_index(header, cols.time, source);
  const std::size_t i_x = column_index(header, cols.x, source);
  const std::size_t i_y = column_index(header, cols.y, source);
  std::optional<std::size_t> i_vx, i_vy;
  if (cols.vx) {
    i_vx = column_index(header, *cols.vx, source);
    i_vy = column_index(header, *cols.vy, source);
  }

  ParsedRecords result;
  ParseReport& report = result.report;
  std::size_t line_no = 1;
  auto reject = [&](const std::string& why) {
    ++report.rejected;
    if (report.sample_errors.size() < kMaxSampleErrors) {
      report.sample_errors.push_back(source + ":" + std::to_string(line_no) + ": " + why);
    }
  };

  const double ps = config.units.position_scale;
  const double ts = config.units.time_scale;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    ++report.rows;
    const auto cells = split(line, cols.delimiter);
    if (cells.size() != header.size()) {
      reject("expected " + std::to_string(header.size()) + " fields, got " +
             std::to_string(cells.size()));
      continue;
    }
    TrajectoryRecord r;
    double t = 0, x = 0, y = 0;
    if (!parse_id(cells[i_id], r.vehicle_id)) {
      reject("bad vehicle id");
      continue;
    }
    if (!parse_number(cells[i_t], t) || !parse_number(cells[i_x], x) ||
        !parse_number(cells[i_y], y)) {
      reject("non-numeric or non-finite value");
      continue;
    }
    r.timestamp = t * ts;
    r.x = x * ps;
    r.y = y * ps;
    if (i_vx) {
      double vx = 0, vy = 0;
      if (!parse_number(cells[*i_vx], vx) || !parse_number(cells[*i_vy], vy)) {
        reject("non-numeric or non-finite velocity");
        continue;
      }
      r.vx = vx * ps;
      r.vy = vy * ps;
    }
    result.records.push_back(r);
  }

  if (report.rows > 0 &&
      static_cast<double>(report.rejected) >
          config.max_bad_row_ratio * static_cast<double>(report.rows)) {
    std::ostringstream msg;
    msg << source << ": " << report.rejected << " of " << report.rows
        << " rows malformed (limit " << config.max_bad_row_ratio * 100 << "%)";
    for (const auto& e : report.sample_errors) msg << "\n  " << e;
    throw IngestionError(msg.str());
  }
  return result;
}

ExtractResult extract_frames(const std::vector<TrajectoryRecord>& records,
                             const RegionOfInterest& roi, double dt) {
  roi.validate();
  if (!(dt > 0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");

  ExtractResult result;
  ExtractStats& stats = result.stats;
  stats.input_records = records.size();

  struct Sample {
    double t, x, y, vx, vy;
  };
  std::map<std::int64_t, std::vector<const TrajectoryRecord*>> by_vehicle;
  for (const auto& r : records) by_vehicle[r.vehicle_id].push_back(&r);

  std::map<std::int64_t, std::vector<Sample>> tracks;
  double t0 = std::numeric_limits<double>::infinity();
  for (auto& [id, raw] : by_vehicle) {
    std::stable_sort(raw.begin(), raw.end(), [](const TrajectoryRecord* a, const TrajectoryRecord* b) {
      return a->timestamp < b->timestamp;
    });
    std::vector<const TrajectoryRecord*> clean;
    for (const auto* r : raw) {
      if (!clean.empty() && clean.back()->timestamp == r->timestamp) {
        ++stats.duplicate_timestamp;
        continue;
      }
      clean.push_back(r);
    }
    std::vector<Sample> track;
    const std::size_t n = clean.size();
    for (std::size_t j = 0; j < n; ++j) {
      const auto* r = clean[j];
      Sample s{r->timestamp, r->x, r->y, 0.0, 0.0};
      if (r->vx && r->vy) {
        s.vx = *r->vx;
        s.vy = *r->vy;
      } else if (n < 2) {
        ++stats.underivable_velocity;
        continue;
      } else {
        const std::size_t lo = j == 0 ? 0 : j - 1;
        const std::size_t hi = j + 1 == n ? j : j + 1;
        const double span = clean[hi]->timestamp - clean[lo]->timestamp;
        s.vx = (clean[hi]->x - clean[lo]->x) / span;
        s.vy = (clean[hi]->y - clean[lo]->y) / span;
      }
      t0 = std::min(t0, s.t);
      track.push_back(s);
    }
    if (!track.empty()) tracks.emplace(id, std::move(track));
  }
  if (tracks.empty()) return result;

  // Nearest tick per sample, then the nearest sample per (vehicle, tick).
  std::map<long long, std::vector<std::pair<std::int64_t, Sample>>> ticks;
  for (const auto& [id, track] : tracks) {
    long long current_tick = -1;
    const Sample* best = nullptr;
    double best_dist = 0.0;
    auto flush = [&] {
      if (best) {
        ticks[current_tick].emplace_back(id, *best);
      }
    };
    for (const auto& s : track) {
      const long long k = std::llround((s.t - t0) / dt);
      const double dist = std::abs(s.t - (t0 + static_cast<double>(k) * dt));
      if (k != current_tick) {
        flush();
        current_tick = k;
        best = &s;
        best_dist = dist;
      } else if (dist < best_dist) {
        ++stats.off_grid;
        best = &s;
        best_dist = dist;
      } else {
        ++stats.off_grid;
      }
    }
    flush();
  }

  long long last_tick = -1;
  for (auto& [k, vehicles] : ticks) {
    if (last_tick >= 0) stats.empty_ticks += static_cast<std::size_t>(k - last_tick - 1);
    last_tick = k;
    Frame frame;
    std::vector<std::int64_t> ids;
    for (const auto& [id, s] : vehicles) {
      if (!roi.contains(s.x, s.y)) {
        ++stats.outside_roi;
        continue;
      }
      frame.vehicles.push_back({s.x, s.y, s.vx, s.vy});
      ids.push_back(id);
    }
    if (frame.vehicles.empty()) {
      ++stats.empty_ticks;
      continue;
    }
    stats.emitted += frame.vehicles.size();
    frame.frame_id = result.frames.size();
    frame.timestamp = t0 + static_cast<double>(k) * dt;
    result.frames.push_back(std::move(frame));
    result.vehicle_ids.push_back(std::move(ids));
  }
  return result;
}

std::vector<TrajectoryRecord> frames_to_records(const ExtractResult& extracted) {
  std::vector<TrajectoryRecord> out;
  for (std::size_t f = 0; f < extracted.frames.size(); ++f) {
    const Frame& frame = extracted.frames[f];
    for (std::size_t j = 0; j < frame.size(); ++j) {
      const Vehicle& v = frame.vehicles[j];
      out.push_back({extracted.vehicle_ids[f][j], frame.timestamp, v.x, v.y, v.vx, v.vy});
    }
  }
  return out;
}

std::vector<Frame> downsample_frames(std::vector<Frame> frames, std::size_t cap) {
  if (cap == 0) throw ConfigError("frame cap must be positive");
  if (frames.size() > cap) {
    std::vector<Frame> kept;
    kept.reserve(cap);
    const std::size_t n = frames.size();
    for (std::size_t i = 0; i < cap; ++i) kept.push_back(std::move(frames[i * n / cap]));
    frames = std::move(kept);
  }
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i].frame_id = i;
  return frames;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, ptr);
}

void export_field(const VectorField& field, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "x,y,mean_vx,mean_vy,var_vx,var_vy\n";
  for (Eigen::Index i = 0; i < field.points.rows(); ++i) {
    out << format_double(field.points(i, 0)) << ',' << format_double(field.points(i, 1)) << ','
        << format_double(field.mean_x(i)) << ',' << format_double(field.mean_y(i)) << ','
        << format_double(field.var_x(i)) << ',' << format_double(field.var_y(i)) << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

VectorField read_field(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("x,y,mean_vx,mean_vy,var_vx,var_vy", 0) != 0) {
    throw IngestionError(path.string() + ": not a field file");
  }
  std::vector<std::array<double, 6>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 6) throw IngestionError(path.string() + ": bad row");
    std::array<double, 6> row{};
    for (int c = 0; c < 6; ++c) {
      if (!parse_number(cells[c], row[c])) throw IngestionError(path.string() + ": bad number");
    }
    rows.push_back(row);
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  VectorField f;
  f.points.resize(n, 2);
  f.mean_x.resize(n);
  f.mean_y.resize(n);
  f.var_x.resize(n);
  f.var_y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    f.points(i, 0) = r[0];
    f.points(i, 1) = r[1];
    f.mean_x(i) = r[2];
    f.mean_y(i) = r[3];
    f.var_x(i) = r[4];
    f.var_y(i) = r[5];
  }
  return f;
}

void export_trajectories(const std::vector<Trajectory>& trajectories,
                         const std::filesystem::path& path) {
  std::vector<const Trajectory*> order;
  for (const auto& t : trajectories) order.push_back(&t);
  std::stable_sort(order.begin(), order.end(), [](const Trajectory* a, const Trajectory* b) {
    return a->vehicle_id < b->vehicle_id;
  });
  std::ofstream out = open_output(path);
  out << "vehicle_id,t,x,y,vx,vy\n";
  for (const auto* traj : order) {
    std::vector<TrajectorySample> samples = traj->samples;
    std::stable_sort(samples.begin(), samples.end(),
                     [](const auto& a, const auto& b) { return a.t < b.t; });
    for (const auto& s : samples) {
      out << traj->vehicle_id << ',' << format_double(s.t) << ',' << format_double(s.x) << ','
          << format_double(s.y) << ',' << format_double(s.vx) << ',' << format_double(s.vy)
          << '\n';
    }
  }
  if (!out) throw Error("write failed: " + path.string());
}

Frame read_frame_csv(const std::filesystem::path& path, bool require_velocity) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw IngestionError(path.string() + ": empty file");
  const std::string header_line = line;
  const auto header = split(header_line, ',');
  const std::string source = path.string();
  const std::size_t ix = column_index(header, "x", source);
  const std::size_t iy = column_index(header, "y", source);
  const bool has_v = std::find(header.begin(), header.end(), "vx") != header.end();
  if (require_velocity && !has_v) throw ConfigError(source + ": missing column 'vx'");
  std::size_t ivx = 0, ivy = 0;
  if (has_v) {
    ivx = column_index(header, "vx", source);
    ivy = column_index(header, "vy", source);
  }
  Frame frame;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line, ',');
    Vehicle v;
    bool ok = cells.size() == header.size() && parse_number(cells[ix], v.x) &&
              parse_number(cells[iy], v.y);
    if (ok && has_v) ok = parse_number(cells[ivx], v.vx) && parse_number(cells[ivy], v.vy);
    if (!ok) throw IngestionError(source + ":" + std::to_string(line_no) + ": malformed row");
    frame.vehicles.push_back(v);
  }
  if (frame.vehicles.empty()) throw IngestionError(source + ": no vehicles");
  return frame;
}

}  // namespace dpgp
