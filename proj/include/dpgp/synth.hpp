// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dpgp/core_model.hpp"
#include "dpgp/data_io.hpp"

namespace dpgp {

enum class FieldKind { kConstant, kRotational, kShear };

/// Analytic velocity field.
///   constant:   (vx, vy)
///   rotational: omega * (-(y - cy), x - cx)
///   shear:      (vx + rate * (y - cy), vy)
struct AnalyticField {
  FieldKind kind = FieldKind::kConstant;
  double vx = 0.0;
  double vy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double omega = 0.0;
  double rate = 0.0;

  Eigen::Vector2d velocity(double x, double y) const;
};

/// Planted-pattern scenario. Time is cut into blocks of frames_per_block
/// ticks; every block follows one field with its own set of vehicles, which
/// stay inside the region for the whole block.
struct SynthSpec {
  std::vector<AnalyticField> fields;
  RegionOfInterest roi{0.0, 100.0, 0.0, 100.0, 20, 20};
  std::size_t n_frames = 150;
  std::size_t frames_per_block = 10;
  double dt = 0.5;
  int samples_per_tick = 5;  // raw sampling interval is dt / samples_per_tick
  int vehicles_min = 4;
  int vehicles_max = 8;
  double velocity_offset_sd = 0.3;  // per-vehicle constant offset
  double position_noise_sd = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Three fields: a uniform flow, a rotation about the region centre and a
/// shear flow.
SynthSpec planted3_spec();
SynthSpec synth_spec_from_json(const std::string& text);
std::string synth_spec_to_json(const SynthSpec& spec);

struct SynthTrajectories {
  std::vector<TrajectoryRecord> records;  // positions only
  std::vector<double> tick_times;
  std::vector<int> tick_labels;  // field index per tick
};

SynthTrajectories synth_trajectories(const SynthSpec& spec);

struct SynthFrames {
  std::vector<Frame> frames;
  std::vector<std::int64_t> labels;  // aligned with frames
  ExtractStats stats;
};

/// synth_trajectories followed by extract_frames at spec.dt.
SynthFrames synth_frames(const SynthSpec& spec);

/// Labels aligned with frames by timestamp; -1 where no tick matches.
std::vector<std::int64_t> labels_for_frames(const std::vector<Frame>& frames,
                                            const std::vector<double>& tick_times,
                                            const std::vector<int>& tick_labels, double dt);

/// Writes vehicle_id,t,x,y rows and a t,label sidecar.
void write_synth_csv(const SynthTrajectories& data, const std::filesystem::path& csv,
                     const std::filesystem::path& labels);

/// Reads a t,label sidecar.
void read_labels_csv(const std::filesystem::path& path, std::vector<double>& tick_times,
                     std::vector<int>& tick_labels);

}  // namespace dpgp
