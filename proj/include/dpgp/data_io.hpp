// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dpgp/core_model.hpp"
#include "dpgp/gp_field.hpp"
#include "dpgp/simulation.hpp"

namespace dpgp {

inline constexpr double kFeetToMeters = 0.3048;
inline constexpr int kModelFormatVersion = 1;

struct ColumnMapping {
  std::string vehicle_id = "vehicle_id";
  std::string time = "t";
  std::string x = "x";
  std::string y = "y";
  std::optional<std::string> vx;
  std::optional<std::string> vy;
  char delimiter = ',';
};

/// Multipliers applied on ingestion. Velocity columns are scaled by
/// position_scale (they are taken to be per second already).
struct UnitConfig {
  double position_scale = 1.0;
  double time_scale = 1.0;  // 0.001 for epoch milliseconds
};

struct IngestConfig {
  ColumnMapping columns;
  UnitConfig units;
  double max_bad_row_ratio = 0.01;
};

/// Column mapping for NGSIM trajectory releases (local coordinates, feet,
/// epoch milliseconds).
IngestConfig ngsim_ingest_config();

struct TrajectoryRecord {
  std::int64_t vehicle_id = 0;
  double timestamp = 0.0;
  double x = 0.0;
  double y = 0.0;
  std::optional<double> vx;
  std::optional<double> vy;
};

struct ParseReport {
  std::size_t rows = 0;
  std::size_t rejected = 0;
  std::vector<std::string> sample_errors;  // first few, with line numbers
};

struct ParsedRecords {
  std::vector<TrajectoryRecord> records;
  ParseReport report;
};

/// Reads a delimited trajectory file with a header row. Malformed rows are
/// skipped and counted; more than max_bad_row_ratio of them is fatal.
ParsedRecords parse_trajectory_csv(const std::filesystem::path& path, const IngestConfig& config);
ParsedRecords parse_trajectory_csv(std::istream& in, const IngestConfig& config,
                                   const std::string& source = "<stream>");

/// Where every input record ended up. emitted plus the drop counters equals
/// the number of input records.
struct ExtractStats {
  std::size_t input_records = 0;
  std::size_t emitted = 0;
  std::size_t duplicate_timestamp = 0;
  std::size_t underivable_velocity = 0;
  std::size_t off_grid = 0;
  std::size_t outside_roi = 0;
  std::size_t empty_ticks = 0;  // grid ticks with no vehicle (not records)
};

struct ExtractResult {
  std::vector<Frame> frames;
  std::vector<std::vector<std::int64_t>> vehicle_ids;  // aligned with frames[i].vehicles
  ExtractStats stats;
};

/// Snaps records to a uniform grid of spacing dt starting at the earliest
/// timestamp, taking the nearest sample of each vehicle per tick. Missing
/// velocities come from central differences on the raw track (one-sided at
/// the ends). Vehicles outside the region and empty ticks are dropped.
ExtractResult extract_frames(const std::vector<TrajectoryRecord>& records,
                             const RegionOfInterest& roi, double dt);

/// Inverse of extract_frames for already aligned data.
std::vector<TrajectoryRecord> frames_to_records(const ExtractResult& extracted);

/// Keeps at most `cap` frames, evenly spaced; frame ids are renumbered.
std::vector<Frame> downsample_frames(std::vector<Frame> frames, std::size_t cap);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

void export_field(const VectorField& field, const std::filesystem::path& path);
VectorField read_field(const std::filesystem::path& path);

/// Rows ordered by vehicle id, then time.
void export_trajectories(const std::vector<Trajectory>& trajectories,
                         const std::filesystem::path& path);

/// Test frame file: header with x,y and optionally vx,vy.
Frame read_frame_csv(const std::filesystem::path& path, bool require_velocity);

void save_model(const FittedModel& model, const std::filesystem::path& path);
void save_model(const FittedModel& model, std::ostream& out);
FittedModel load_model(const std::filesystem::path& path);
FittedModel load_model(std::istream& in);

}  // namespace dpgp
