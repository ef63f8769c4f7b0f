// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dpgp {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

/// Rectangular region of interest with the histogram grid used by the
/// position distribution. The rectangle is closed.
struct RegionOfInterest {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
  int n_bins_x = 20;
  int n_bins_y = 20;

  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  int n_bins() const { return n_bins_x * n_bins_y; }

  /// Throws DomainError when the rectangle or grid is degenerate.
  void validate() const;
};

struct Vehicle {
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;

  bool operator==(const Vehicle&) const = default;
};

/// Column-stacked view of a frame: (V_x, V_y, X, Y), index-aligned.
struct StackedFrame {
  Eigen::VectorXd vx;
  Eigen::VectorXd vy;
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

struct Frame {
  std::size_t frame_id = 0;
  double timestamp = 0.0;
  std::vector<Vehicle> vehicles;

  std::size_t size() const { return vehicles.size(); }
  StackedFrame stacked() const;
  static Frame from_stacked(std::size_t frame_id, double timestamp,
                            const StackedFrame& s);

  bool operator==(const Frame&) const = default;
};

/// Throws DomainError if the frame is empty or has a vehicle outside `roi`.
void validate_frame(const Frame& frame, const RegionOfInterest& roi);

/// Squared-exponential kernel hyperparameters shared by both velocity axes,
/// except for the per-axis signal variance.
struct KernelParams {
  double sigma_sq_x = 1.0;
  double sigma_sq_y = 1.0;
  double w_x = 1.0;
  double w_y = 1.0;
  double sigma_n_sq = 1.0;

  double sigma_sq(int axis) const { return axis == 0 ? sigma_sq_x : sigma_sq_y; }
  /// sigma_n_sq may be zero, in which case factorizations fall back to jitter.
  bool valid() const {
    return sigma_sq_x > 0 && sigma_sq_y > 0 && w_x > 0 && w_y > 0 && sigma_n_sq >= 0;
  }

  bool operator==(const KernelParams&) const = default;
};

/// Stable pattern identifier; ids are never reused within a run.
enum class PatternId : std::int64_t {};

constexpr std::int64_t to_int(PatternId id) { return static_cast<std::int64_t>(id); }

struct MotionPattern {
  PatternId id{1};
  std::set<std::size_t> member_frames;
  KernelParams params;
  double prior_mean_x = 0.0;
  double prior_mean_y = 0.0;

  std::size_t count() const { return member_frames.size(); }
  double prior_mean(int axis) const { return axis == 0 ? prior_mean_x : prior_mean_y; }

  bool operator==(const MotionPattern&) const = default;
};

struct MixtureState {
  std::vector<PatternId> assignments;  // z, indexed by frame
  std::vector<MotionPattern> patterns;  // live patterns, ascending id
  double alpha = 1.0;
  std::int64_t next_id = 2;

  std::size_t N() const { return assignments.size(); }
  std::size_t K() const { return patterns.size(); }

  const MotionPattern* find(PatternId id) const;
  MotionPattern* find(PatternId id);

  bool operator==(const MixtureState&) const = default;
};

/// Hyperpriors and run sizes. The new-pattern moments are normally filled
/// from the data with fill_data_moments().
struct PriorConfig {
  double a = 10.0;
  double b = 1.0;
  double mu0_x = 0.0;
  double mu0_y = 0.0;
  double sigma0_sq_x = 1.0;
  double sigma0_sq_y = 1.0;
  double sigma_n_sq = 1.0;
  int n_mc = 50;
  int n_gibbs = 100;
  std::uint64_t rng_seed = 1;

  void validate() const;
};

/// Sets mu0/sigma0_sq to the pooled mean and variance of all vehicle
/// velocities. Variances are floored at `min_variance`.
void fill_data_moments(PriorConfig& prior, const std::vector<Frame>& frames,
                       double min_variance = 1e-8);

/// All frames in one pattern (id 1), as in the sampler initialization.
MixtureState make_single_pattern_state(std::size_t n_frames, const KernelParams& params,
                                       double mean_x, double mean_y, double alpha);

/// Returns one message per violated invariant; empty when consistent.
std::vector<std::string> validate_state(const MixtureState& state);

/// Deterministic digest of the full state, used to check for mutation.
std::uint64_t state_fingerprint(const MixtureState& state);

}  // namespace dpgp
