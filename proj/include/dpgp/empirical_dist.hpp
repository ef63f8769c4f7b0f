// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <map>
#include <span>
#include <utility>
#include <vector>

#include "dpgp/core_model.hpp"
#include "dpgp/rng.hpp"

namespace dpgp {

/// Empirical distribution of the number of vehicles per frame: point masses
/// at the observed counts.
class CountDistribution {
 public:
  CountDistribution() = default;
  explicit CountDistribution(std::map<std::size_t, double> probabilities);

  const std::map<std::size_t, double>& probabilities() const { return probs_; }
  double probability(std::size_t count) const;
  double log_prob(std::size_t count) const;
  std::size_t sample(Rng& rng) const;

  bool operator==(const CountDistribution& o) const { return probs_ == o.probs_; }

 private:
  std::map<std::size_t, double> probs_;
  std::vector<std::pair<double, std::size_t>> cdf_;
};

struct BinRect {
  double x_lo, x_hi, y_lo, y_hi;
  double area() const { return (x_hi - x_lo) * (y_hi - y_lo); }
};

/// Histogram of vehicle positions over the region's bin grid, uniform
/// within each bin. Bins are half-open toward the upper edge: a point on a
/// shared boundary belongs to the lower-indexed bin.
class PositionDistribution {
 public:
  PositionDistribution() = default;
  PositionDistribution(const RegionOfInterest& roi, std::vector<double> weights);

  const RegionOfInterest& roi() const { return roi_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Flattened bin index (row-major, y outer); throws DomainError outside the ROI.
  int bin_of(double x, double y) const;
  BinRect bin_rect(int bin) const;

  /// log of the bin weight divided by the bin area; kLogZero for empty bins.
  double log_prob(double x, double y) const;
  std::pair<double, double> sample(Rng& rng) const;

  bool operator==(const PositionDistribution& o) const {
    return weights_ == o.weights_ && roi_.x_min == o.roi_.x_min && roi_.x_max == o.roi_.x_max &&
           roi_.y_min == o.roi_.y_min && roi_.y_max == o.roi_.y_max &&
           roi_.n_bins_x == o.roi_.n_bins_x && roi_.n_bins_y == o.roi_.n_bins_y;
  }

 private:
  RegionOfInterest roi_;
  std::vector<double> weights_;
  std::vector<double> cdf_;
};

CountDistribution fit_count_dist(std::span<const Frame> frames);
PositionDistribution fit_position_dist(std::span<const Frame> frames, const RegionOfInterest& roi);

/// The fitted pair used throughout inference and simulation.
struct EmpiricalDists {
  CountDistribution count;
  PositionDistribution position;

  /// log phi(l) + sum_j log psi(x_j, y_j).
  double frame_log_prob(const Frame& frame) const;
};

EmpiricalDists fit_empirical_dists(std::span<const Frame> frames, const RegionOfInterest& roi);

}  // namespace dpgp
