// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "dpgp/core_model.hpp"

namespace dpgp {

/// One position per row: column 0 is x, column 1 is y.
using Positions = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// Marginal variances in [-kVarianceClampTolerance * max(1, sigma^2), 0)
/// are clamped to zero; anything more negative is a conditioning error.
inline constexpr double kVarianceClampTolerance = 1e-9;

/// Default cap on the number of stacked points used to condition a pattern.
inline constexpr std::size_t kDefaultTrainingCap = 2000;

double sq_exp_kernel(const Eigen::Vector2d& p, const Eigen::Vector2d& q, double sigma_sq,
                     double w_x, double w_y);

/// |a| x |b| matrix of kernel values. With `noise_sq` set, a and b must hold
/// the same points and the value is added on the diagonal.
Eigen::MatrixXd kernel_matrix(const Positions& a, const Positions& b, double sigma_sq,
                              double w_x, double w_y,
                              std::optional<double> noise_sq = std::nullopt);

/// Unit-variance correlation matrix exp(-dx^2/2w_x^2 - dy^2/2w_y^2).
Eigen::MatrixXd correlation_matrix(const Positions& a, const Positions& b, double w_x,
                                   double w_y);

/// Cholesky factor of an SPD matrix together with the diagonal jitter that
/// had to be added to obtain it.
struct SpdFactor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;

  double log_det() const;
};

/// Factorizes `a`. The first attempt uses no jitter unless `start_with_jitter`;
/// retries add 1e-10*scale, growing by 10x, for at most five retries.
SpdFactor factorize_spd(const Eigen::MatrixXd& a, double scale, bool start_with_jitter = false);

struct AxisPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Predictive distribution of the latent velocity at the test points, per axis.
struct Posterior {
  std::array<AxisPosterior, 2> axis;
};

/// Stacked training data of a pattern.
struct TrainingSet {
  Positions positions{0, 2};
  Eigen::VectorXd vx;
  Eigen::VectorXd vy;
  std::vector<std::size_t> frames;  // contributing frame indices, in stacking order

  Eigen::Index size() const { return positions.rows(); }
  const Eigen::VectorXd& velocity(int axis) const { return axis == 0 ? vx : vy; }
};

/// Deterministic pseudo-random priority used to subsample a pattern's frames.
std::uint64_t frame_priority(std::uint64_t seed, std::size_t frame_index);

/// Frames of `members` (minus `exclude`) that form the conditioning set:
/// all of them when their stacked size fits in `cap`, otherwise frames are
/// taken in ascending priority order while they fit (at least one is kept).
/// The result is sorted by frame index.
std::vector<std::size_t> select_training_frames(std::span<const Frame> frames,
                                                const std::set<std::size_t>& members,
                                                std::size_t cap, std::uint64_t seed,
                                                std::optional<std::size_t> exclude = std::nullopt);

TrainingSet stack_frames(std::span<const Frame> frames, std::span<const std::size_t> which);

/// Exact GP conditioning with a cached factorization of the training block.
/// An empty training set yields the prior.
class GpPredictor {
 public:
  GpPredictor(TrainingSet data, const KernelParams& params, double prior_mean_x,
              double prior_mean_y);

  const KernelParams& params() const { return params_; }
  const TrainingSet& data() const { return data_; }
  double prior_mean(int axis) const { return prior_mean_[static_cast<std::size_t>(axis)]; }

  AxisPosterior posterior(int axis, const Positions& test) const;
  Posterior posterior(const Positions& test) const;
  /// Posterior mean only; one row per test point.
  Eigen::Matrix<double, Eigen::Dynamic, 2> mean(const Positions& test) const;
  /// Posterior mean and marginal variance; columns (m_x, m_y, var_x, var_y).
  Eigen::Matrix<double, Eigen::Dynamic, 4> mean_and_variance(const Positions& test) const;

 private:
  TrainingSet data_;
  KernelParams params_;
  std::array<double, 2> prior_mean_;
  std::array<std::optional<SpdFactor>, 2> factor_;
  std::array<Eigen::VectorXd, 2> weights_;  // (K + s I)^-1 (v - mu)
};

/// Posterior mean and covariance at `test` given the training data.
Posterior gp_posterior(const Positions& train, const Eigen::VectorXd& train_vx,
                       const Eigen::VectorXd& train_vy, const Positions& test,
                       const KernelParams& params, double prior_mean_x, double prior_mean_y);

/// Exact multivariate normal log-density; `cov` is factorized with jitter
/// escalation.
double gaussian_log_density(const Eigen::VectorXd& v, const Eigen::VectorXd& mean,
                            const Eigen::MatrixXd& cov);

/// Same density evaluated from an existing factorization of `cov`.
double gaussian_log_density(const Eigen::VectorXd& v, const Eigen::VectorXd& mean,
                            const SpdFactor& cov);

/// log N(v; mu 1, sigma^2 R + sigma_n^2 I): the density of noisy velocity
/// observations under the GP prior of one axis.
double gp_prior_log_density(const Positions& positions, const Eigen::VectorXd& v, double mean,
                            double sigma_sq, double w_x, double w_y, double sigma_n_sq);

/// Regular nx x ny grid of cell centres over the region of interest.
struct GridSpec {
  int nx = 20;
  int ny = 20;

  /// Row-major: y outer, x inner.
  Positions points(const RegionOfInterest& roi) const;
};

struct VectorField {
  Positions points{0, 2};
  Eigen::VectorXd mean_x;
  Eigen::VectorXd mean_y;
  Eigen::VectorXd var_x;
  Eigen::VectorXd var_y;

  Eigen::Index size() const { return points.rows(); }
};

/// Posterior mean and marginal variance of a pattern on a grid, conditioned on
/// the pattern's (capped) stacked member data.
VectorField mean_velocity_field(const MotionPattern& pattern, std::span<const Frame> frames,
                                const RegionOfInterest& roi, const GridSpec& grid,
                                std::size_t training_cap = kDefaultTrainingCap,
                                std::uint64_t seed = 0);

VectorField evaluate_field(const GpPredictor& predictor, const Positions& points);

}  // namespace dpgp
