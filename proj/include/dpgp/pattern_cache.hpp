// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dpgp/core_model.hpp"
#include "dpgp/gp_field.hpp"

namespace dpgp {

/// Cholesky factors of sigma_eta^2 R + sigma_n^2 I (one per velocity axis)
/// over the stacked points of a pattern's training frames. Frames can be
/// appended or removed in O(n^2 l) without refactorizing, which keeps a
/// Gibbs sweep cheap when only a few frames move.
///
/// Densities returned here are of noisy velocity observations, so the
/// predictive covariance includes sigma_n^2 on the diagonal.
class PatternCache {
 public:
  PatternCache(std::span<const Frame> frames, const KernelParams& params, double mean_x,
               double mean_y, std::span<const std::size_t> training_frames);

  const KernelParams& params() const { return params_; }
  std::vector<std::size_t> training_frames() const;
  bool contains(std::size_t frame_index) const;
  Eigen::Index size() const { return n_; }

  /// Brings the training set to `desired` (any order) by removing and
  /// appending frame blocks. Falls back to a full rebuild on numerical trouble.
  void set_training_frames(std::span<const std::size_t> desired);

  /// log N(V_eta of frame | all training frames other than this one), summed
  /// over both axes. A frame that is the whole training set gets the prior.
  double log_predictive(std::size_t frame_index) const;

  /// Sum over axes of log N(V_eta; mu_eta, sigma_eta^2 R + sigma_n^2 I) for the
  /// training set (the GP marginal likelihood); 0 when empty.
  double log_marginal() const;

 private:
  struct Block {
    std::size_t frame;
    Eigen::Index offset;
    Eigen::Index length;
  };

  void rebuild(std::span<const std::size_t> order);
  bool append(std::size_t frame_index);
  void remove(std::size_t block);
  void refresh_beta();
  void reserve(Eigen::Index n);
  bool factor_healthy() const;

  std::span<const Frame> frames_;
  KernelParams params_;
  std::array<double, 2> mean_;
  std::array<double, 2> jitter_{0.0, 0.0};

  std::vector<Block> blocks_;
  Eigen::Index n_ = 0;
  Positions positions_{0, 2};
  std::array<Eigen::VectorXd, 2> velocity_;
  std::array<Eigen::MatrixXd, 2> factor_;  // capacity >= n_; lower triangle of top-left n_ x n_
  std::array<Eigen::VectorXd, 2> beta_;  // L^-1 (v - mu), length n_
};

/// In-place update of a lower Cholesky factor so that L L^T becomes
/// L L^T + x x^T. `x` is consumed.
void cholesky_rank1_update(Eigen::Ref<Eigen::MatrixXd> lower, Eigen::Ref<Eigen::VectorXd> x);

}  // namespace dpgp
