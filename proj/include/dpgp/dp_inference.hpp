// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "dpgp/core_model.hpp"
#include "dpgp/empirical_dist.hpp"
#include "dpgp/errors.hpp"
#include "dpgp/gp_field.hpp"
#include "dpgp/parallel.hpp"
#include "dpgp/pattern_cache.hpp"
#include "dpgp/rng.hpp"

namespace dpgp {

enum class AssignmentMode {
  kMap,     // argmax of the assignment posterior
  kSample,  // categorical draw from it
};

struct SamplerOptions {
  AssignmentMode assignment = AssignmentMode::kMap;
  double mh_step = 0.2;  // sd of the log-normal length-scale proposal
  double alpha_min = 1e-3;
  double alpha_max = 1e3;
  int alpha_grid_points = 1000;
  std::size_t training_cap = kDefaultTrainingCap;
  std::size_t workers = 1;
  std::ostream* progress = nullptr;  // one line per iteration when set
};

struct IterationRecord {
  int iteration = 0;
  std::size_t K = 0;
  double alpha = 0.0;
  std::vector<std::pair<PatternId, std::size_t>> counts;
  double log_likelihood = 0.0;
  double seconds = 0.0;
};

struct GibbsTrace {
  std::vector<IterationRecord> records;
};

/// Thrown when an iteration fails; carries the trace of completed iterations.
class InferenceAborted : public NumericalError {
 public:
  InferenceAborted(const std::string& what, GibbsTrace trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const GibbsTrace& trace() const { return trace_; }

 private:
  GibbsTrace trace_;
};

/// Frame likelihood under an existing pattern: empirical count and position
/// terms plus, per axis, the density of the frame's velocities under the GP
/// predictive conditioned on `member_data` (which must not contain the frame).
/// An empty `member_data` falls back to the GP prior. Velocities are treated
/// as noisy observations (sigma_n^2 on the predictive diagonal).
double frame_log_likelihood(const Frame& frame, const MotionPattern& pattern,
                            const TrainingSet& member_data, const EmpiricalDists& dists);

/// Velocity part of the new-pattern likelihood: log of the Monte-Carlo
/// average over n_mc length-scale pairs drawn from Gamma(a, b) of the GP
/// prior density of the frame (mean mu0, variance sigma0^2, noise sigma_n^2).
/// All draws are taken from `rng` before any density is evaluated.
double new_pattern_velocity_log_likelihood(const Frame& frame, const PriorConfig& prior,
                                           Rng& rng);

/// new_pattern_velocity_log_likelihood plus the empirical count/position terms.
double new_pattern_log_likelihood(const Frame& frame, const PriorConfig& prior,
                                  const EmpiricalDists& dists, Rng& rng);

/// log of the Gamma(shape, scale) density.
double gamma_log_pdf(double x, double shape, double scale);

/// Unnormalized log posterior of the concentration parameter:
/// (K - 3/2) log a - 1/(2a) + lgamma(a) - lgamma(N + a).
double alpha_log_density(double alpha, std::size_t K, std::size_t N);

/// Inverse-CDF sampler for alpha on a log-spaced grid. The density in
/// log(alpha) is treated as piecewise constant around each grid point.
class AlphaGrid {
 public:
  AlphaGrid(double alpha_min, double alpha_max, int points);

  const std::vector<double>& points() const { return points_; }
  /// Normalized cell probabilities for the given K, N.
  std::vector<double> cell_probabilities(std::size_t K, std::size_t N) const;
  double sample(std::size_t K, std::size_t N, Rng& rng) const;

 private:
  std::vector<double> log_points_;
  std::vector<double> points_;
  std::vector<double> log_cell_lo_;
  std::vector<double> log_cell_hi_;
};

/// Draws a new alpha for the state's K and N.
void update_alpha(MixtureState& state, const AlphaGrid& grid, Rng& rng);

/// log of the Metropolis-Hastings acceptance ratio for the multiplicative
/// log-normal proposal current -> proposed (includes the proposed/current
/// Jacobian). Zero when proposed == current.
double mh_log_acceptance(double current, double proposed, double log_target_current,
                         double log_target_proposed);

struct MhStep {
  double value = 0.0;
  double log_target = 0.0;
  bool accepted = false;
};

/// One MH step with proposal current * exp(step * N(0,1)). Always consumes
/// one normal and one uniform draw. A throwing target rejects the proposal.
MhStep mh_log_normal_step(double current, double log_target_current, double step, Rng& rng,
                          const std::function<double(double)>& log_target);

/// log Gamma(w_x) + log Gamma(w_y) prior + GP marginal likelihood (both axes)
/// of the stacked member data with the pattern's variances and noise.
double length_scale_log_target(double w_x, double w_y, const MotionPattern& pattern,
                               const TrainingSet& member_data, const PriorConfig& prior);

/// One MH step for w_x then one for w_y. Returns the number of acceptances.
int update_length_scales(MotionPattern& pattern, const TrainingSet& member_data,
                         const PriorConfig& prior, double mh_step, Rng& rng);

/// Prior and posterior scores of one frame's candidate assignments. The
/// first K entries follow the live patterns in id order; the last entry is
/// the new-pattern option.
struct AssignmentScores {
  std::vector<PatternId> ids;  // K entries
  std::vector<double> log_prior;
  std::vector<double> log_likelihood;
  std::vector<double> score;

  std::size_t new_index() const { return ids.size(); }
};

/// Index of the MAP entry: ties go to the first existing pattern; the new
/// option wins only on strict inequality.
std::size_t argmax_assignment(const AssignmentScores& scores);

/// Collapsed Gibbs sampler over frame assignments with length-scale and
/// concentration updates. All randomness is drawn from streams keyed by
/// (seed, purpose, iteration, frame or pattern), so results do not depend
/// on the worker count.
class GibbsSampler {
 public:
  GibbsSampler(std::span<const Frame> frames, EmpiricalDists dists, PriorConfig prior,
               SamplerOptions options, MixtureState state);

  /// Initial state: one pattern with Gamma(a, b) length scales and
  /// 1/alpha ~ Gamma(1, 1).
  static MixtureState initial_state(std::size_t n_frames, const PriorConfig& prior);

  const MixtureState& state() const { return state_; }
  const EmpiricalDists& dists() const { return dists_; }
  const PriorConfig& prior() const { return prior_; }
  const SamplerOptions& options() const { return options_; }

  /// Scores for frame i with i removed from its current pattern.
  AssignmentScores assignment_posterior(std::size_t i, int iteration);

  /// Reassigns frame i; opens or prunes patterns as needed.
  void update_assignment(std::size_t i, int iteration);

  /// One MH step per axis for every pattern, then a new alpha.
  void update_parameters(int iteration);

  /// Sweep over all frames in index order followed by update_parameters.
  IterationRecord run_iteration(int iteration);

  /// Sum over patterns of the GP marginal likelihood of their training sets
  /// plus the empirical count/position terms of every frame.
  double total_log_likelihood() const;

 private:
  PatternCache& cache(PatternId id);
  void sync_cache(const MotionPattern& pattern);
  double new_pattern_term(std::size_t i, int iteration) const;

  std::span<const Frame> frames_;
  EmpiricalDists dists_;
  PriorConfig prior_;
  SamplerOptions options_;
  MixtureState state_;
  AlphaGrid alpha_grid_;
  std::vector<double> frame_dist_terms_;
  std::map<PatternId, std::unique_ptr<PatternCache>> caches_;
  std::unique_ptr<ThreadPool> pool_;
};

struct GibbsResult {
  MixtureState state;
  GibbsTrace trace;
};

/// Full inference run. `prior` must already carry the data moments
/// (see fill_data_moments). Deterministic given prior.rng_seed.
GibbsResult run_gibbs(std::span<const Frame> frames, const PriorConfig& prior,
                      const RegionOfInterest& roi, const SamplerOptions& options = {});

GibbsResult run_gibbs(std::span<const Frame> frames, const PriorConfig& prior,
                      const EmpiricalDists& dists, const SamplerOptions& options = {});

/// Adjusted Rand index between two labelings of the same items.
double adjusted_rand_index(std::span<const std::int64_t> a, std::span<const std::int64_t> b);

/// Per-pattern n_k / N, sorted descending (ties by ascending id).
std::vector<std::pair<PatternId, double>> mixture_proportions(const MixtureState& state);

}  // namespace dpgp
