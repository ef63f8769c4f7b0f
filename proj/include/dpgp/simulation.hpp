// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "dpgp/core_model.hpp"
#include "dpgp/dp_inference.hpp"
#include "dpgp/empirical_dist.hpp"
#include "dpgp/gp_field.hpp"
#include "dpgp/rng.hpp"

namespace dpgp {

/// Everything needed to evaluate a fitted mixture: the training frames it
/// conditions on, the empirical distributions, priors and the final state.
struct FittedModel {
  RegionOfInterest roi;
  std::vector<Frame> frames;
  EmpiricalDists dists;
  PriorConfig prior;
  SamplerOptions options;
  MixtureState state;
  GibbsTrace trace;  // durations are not persisted
};

/// GP conditioned on the (capped) member data of pattern `id`.
GpPredictor pattern_predictor(const FittedModel& model, PatternId id);

struct TrajectorySample {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
};

struct Trajectory {
  std::int64_t vehicle_id = 0;
  std::vector<TrajectorySample> samples;
};

enum class Integrator { kEuler, kMidpoint };

enum class RolloutVelocity {
  kMean,     // posterior mean field
  kSampled,  // independent draw from the marginal posterior at each step
};

struct SimulationOptions {
  double dt = 0.5;
  int n_steps = 20;
  Integrator integrator = Integrator::kEuler;
  RolloutVelocity velocity = RolloutVelocity::kMean;
  std::uint64_t seed = 0;
};

/// Draws a vehicle count, positions, and then jointly Gaussian velocities from
/// the pattern's posterior at those positions.
Frame generate_frame(const GpPredictor& pattern, const EmpiricalDists& dists, Rng& rng,
                     std::size_t frame_id = 0, double timestamp = 0.0);

/// Rolls every vehicle of `initial` forward along the pattern's velocity
/// field. Each trajectory starts with the initial position; a vehicle whose
/// next position leaves the region stops before that step.
std::vector<Trajectory> simulate_trajectories(const GpPredictor& pattern, const Frame& initial,
                                              const RegionOfInterest& roi,
                                              const SimulationOptions& options);

struct Classification {
  PatternId pattern{0};
  bool is_new = false;  // the new-pattern option won
  AssignmentScores scores;
};

/// Scores test frames against a fitted model without modifying it.
/// Predictors for every pattern are built once.
class Classifier {
 public:
  explicit Classifier(const FittedModel& model);
  Classification classify(const Frame& frame) const;

 private:
  const FittedModel& model_;
  std::vector<GpPredictor> predictors_;
};

Classification classify_frame(const Frame& frame, const FittedModel& model);

}  // namespace dpgp
