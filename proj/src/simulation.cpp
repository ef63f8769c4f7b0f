// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgp/simulation.hpp"

#include <cmath>
#include <sstream>

#include "dpgp/errors.hpp"

namespace dpgp {

namespace {

Positions frame_positions(const Frame& f) {
  Positions p(static_cast<Eigen::Index>(f.size()), 2);
  for (std::size_t j = 0; j < f.size(); ++j) {
    p(static_cast<Eigen::Index>(j), 0) = f.vehicles[j].x;
    p(static_cast<Eigen::Index>(j), 1) = f.vehicles[j].y;
  }
  return p;
}

}  // namespace

GpPredictor pattern_predictor(const FittedModel& model, PatternId id) {
  const MotionPattern* p = model.state.find(id);
  if (!p) throw DomainError("unknown pattern id " + std::to_string(to_int(id)));
  const auto which = select_training_frames(model.frames, p->member_frames,
                                            model.options.training_cap, model.prior.rng_seed);
  return GpPredictor(stack_frames(model.frames, which), p->params, p->prior_mean_x,
                     p->prior_mean_y);
}

Frame generate_frame(const GpPredictor& pattern, const EmpiricalDists& dists, Rng& rng,
                     std::size_t frame_id, double timestamp) {
  const std::size_t l = dists.count.sample(rng);
  Positions pos(static_cast<Eigen::Index>(l), 2);
  for (Eigen::Index j = 0; j < pos.rows(); ++j) {
    const auto [x, y] = dists.position.sample(rng);
    pos(j, 0) = x;
    pos(j, 1) = y;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::array<Eigen::VectorXd, 2> v;
  for (int a = 0; a < 2; ++a) {
    const AxisPosterior post = pattern.posterior(a, pos);
    const SpdFactor f = factorize_spd(post.cov, pattern.params().sigma_sq(a), true);
    Eigen::VectorXd z(pos.rows());
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = normal(rng);
    v[static_cast<std::size_t>(a)] = post.mean + f.llt.matrixL() * z;
  }
  Frame out{frame_id, timestamp, {}};
  for (Eigen::Index j = 0; j < pos.rows(); ++j) {
    out.vehicles.push_back({pos(j, 0), pos(j, 1), v[0][j], v[1][j]});
  }
  return out;
}

std::vector<Trajectory> simulate_trajectories(const GpPredictor& pattern, const Frame& initial,
                                              const RegionOfInterest& roi,
                                              const SimulationOptions& options) {
  if (!(options.dt > 0)) throw DomainError("simulation time step must be positive");
  if (options.n_steps < 1) throw DomainError("simulation needs at least one step");
  validate_frame(initial, roi);

  const std::size_t n = initial.size();
  std::vector<Trajectory> out(n);
  std::vector<std::size_t> active;
  Positions pos = frame_positions(initial);
  for (std::size_t j = 0; j < n; ++j) {
    out[j].vehicle_id = static_cast<std::int64_t>(j);
    out[j].samples.push_back({initial.timestamp, pos(static_cast<Eigen::Index>(j), 0),
                              pos(static_cast<Eigen::Index>(j), 1), 0.0, 0.0});
    active.push_back(j);
  }

  auto velocities = [&](const Positions& p, int step) {
    if (options.velocity == RolloutVelocity::kMean) {
      return Eigen::Matrix<double, Eigen::Dynamic, 2>(pattern.mean(p));
    }
    const auto mv = pattern.mean_and_variance(p);
    Eigen::Matrix<double, Eigen::Dynamic, 2> v(p.rows(), 2);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      Rng rng = make_stream(options.seed, {tag(StreamTag::kSimulate),
                                           static_cast<std::uint64_t>(active[static_cast<std::size_t>(r)]),
                                           static_cast<std::uint64_t>(step)});
      std::normal_distribution<double> normal(0.0, 1.0);
      v(r, 0) = mv(r, 0) + std::sqrt(mv(r, 2)) * normal(rng);
      v(r, 1) = mv(r, 1) + std::sqrt(mv(r, 3)) * normal(rng);
    }
    return v;
  };

  for (int step = 0; step <= options.n_steps && !active.empty(); ++step) {
    Positions cur(static_cast<Eigen::Index>(active.size()), 2);
    for (std::size_t r = 0; r < active.size(); ++r) {
      const auto& s = out[active[r]].samples.back();
      cur(static_cast<Eigen::Index>(r), 0) = s.x;
      cur(static_cast<Eigen::Index>(r), 1) = s.y;
    }
    const auto v = velocities(cur, step);
    for (std::size_t r = 0; r < active.size(); ++r) {
      auto& s = out[active[r]].samples.back();
      s.vx = v(static_cast<Eigen::Index>(r), 0);
      s.vy = v(static_cast<Eigen::Index>(r), 1);
    }
    if (step == options.n_steps) break;

    Eigen::Matrix<double, Eigen::Dynamic, 2> advance = v;
    if (options.integrator == Integrator::kMidpoint) {
      const Positions mid = cur + 0.5 * options.dt * v;
      advance = velocities(mid, step);
    }
    const Positions next = cur + options.dt * advance;

    std::vector<std::size_t> still;
    for (std::size_t r = 0; r < active.size(); ++r) {
      const auto ri = static_cast<Eigen::Index>(r);
      const double x = next(ri, 0);
      const double y = next(ri, 1);
      if (!std::isfinite(x) || !std::isfinite(y)) {
        std::ostringstream os;
        os << "non-finite position for vehicle " << active[r] << " at step " << step + 1;
        throw NumericalError(os.str());
      }
      if (!roi.contains(x, y)) continue;
      const double t = initial.timestamp + (step + 1) * options.dt;
      out[active[r]].samples.push_back({t, x, y, 0.0, 0.0});
      still.push_back(active[r]);
    }
    active.swap(still);
  }
  return out;
}

Classifier::Classifier(const FittedModel& model) : model_(model) {
  predictors_.reserve(model.state.K());
  for (const auto& p : model.state.patterns) predictors_.push_back(pattern_predictor(model, p.id));
}

Classification Classifier::classify(const Frame& frame) const {
  const auto& state = model_.state;
  const std::size_t K = state.K();
  const double log_den = std::log(static_cast<double>(state.N()) + state.alpha);
  const double dist_term = model_.dists.frame_log_prob(frame);
  const Positions test = frame_positions(frame);

  AssignmentScores s;
  s.log_prior.assign(K + 1, kLogZero);
  s.log_likelihood.assign(K + 1, kLogZero);
  s.score.assign(K + 1, kLogZero);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& p = state.patterns[k];
    s.ids.push_back(p.id);
    s.log_prior[k] = std::log(static_cast<double>(p.count())) - log_den;
    double ll = dist_term;
    for (int a = 0; a < 2; ++a) {
      AxisPosterior post = predictors_[k].posterior(a, test);
      post.cov.diagonal().array() += p.params.sigma_n_sq;
      Eigen::VectorXd v(test.rows());
      for (std::size_t j = 0; j < frame.size(); ++j) {
        v[static_cast<Eigen::Index>(j)] = a == 0 ? frame.vehicles[j].vx : frame.vehicles[j].vy;
      }
      ll += gaussian_log_density(v, post.mean, post.cov);
    }
    s.log_likelihood[k] = ll;
    s.score[k] = s.log_prior[k] + ll;
  }
  Rng rng = make_stream(model_.prior.rng_seed, {tag(StreamTag::kClassify), frame.frame_id});
  s.log_prior[K] = std::log(state.alpha) - log_den;
  s.log_likelihood[K] = new_pattern_log_likelihood(frame, model_.prior, model_.dists, rng);
  s.score[K] = s.log_prior[K] + s.log_likelihood[K];

  Classification c;
  const std::size_t best = argmax_assignment(s);
  c.is_new = best == s.new_index();
  c.pattern = c.is_new ? PatternId{state.next_id} : s.ids[best];
  c.scores = std::move(s);
  return c;
}

Classification classify_frame(const Frame& frame, const FittedModel& model) {
  return Classifier(model).classify(frame);
}

}  // namespace dpgp
