// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgp/dp_inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

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

Eigen::VectorXd frame_velocity(const Frame& f, int axis) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(f.size()));
  for (std::size_t j = 0; j < f.size(); ++j) {
    v[static_cast<Eigen::Index>(j)] = axis == 0 ? f.vehicles[j].vx : f.vehicles[j].vy;
  }
  return v;
}

double log_sum_exp(std::span<const double> xs) {
  double m = kLogZero;
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

double frame_log_likelihood(const Frame& frame, const MotionPattern& pattern,
                            const TrainingSet& member_data, const EmpiricalDists& dists) {
  const Positions test = frame_positions(frame);
  double lp = dists.frame_log_prob(frame);
  if (member_data.size() == 0) {
    for (int a = 0; a < 2; ++a) {
      lp += gp_prior_log_density(test, frame_velocity(frame, a), pattern.prior_mean(a),
                                 pattern.params.sigma_sq(a), pattern.params.w_x,
                                 pattern.params.w_y, pattern.params.sigma_n_sq);
    }
    return lp;
  }
  const GpPredictor predictor(member_data, pattern.params, pattern.prior_mean_x,
                              pattern.prior_mean_y);
  for (int a = 0; a < 2; ++a) {
    AxisPosterior post = predictor.posterior(a, test);
    post.cov.diagonal().array() += pattern.params.sigma_n_sq;
    lp += gaussian_log_density(frame_velocity(frame, a), post.mean, post.cov);
  }
  return lp;
}

double new_pattern_velocity_log_likelihood(const Frame& frame, const PriorConfig& prior,
                                           Rng& rng) {
  if (prior.n_mc < 1) throw DomainError("n_mc must be at least 1");
  const auto n = static_cast<std::size_t>(prior.n_mc);
  std::vector<std::pair<double, double>> draws(n);
  for (auto& d : draws) {
    d.first = draw_gamma(rng, prior.a, prior.b);
    d.second = draw_gamma(rng, prior.a, prior.b);
  }
  const Positions pos = frame_positions(frame);
  const std::array<Eigen::VectorXd, 2> v{frame_velocity(frame, 0), frame_velocity(frame, 1)};
  const std::array<double, 2> mu{prior.mu0_x, prior.mu0_y};
  const std::array<double, 2> s2{prior.sigma0_sq_x, prior.sigma0_sq_y};

  std::vector<double> terms(n);
  for (std::size_t m = 0; m < n; ++m) {
    const Eigen::MatrixXd r = correlation_matrix(pos, pos, draws[m].first, draws[m].second);
    double lp = 0.0;
    for (std::size_t a = 0; a < 2; ++a) {
      Eigen::MatrixXd c = s2[a] * r;
      c.diagonal().array() += prior.sigma_n_sq;
      const SpdFactor f = factorize_spd(c, s2[a], prior.sigma_n_sq == 0.0);
      lp += gaussian_log_density(v[a], Eigen::VectorXd::Constant(v[a].size(), mu[a]), f);
    }
    terms[m] = lp;
  }
  return log_sum_exp(terms) - std::log(static_cast<double>(n));
}

double new_pattern_log_likelihood(const Frame& frame, const PriorConfig& prior,
                                  const EmpiricalDists& dists, Rng& rng) {
  return dists.frame_log_prob(frame) + new_pattern_velocity_log_likelihood(frame, prior, rng);
}

double gamma_log_pdf(double x, double shape, double scale) {
  if (!(x > 0)) return kLogZero;
  return (shape - 1) * std::log(x) - x / scale - std::lgamma(shape) - shape * std::log(scale);
}

double alpha_log_density(double alpha, std::size_t K, std::size_t N) {
  const double k = static_cast<double>(K);
  const double n = static_cast<double>(N);
  return (k - 1.5) * std::log(alpha) - 1.0 / (2.0 * alpha) + std::lgamma(alpha) -
         std::lgamma(n + alpha);
}

AlphaGrid::AlphaGrid(double alpha_min, double alpha_max, int points) {
  if (!(alpha_min > 0) || !(alpha_max > alpha_min) || points < 2) {
    throw DomainError("alpha grid needs 0 < min < max and at least two points");
  }
  const double lo = std::log(alpha_min);
  const double hi = std::log(alpha_max);
  const double h = (hi - lo) / (points - 1);
  for (int j = 0; j < points; ++j) {
    const double u = j + 1 == points ? hi : lo + j * h;
    log_points_.push_back(u);
    points_.push_back(std::exp(u));
    log_cell_lo_.push_back(std::max(lo, u - 0.5 * h));
    log_cell_hi_.push_back(std::min(hi, u + 0.5 * h));
  }
}

std::vector<double> AlphaGrid::cell_probabilities(std::size_t K, std::size_t N) const {
  std::vector<double> logw(points_.size());
  for (std::size_t j = 0; j < points_.size(); ++j) {
    // density in log(alpha) is p(alpha) * alpha
    logw[j] = alpha_log_density(points_[j], K, N) + log_points_[j] +
              std::log(log_cell_hi_[j] - log_cell_lo_[j]);
  }
  const double norm = log_sum_exp(logw);
  std::vector<double> p(logw.size());
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = std::exp(logw[j] - norm);
  return p;
}

double AlphaGrid::sample(std::size_t K, std::size_t N, Rng& rng) const {
  const auto p = cell_probabilities(K, N);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double r = u01(rng);
  const double t = u01(rng);
  double acc = 0.0;
  std::size_t j = 0;
  for (; j + 1 < p.size(); ++j) {
    acc += p[j];
    if (r < acc) break;
  }
  const double la = log_cell_lo_[j] + t * (log_cell_hi_[j] - log_cell_lo_[j]);
  return std::clamp(std::exp(la), points_.front(), points_.back());
}

void update_alpha(MixtureState& state, const AlphaGrid& grid, Rng& rng) {
  if (state.K() < 1 || state.N() < 1) throw DomainError("alpha update needs K >= 1 and N >= 1");
  state.alpha = grid.sample(state.K(), state.N(), rng);
}

double mh_log_acceptance(double current, double proposed, double log_target_current,
                         double log_target_proposed) {
  if (proposed == current && log_target_proposed == log_target_current) return 0.0;
  return log_target_proposed - log_target_current + std::log(proposed) - std::log(current);
}

MhStep mh_log_normal_step(double current, double log_target_current, double step, Rng& rng,
                          const std::function<double(double)>& log_target) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double eps = normal(rng);
  const double u = u01(rng);
  const double proposed = current * std::exp(step * eps);
  MhStep keep{current, log_target_current, false};
  double lt = kLogZero;
  try {
    lt = log_target(proposed);
  } catch (const Error&) {
    return keep;
  }
  if (!std::isfinite(lt)) return keep;
  const double la = mh_log_acceptance(current, proposed, log_target_current, lt);
  if (la >= 0 || std::log(u) < la) return {proposed, lt, true};
  return keep;
}

double length_scale_log_target(double w_x, double w_y, const MotionPattern& pattern,
                               const TrainingSet& member_data, const PriorConfig& prior) {
  double lt = gamma_log_pdf(w_x, prior.a, prior.b) + gamma_log_pdf(w_y, prior.a, prior.b);
  if (!std::isfinite(lt) || member_data.size() == 0) return lt;
  for (int a = 0; a < 2; ++a) {
    lt += gp_prior_log_density(member_data.positions, member_data.velocity(a),
                               pattern.prior_mean(a), pattern.params.sigma_sq(a), w_x, w_y,
                               pattern.params.sigma_n_sq);
  }
  return lt;
}

int update_length_scales(MotionPattern& pattern, const TrainingSet& member_data,
                         const PriorConfig& prior, double mh_step, Rng& rng) {
  auto& p = pattern.params;
  double lt = length_scale_log_target(p.w_x, p.w_y, pattern, member_data, prior);
  int accepted = 0;
  const auto sx = mh_log_normal_step(p.w_x, lt, mh_step, rng, [&](double w) {
    return length_scale_log_target(w, p.w_y, pattern, member_data, prior);
  });
  if (sx.accepted) {
    p.w_x = sx.value;
    lt = sx.log_target;
    ++accepted;
  }
  const auto sy = mh_log_normal_step(p.w_y, lt, mh_step, rng, [&](double w) {
    return length_scale_log_target(p.w_x, w, pattern, member_data, prior);
  });
  if (sy.accepted) {
    p.w_y = sy.value;
    ++accepted;
  }
  return accepted;
}

std::size_t argmax_assignment(const AssignmentScores& scores) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.ids.size(); ++k) {
    if (scores.score[k] > scores.score[best]) best = k;
  }
  const std::size_t nw = scores.new_index();
  if (scores.ids.empty() || scores.score[nw] > scores.score[best]) return nw;
  return best;
}

GibbsSampler::GibbsSampler(std::span<const Frame> frames, EmpiricalDists dists,
                           PriorConfig prior, SamplerOptions options, MixtureState state)
    : frames_(frames),
      dists_(std::move(dists)),
      prior_(prior),
      options_(options),
      state_(std::move(state)),
      alpha_grid_(options.alpha_min, options.alpha_max, options.alpha_grid_points),
      pool_(std::make_unique<ThreadPool>(std::max<std::size_t>(1, options.workers))) {
  prior_.validate();
  if (frames_.empty()) throw DomainError("inference needs at least one frame");
  if (state_.N() != frames_.size()) throw DomainError("state size does not match the dataset");
  if (auto report = validate_state(state_); !report.empty()) {
    throw DomainError("invalid initial state: " + report.front());
  }
  frame_dist_terms_.reserve(frames_.size());
  for (const auto& f : frames_) {
    if (f.vehicles.empty()) throw DomainError("frame " + std::to_string(f.frame_id) + " is empty");
    frame_dist_terms_.push_back(dists_.frame_log_prob(f));
  }
  for (const auto& p : state_.patterns) sync_cache(p);
}

MixtureState GibbsSampler::initial_state(std::size_t n_frames, const PriorConfig& prior) {
  prior.validate();
  Rng rng = make_stream(prior.rng_seed, {tag(StreamTag::kInit)});
  KernelParams params;
  params.sigma_sq_x = prior.sigma0_sq_x;
  params.sigma_sq_y = prior.sigma0_sq_y;
  params.sigma_n_sq = prior.sigma_n_sq;
  params.w_x = draw_gamma(rng, prior.a, prior.b);
  params.w_y = draw_gamma(rng, prior.a, prior.b);
  const double alpha = 1.0 / draw_gamma(rng, 1.0, 1.0);
  return make_single_pattern_state(n_frames, params, prior.mu0_x, prior.mu0_y, alpha);
}

PatternCache& GibbsSampler::cache(PatternId id) { return *caches_.at(id); }

void GibbsSampler::sync_cache(const MotionPattern& pattern) {
  const auto desired = select_training_frames(frames_, pattern.member_frames,
                                              options_.training_cap, prior_.rng_seed);
  auto it = caches_.find(pattern.id);
  if (it == caches_.end()) {
    caches_.emplace(pattern.id,
                    std::make_unique<PatternCache>(frames_, pattern.params, pattern.prior_mean_x,
                                                   pattern.prior_mean_y, desired));
  } else {
    it->second->set_training_frames(desired);
  }
}

double GibbsSampler::new_pattern_term(std::size_t i, int iteration) const {
  Rng rng = make_stream(prior_.rng_seed, {tag(StreamTag::kNewPatternMc),
                                          static_cast<std::uint64_t>(iteration), i});
  return frame_dist_terms_[i] + new_pattern_velocity_log_likelihood(frames_[i], prior_, rng);
}

AssignmentScores GibbsSampler::assignment_posterior(std::size_t i, int iteration) {
  const PatternId current = state_.assignments.at(i);
  const std::size_t K = state_.K();
  const double log_den = std::log(static_cast<double>(state_.N()) - 1.0 + state_.alpha);

  AssignmentScores s;
  s.ids.reserve(K);
  for (const auto& p : state_.patterns) s.ids.push_back(p.id);
  s.log_prior.assign(K + 1, kLogZero);
  s.log_likelihood.assign(K + 1, kLogZero);
  s.score.assign(K + 1, kLogZero);

  pool_->parallel_for(K + 1, [&](std::size_t k) {
    if (k == K) {
      s.log_prior[k] = std::log(state_.alpha) - log_den;
      s.log_likelihood[k] = new_pattern_term(i, iteration);
    } else {
      const auto& p = state_.patterns[k];
      const std::size_t n = p.count() - (p.id == current ? 1 : 0);
      if (n == 0) return;
      s.log_prior[k] = std::log(static_cast<double>(n)) - log_den;
      try {
        s.log_likelihood[k] = frame_dist_terms_[i] + caches_.at(p.id)->log_predictive(i);
      } catch (const ConditioningError& e) {
        throw ConditioningError("pattern " + std::to_string(to_int(p.id)) + ": " + e.what(),
                                e.jitter_levels());
      }
    }
    s.score[k] = s.log_prior[k] + s.log_likelihood[k];
  });
  return s;
}

void GibbsSampler::update_assignment(std::size_t i, int iteration) {
  const AssignmentScores s = assignment_posterior(i, iteration);
  std::size_t choice = 0;
  if (options_.assignment == AssignmentMode::kMap) {
    choice = argmax_assignment(s);
  } else {
    Rng rng = make_stream(prior_.rng_seed, {tag(StreamTag::kAssignmentDraw),
                                            static_cast<std::uint64_t>(iteration), i});
    const double norm = log_sum_exp(s.score);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double r = u01(rng);
    double acc = 0.0;
    choice = s.score.size() - 1;
    for (std::size_t k = 0; k < s.score.size(); ++k) {
      acc += std::exp(s.score[k] - norm);
      if (r < acc) {
        choice = k;
        break;
      }
    }
  }

  const PatternId current = state_.assignments[i];
  MotionPattern* from = state_.find(current);
  const bool to_new = choice == s.new_index();
  if (!to_new && s.ids[choice] == current) return;
  // A singleton choosing a fresh pattern keeps its own.
  if (to_new && from->count() == 1) return;

  from->member_frames.erase(i);
  if (from->member_frames.empty()) {
    caches_.erase(current);
    state_.patterns.erase(state_.patterns.begin() + (from - state_.patterns.data()));
  } else {
    sync_cache(*from);
  }

  PatternId target{};
  if (to_new) {
    Rng rng = make_stream(prior_.rng_seed, {tag(StreamTag::kNewPatternParams),
                                            static_cast<std::uint64_t>(iteration), i});
    MotionPattern p;
    p.id = PatternId{state_.next_id++};
    p.member_frames.insert(i);
    p.params.sigma_sq_x = prior_.sigma0_sq_x;
    p.params.sigma_sq_y = prior_.sigma0_sq_y;
    p.params.sigma_n_sq = prior_.sigma_n_sq;
    p.params.w_x = draw_gamma(rng, prior_.a, prior_.b);
    p.params.w_y = draw_gamma(rng, prior_.a, prior_.b);
    p.prior_mean_x = prior_.mu0_x;
    p.prior_mean_y = prior_.mu0_y;
    state_.patterns.push_back(std::move(p));
    sync_cache(state_.patterns.back());
    target = state_.patterns.back().id;
  } else {
    target = s.ids[choice];
    MotionPattern* to = state_.find(target);
    to->member_frames.insert(i);
    sync_cache(*to);
  }
  state_.assignments[i] = target;
}

void GibbsSampler::update_parameters(int iteration) {
  const std::size_t K = state_.K();
  std::vector<KernelParams> new_params(K);
  std::vector<std::unique_ptr<PatternCache>> new_caches(K);

  pool_->parallel_for(K, [&](std::size_t k) {
    const MotionPattern& pattern = state_.patterns[k];
    const PatternCache& current_cache = *caches_.at(pattern.id);
    Rng rng = make_stream(prior_.rng_seed,
                          {tag(StreamTag::kLengthScale), static_cast<std::uint64_t>(iteration),
                           static_cast<std::uint64_t>(to_int(pattern.id))});
    const std::vector<std::size_t> order = current_cache.training_frames();
    KernelParams params = pattern.params;
    double lt = current_cache.log_marginal() + gamma_log_pdf(params.w_x, prior_.a, prior_.b) +
                gamma_log_pdf(params.w_y, prior_.a, prior_.b);

    std::unique_ptr<PatternCache> candidate;
    auto target = [&](const KernelParams& trial) {
      double v = gamma_log_pdf(trial.w_x, prior_.a, prior_.b) +
                 gamma_log_pdf(trial.w_y, prior_.a, prior_.b);
      if (!std::isfinite(v)) return v;
      candidate = std::make_unique<PatternCache>(frames_, trial, pattern.prior_mean_x,
                                                 pattern.prior_mean_y, order);
      return v + candidate->log_marginal();
    };
    for (int axis = 0; axis < 2; ++axis) {
      double& w = axis == 0 ? params.w_x : params.w_y;
      const auto step = mh_log_normal_step(w, lt, options_.mh_step, rng, [&](double trial_w) {
        KernelParams trial = params;
        (axis == 0 ? trial.w_x : trial.w_y) = trial_w;
        return target(trial);
      });
      if (step.accepted) {
        w = step.value;
        lt = step.log_target;
        new_caches[k] = std::move(candidate);
      }
      candidate.reset();
    }
    new_params[k] = params;
  });

  for (std::size_t k = 0; k < K; ++k) {
    auto& pattern = state_.patterns[k];
    pattern.params = new_params[k];
    if (new_caches[k]) caches_[pattern.id] = std::move(new_caches[k]);
  }

  Rng rng = make_stream(prior_.rng_seed,
                        {tag(StreamTag::kAlpha), static_cast<std::uint64_t>(iteration)});
  update_alpha(state_, alpha_grid_, rng);
}

double GibbsSampler::total_log_likelihood() const {
  double ll = 0.0;
  for (const auto& [id, c] : caches_) ll += c->log_marginal();
  for (double t : frame_dist_terms_) ll += t;
  return ll;
}

IterationRecord GibbsSampler::run_iteration(int iteration) {
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < frames_.size(); ++i) update_assignment(i, iteration);
  update_parameters(iteration);

  IterationRecord r;
  r.iteration = iteration;
  r.K = state_.K();
  r.alpha = state_.alpha;
  for (const auto& p : state_.patterns) r.counts.emplace_back(p.id, p.count());
  r.log_likelihood = total_log_likelihood();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (options_.progress) {
    *options_.progress << "iteration=" << iteration << " K=" << r.K << std::setprecision(6)
                       << " alpha=" << r.alpha << " loglik=" << std::setprecision(10)
                       << r.log_likelihood << std::setprecision(3) << " seconds=" << r.seconds
                       << '\n'
                       << std::flush;
  }
  return r;
}

GibbsResult run_gibbs(std::span<const Frame> frames, const PriorConfig& prior,
                      const EmpiricalDists& dists, const SamplerOptions& options) {
  GibbsSampler sampler(frames, dists, prior, options,
                       GibbsSampler::initial_state(frames.size(), prior));
  GibbsTrace trace;
  for (int t = 0; t < prior.n_gibbs; ++t) {
    try {
      trace.records.push_back(sampler.run_iteration(t));
    } catch (const Error& e) {
      throw InferenceAborted("iteration " + std::to_string(t) + " failed: " + e.what(),
                             std::move(trace));
    }
  }
  return {sampler.state(), std::move(trace)};
}

GibbsResult run_gibbs(std::span<const Frame> frames, const PriorConfig& prior,
                      const RegionOfInterest& roi, const SamplerOptions& options) {
  if (frames.empty()) throw DomainError("inference needs at least one frame");
  return run_gibbs(frames, prior, fit_empirical_dists(frames, roi), options);
}

double adjusted_rand_index(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
  if (a.size() != b.size()) throw DomainError("labelings differ in length");
  const auto n = static_cast<double>(a.size());
  std::map<std::pair<std::int64_t, std::int64_t>, double> table;
  std::map<std::int64_t, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1;
    rows[a[i]] += 1;
    cols[b[i]] += 1;
  }
  auto c2 = [](double x) { return x * (x - 1) / 2; };
  double index = 0, sa = 0, sb = 0;
  for (const auto& [k, v] : table) index += c2(v);
  for (const auto& [k, v] : rows) sa += c2(v);
  for (const auto& [k, v] : cols) sb += c2(v);
  const double expected = sa * sb / c2(n);
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

std::vector<std::pair<PatternId, double>> mixture_proportions(const MixtureState& state) {
  std::vector<std::pair<PatternId, double>> out;
  const auto n = static_cast<double>(state.N());
  for (const auto& p : state.patterns) out.emplace_back(p.id, static_cast<double>(p.count()) / n);
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  return out;
}

}  // namespace dpgp
