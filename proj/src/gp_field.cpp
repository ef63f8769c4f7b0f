// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgp/gp_field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "dpgp/errors.hpp"
#include "dpgp/rng.hpp"

namespace dpgp {

namespace {

void check_kernel_params(double sigma_sq, double w_x, double w_y) {
  if (!(sigma_sq > 0) || !(w_x > 0) || !(w_y > 0)) {
    std::ostringstream os;
    os << "kernel parameters must be positive (sigma_sq=" << sigma_sq << ", w_x=" << w_x
       << ", w_y=" << w_y << ")";
    throw DomainError(os.str());
  }
}

void check_params(const KernelParams& p) {
  if (!p.valid()) throw DomainError("kernel parameters must be positive");
}

double clamp_variance(double v, double sigma_sq) {
  if (v >= 0) return v;
  if (v >= -kVarianceClampTolerance * std::max(1.0, sigma_sq)) return 0.0;
  std::ostringstream os;
  os << "posterior variance " << v << " is negative beyond the clamp tolerance";
  throw ConditioningError(os.str(), {});
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace

double sq_exp_kernel(const Eigen::Vector2d& p, const Eigen::Vector2d& q, double sigma_sq,
                     double w_x, double w_y) {
  check_kernel_params(sigma_sq, w_x, w_y);
  const double dx = p.x() - q.x();
  const double dy = p.y() - q.y();
  return sigma_sq * std::exp(-dx * dx / (2 * w_x * w_x) - dy * dy / (2 * w_y * w_y));
}

Eigen::MatrixXd correlation_matrix(const Positions& a, const Positions& b, double w_x,
                                   double w_y) {
  check_kernel_params(1.0, w_x, w_y);
  const double cx = 1.0 / (2 * w_x * w_x);
  const double cy = 1.0 / (2 * w_y * w_y);
  Eigen::MatrixXd r(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    const double bx = b(j, 0);
    const double by = b(j, 1);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double dx = a(i, 0) - bx;
      const double dy = a(i, 1) - by;
      r(i, j) = std::exp(-dx * dx * cx - dy * dy * cy);
    }
  }
  return r;
}

Eigen::MatrixXd kernel_matrix(const Positions& a, const Positions& b, double sigma_sq,
                              double w_x, double w_y, std::optional<double> noise_sq) {
  if (a.rows() == 0 || b.rows() == 0) throw DomainError("kernel_matrix needs non-empty point lists");
  check_kernel_params(sigma_sq, w_x, w_y);
  Eigen::MatrixXd k = sigma_sq * correlation_matrix(a, b, w_x, w_y);
  if (noise_sq) {
    if (a.rows() != b.rows() || a != b) {
      throw DomainError("kernel_matrix: the noise term requires identical point lists");
    }
    k.diagonal().array() += *noise_sq;
  }
  return k;
}

double SpdFactor::log_det() const {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

SpdFactor factorize_spd(const Eigen::MatrixXd& a, double scale, bool start_with_jitter) {
  constexpr int kMaxRetries = 5;
  std::vector<double> tried;
  double jitter = start_with_jitter ? 1e-10 * scale : 0.0;
  for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
    SpdFactor f;
    f.jitter = jitter;
    if (jitter > 0) {
      Eigen::MatrixXd aj = a;
      aj.diagonal().array() += jitter;
      f.llt.compute(aj);
    } else {
      f.llt.compute(a);
    }
    tried.push_back(jitter);
    if (f.llt.info() == Eigen::Success && f.llt.matrixLLT().diagonal().allFinite() &&
        (f.llt.matrixLLT().diagonal().array() > 0).all()) {
      return f;
    }
    jitter = jitter > 0 ? jitter * 10 : 1e-10 * scale;
  }
  std::ostringstream os;
  os << "SPD factorization of a " << a.rows() << "x" << a.cols()
     << " matrix failed; jitter levels tried:";
  for (double j : tried) os << ' ' << j;
  throw ConditioningError(os.str(), tried);
}

std::uint64_t frame_priority(std::uint64_t seed, std::size_t frame_index) {
  return stream_key(seed, {0x7261696e696e67ull, static_cast<std::uint64_t>(frame_index)});
}

std::vector<std::size_t> select_training_frames(std::span<const Frame> frames,
                                                const std::set<std::size_t>& members,
                                                std::size_t cap, std::uint64_t seed,
                                                std::optional<std::size_t> exclude) {
  std::vector<std::size_t> chosen;
  std::size_t total = 0;
  for (auto i : members) {
    if (exclude && *exclude == i) continue;
    chosen.push_back(i);
    total += frames[i].size();
  }
  if (total <= cap) return chosen;

  std::vector<std::pair<std::uint64_t, std::size_t>> order;
  order.reserve(chosen.size());
  for (auto i : chosen) order.emplace_back(frame_priority(seed, i), i);
  std::sort(order.begin(), order.end());
  chosen.clear();
  std::size_t used = 0;
  for (const auto& [prio, i] : order) {
    const std::size_t l = frames[i].size();
    if (chosen.empty() || used + l <= cap) {
      chosen.push_back(i);
      used += l;
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

TrainingSet stack_frames(std::span<const Frame> frames, std::span<const std::size_t> which) {
  Eigen::Index n = 0;
  for (auto i : which) n += static_cast<Eigen::Index>(frames[i].size());
  TrainingSet t;
  t.positions.resize(n, 2);
  t.vx.resize(n);
  t.vy.resize(n);
  t.frames.assign(which.begin(), which.end());
  Eigen::Index r = 0;
  for (auto i : which) {
    for (const auto& v : frames[i].vehicles) {
      t.positions(r, 0) = v.x;
      t.positions(r, 1) = v.y;
      t.vx[r] = v.vx;
      t.vy[r] = v.vy;
      ++r;
    }
  }
  return t;
}

GpPredictor::GpPredictor(TrainingSet data, const KernelParams& params, double prior_mean_x,
                         double prior_mean_y)
    : data_(std::move(data)), params_(params), prior_mean_{prior_mean_x, prior_mean_y} {
  check_params(params_);
  if (data_.size() == 0) return;
  const Eigen::MatrixXd r =
      correlation_matrix(data_.positions, data_.positions, params_.w_x, params_.w_y);
  for (int axis = 0; axis < 2; ++axis) {
    const auto a = static_cast<std::size_t>(axis);
    const double s2 = params_.sigma_sq(axis);
    Eigen::MatrixXd c = s2 * r;
    c.diagonal().array() += params_.sigma_n_sq;
    factor_[a] = factorize_spd(c, s2, params_.sigma_n_sq == 0.0);
    weights_[a] = factor_[a]->llt.solve(
        (data_.velocity(axis).array() - prior_mean_[a]).matrix());
  }
}

AxisPosterior GpPredictor::posterior(int axis, const Positions& test) const {
  const auto a = static_cast<std::size_t>(axis);
  const double s2 = params_.sigma_sq(axis);
  AxisPosterior out;
  out.cov = s2 * correlation_matrix(test, test, params_.w_x, params_.w_y);
  out.mean = Eigen::VectorXd::Constant(test.rows(), prior_mean_[a]);
  if (data_.size() > 0) {
    const Eigen::MatrixXd ks = s2 * correlation_matrix(data_.positions, test, params_.w_x,
                                                       params_.w_y);  // n x m
    out.mean += ks.transpose() * weights_[a];
    const Eigen::MatrixXd v = factor_[a]->llt.matrixL().solve(ks);
    out.cov.noalias() -= v.transpose() * v;
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  }
  for (Eigen::Index i = 0; i < out.cov.rows(); ++i) out.cov(i, i) = clamp_variance(out.cov(i, i), s2);
  return out;
}

Posterior GpPredictor::posterior(const Positions& test) const {
  return Posterior{{posterior(0, test), posterior(1, test)}};
}

Eigen::Matrix<double, Eigen::Dynamic, 2> GpPredictor::mean(const Positions& test) const {
  Eigen::Matrix<double, Eigen::Dynamic, 2> m(test.rows(), 2);
  if (data_.size() == 0) {
    m.col(0).setConstant(prior_mean_[0]);
    m.col(1).setConstant(prior_mean_[1]);
    return m;
  }
  const Eigen::MatrixXd r = correlation_matrix(test, data_.positions, params_.w_x, params_.w_y);
  for (int axis = 0; axis < 2; ++axis) {
    const auto a = static_cast<std::size_t>(axis);
    m.col(axis) = (params_.sigma_sq(axis) * (r * weights_[a])).array() + prior_mean_[a];
  }
  return m;
}

Eigen::Matrix<double, Eigen::Dynamic, 4> GpPredictor::mean_and_variance(
    const Positions& test) const {
  Eigen::Matrix<double, Eigen::Dynamic, 4> out(test.rows(), 4);
  out.leftCols<2>() = mean(test);
  for (int axis = 0; axis < 2; ++axis) {
    const auto a = static_cast<std::size_t>(axis);
    const double s2 = params_.sigma_sq(axis);
    Eigen::VectorXd var = Eigen::VectorXd::Constant(test.rows(), s2);
    if (data_.size() > 0) {
      const Eigen::MatrixXd ks =
          s2 * correlation_matrix(data_.positions, test, params_.w_x, params_.w_y);
      const Eigen::MatrixXd v = factor_[a]->llt.matrixL().solve(ks);
      var -= v.colwise().squaredNorm().transpose();
    }
    for (Eigen::Index i = 0; i < var.size(); ++i) out(i, 2 + axis) = clamp_variance(var[i], s2);
  }
  return out;
}

Posterior gp_posterior(const Positions& train, const Eigen::VectorXd& train_vx,
                       const Eigen::VectorXd& train_vy, const Positions& test,
                       const KernelParams& params, double prior_mean_x, double prior_mean_y) {
  if (train.rows() == 0) throw DomainError("gp_posterior needs a non-empty training set");
  if (train_vx.size() != train.rows() || train_vy.size() != train.rows()) {
    throw DomainError("gp_posterior: training velocities and positions differ in length");
  }
  TrainingSet t;
  t.positions = train;
  t.vx = train_vx;
  t.vy = train_vy;
  return GpPredictor(std::move(t), params, prior_mean_x, prior_mean_y).posterior(test);
}

double gaussian_log_density(const Eigen::VectorXd& v, const Eigen::VectorXd& mean,
                            const SpdFactor& cov) {
  if (v.size() != mean.size() || cov.llt.rows() != v.size()) {
    throw DomainError("gaussian_log_density: dimension mismatch");
  }
  const Eigen::VectorXd z = cov.llt.matrixL().solve(v - mean);
  return -0.5 * (static_cast<double>(v.size()) * kLog2Pi + cov.log_det() + z.squaredNorm());
}

double gaussian_log_density(const Eigen::VectorXd& v, const Eigen::VectorXd& mean,
                            const Eigen::MatrixXd& cov) {
  if (v.size() != mean.size() || cov.rows() != v.size() || cov.cols() != v.size()) {
    throw DomainError("gaussian_log_density: dimension mismatch");
  }
  if (v.size() == 0) return 0.0;
  const double scale = std::max(cov.diagonal().mean(), std::numeric_limits<double>::min());
  return gaussian_log_density(v, mean, factorize_spd(cov, scale));
}

double gp_prior_log_density(const Positions& positions, const Eigen::VectorXd& v, double mean,
                            double sigma_sq, double w_x, double w_y, double sigma_n_sq) {
  if (positions.rows() != v.size()) throw DomainError("gp_prior_log_density: dimension mismatch");
  if (v.size() == 0) return 0.0;
  Eigen::MatrixXd c = sigma_sq * correlation_matrix(positions, positions, w_x, w_y);
  c.diagonal().array() += sigma_n_sq;
  const SpdFactor f = factorize_spd(c, sigma_sq, sigma_n_sq == 0.0);
  return gaussian_log_density(v, Eigen::VectorXd::Constant(v.size(), mean), f);
}

Positions GridSpec::points(const RegionOfInterest& roi) const {
  if (nx < 1 || ny < 1) throw DomainError("grid needs at least one point per axis");
  Positions p(static_cast<Eigen::Index>(nx) * ny, 2);
  const double dx = roi.width() / nx;
  const double dy = roi.height() / ny;
  Eigen::Index r = 0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      p(r, 0) = roi.x_min + (i + 0.5) * dx;
      p(r, 1) = roi.y_min + (j + 0.5) * dy;
      ++r;
    }
  }
  return p;
}

VectorField evaluate_field(const GpPredictor& predictor, const Positions& points) {
  const auto mv = predictor.mean_and_variance(points);
  VectorField f;
  f.points = points;
  f.mean_x = mv.col(0);
  f.mean_y = mv.col(1);
  f.var_x = mv.col(2);
  f.var_y = mv.col(3);
  return f;
}

VectorField mean_velocity_field(const MotionPattern& pattern, std::span<const Frame> frames,
                                const RegionOfInterest& roi, const GridSpec& grid,
                                std::size_t training_cap, std::uint64_t seed) {
  if (pattern.member_frames.empty()) {
    throw DomainError("pattern " + std::to_string(to_int(pattern.id)) + " has no member frames");
  }
  const auto which = select_training_frames(frames, pattern.member_frames, training_cap, seed);
  GpPredictor predictor(stack_frames(frames, which), pattern.params, pattern.prior_mean_x,
                        pattern.prior_mean_y);
  return evaluate_field(predictor, grid.points(roi));
}

}  // namespace dpgp
