// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgp/pattern_cache.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Cholesky>

#include "dpgp/errors.hpp"

namespace dpgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

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

}  // namespace

void cholesky_rank1_update(Eigen::Ref<Eigen::MatrixXd> lower, Eigen::Ref<Eigen::VectorXd> x) {
  const Eigen::Index n = lower.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double lkk = lower(k, k);
    const double xk = x[k];
    const double r = std::hypot(lkk, xk);
    const double c = r / lkk;
    const double s = xk / lkk;
    lower(k, k) = r;
    const Eigen::Index m = n - k - 1;
    if (m > 0) {
      auto col = lower.col(k).tail(m);
      auto xt = x.tail(m);
      col = (col + s * xt) / c;
      xt = c * xt - s * col;
    }
  }
}

PatternCache::PatternCache(std::span<const Frame> frames, const KernelParams& params,
                           double mean_x, double mean_y,
                           std::span<const std::size_t> training_frames)
    : frames_(frames), params_(params), mean_{mean_x, mean_y} {
  if (!params_.valid()) throw DomainError("pattern cache needs positive kernel parameters");
  rebuild(training_frames);
}

std::vector<std::size_t> PatternCache::training_frames() const {
  std::vector<std::size_t> out;
  out.reserve(blocks_.size());
  for (const auto& b : blocks_) out.push_back(b.frame);
  return out;
}

bool PatternCache::contains(std::size_t frame_index) const {
  return std::any_of(blocks_.begin(), blocks_.end(),
                     [&](const Block& b) { return b.frame == frame_index; });
}

void PatternCache::reserve(Eigen::Index n) {
  const Eigen::Index cap = factor_[0].rows();
  if (n <= cap) return;
  const Eigen::Index next = std::max<Eigen::Index>({n, 2 * cap, 64});
  Positions pos(next, 2);
  pos.topRows(n_) = positions_.topRows(n_);
  positions_.swap(pos);
  for (std::size_t a = 0; a < 2; ++a) {
    Eigen::VectorXd v(next);
    v.head(n_) = velocity_[a].head(n_);
    velocity_[a].swap(v);
    Eigen::MatrixXd f(next, next);
    f.topLeftCorner(n_, n_) = factor_[a].topLeftCorner(n_, n_);
    factor_[a].swap(f);
  }
}

void PatternCache::rebuild(std::span<const std::size_t> order) {
  blocks_.clear();
  n_ = 0;
  Eigen::Index total = 0;
  for (auto i : order) total += static_cast<Eigen::Index>(frames_[i].size());
  reserve(total);
  for (auto i : order) {
    const auto& f = frames_[i];
    const auto l = static_cast<Eigen::Index>(f.size());
    positions_.middleRows(n_, l) = frame_positions(f);
    for (int a = 0; a < 2; ++a) {
      velocity_[static_cast<std::size_t>(a)].segment(n_, l) = frame_velocity(f, a);
    }
    blocks_.push_back({i, n_, l});
    n_ += l;
  }
  if (n_ > 0) {
    const Eigen::MatrixXd r = correlation_matrix(positions_.topRows(n_), positions_.topRows(n_),
                                                 params_.w_x, params_.w_y);
    for (int a = 0; a < 2; ++a) {
      const auto ai = static_cast<std::size_t>(a);
      const double s2 = params_.sigma_sq(a);
      Eigen::MatrixXd c = s2 * r;
      c.diagonal().array() += params_.sigma_n_sq;
      const SpdFactor f = factorize_spd(c, s2, params_.sigma_n_sq == 0.0);
      jitter_[ai] = f.jitter;
      factor_[ai].topLeftCorner(n_, n_) = f.llt.matrixL();
    }
  }
  refresh_beta();
}

void PatternCache::refresh_beta() {
  for (int a = 0; a < 2; ++a) {
    const auto ai = static_cast<std::size_t>(a);
    Eigen::VectorXd d = velocity_[ai].head(n_).array() - mean_[ai];
    if (n_ > 0) {
      factor_[ai].topLeftCorner(n_, n_).triangularView<Eigen::Lower>().solveInPlace(d);
    }
    beta_[ai] = std::move(d);
  }
}

bool PatternCache::factor_healthy() const {
  for (const auto& f : factor_) {
    const auto d = f.topLeftCorner(n_, n_).diagonal();
    if (!d.allFinite() || !(d.array() > 0).all()) return false;
  }
  return true;
}

bool PatternCache::append(std::size_t frame_index) {
  const auto& f = frames_[frame_index];
  const auto l = static_cast<Eigen::Index>(f.size());
  const Positions pb = frame_positions(f);
  const Eigen::MatrixXd rbb = correlation_matrix(pb, pb, params_.w_x, params_.w_y);
  Eigen::MatrixXd rtb;
  if (n_ > 0) rtb = correlation_matrix(positions_.topRows(n_), pb, params_.w_x, params_.w_y);

  std::array<Eigen::MatrixXd, 2> w;
  std::array<Eigen::MatrixXd, 2> l22;
  for (int a = 0; a < 2; ++a) {
    const auto ai = static_cast<std::size_t>(a);
    const double s2 = params_.sigma_sq(a);
    Eigen::MatrixXd s = s2 * rbb;
    s.diagonal().array() += params_.sigma_n_sq + jitter_[ai];
    if (n_ > 0) {
      w[ai] = s2 * rtb;
      factor_[ai].topLeftCorner(n_, n_).triangularView<Eigen::Lower>().solveInPlace(w[ai]);
      s.noalias() -= w[ai].transpose() * w[ai];
    }
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) return false;
    l22[ai] = llt.matrixL();
    if (!l22[ai].diagonal().allFinite() || !(l22[ai].diagonal().array() > 0).all()) return false;
  }

  reserve(n_ + l);
  positions_.middleRows(n_, l) = pb;
  for (int a = 0; a < 2; ++a) {
    const auto ai = static_cast<std::size_t>(a);
    velocity_[ai].segment(n_, l) = frame_velocity(f, a);
    if (n_ > 0) factor_[ai].block(n_, 0, l, n_) = w[ai].transpose();
    factor_[ai].block(n_, n_, l, l) = l22[ai];
  }
  blocks_.push_back({frame_index, n_, l});
  n_ += l;
  return true;
}

void PatternCache::remove(std::size_t block) {
  const Block b = blocks_[block];
  const Eigen::Index p = b.offset;
  const Eigen::Index l = b.length;
  const Eigen::Index m = n_ - p - l;
  for (auto& f : factor_) {
    if (m > 0) {
      auto l33 = f.block(p + l, p + l, m, m);
      for (Eigen::Index c = 0; c < l; ++c) {
        Eigen::VectorXd x = f.block(p + l, p + c, m, 1);
        cholesky_rank1_update(l33, x);
      }
      if (p > 0) f.block(p, 0, m, p) = f.block(p + l, 0, m, p).eval();
      f.block(p, p, m, m) = f.block(p + l, p + l, m, m).eval();
    }
  }
  if (m > 0) {
    positions_.middleRows(p, m) = positions_.middleRows(p + l, m).eval();
    for (auto& v : velocity_) v.segment(p, m) = v.segment(p + l, m).eval();
  }
  blocks_.erase(blocks_.begin() + static_cast<std::ptrdiff_t>(block));
  for (std::size_t k = block; k < blocks_.size(); ++k) blocks_[k].offset -= l;
  n_ -= l;
}

void PatternCache::set_training_frames(std::span<const std::size_t> desired) {
  const std::set<std::size_t> want(desired.begin(), desired.end());
  std::vector<std::size_t> to_add;
  for (auto i : want) {
    if (!contains(i)) to_add.push_back(i);
  }
  Eigen::Index changed = 0;
  for (const auto& b : blocks_) {
    if (!want.contains(b.frame)) changed += b.length;
  }
  for (auto i : to_add) changed += static_cast<Eigen::Index>(frames_[i].size());
  if (changed == 0) return;

  const std::vector<std::size_t> sorted(want.begin(), want.end());
  if (2 * changed > n_ || jitter_[0] > 0 || jitter_[1] > 0) {
    rebuild(sorted);
    return;
  }
  for (std::size_t k = blocks_.size(); k-- > 0;) {
    if (!want.contains(blocks_[k].frame)) remove(k);
  }
  bool ok = factor_healthy();
  for (auto i : to_add) {
    if (!ok) break;
    ok = append(i);
  }
  if (!ok) {
    rebuild(sorted);
    return;
  }
  refresh_beta();
}

double PatternCache::log_predictive(std::size_t frame_index) const {
  const Frame& f = frames_[frame_index];
  const auto l = static_cast<Eigen::Index>(f.size());
  const Positions test = frame_positions(f);

  auto it = std::find_if(blocks_.begin(), blocks_.end(),
                         [&](const Block& b) { return b.frame == frame_index; });
  if (n_ == 0 || (it != blocks_.end() && it->length == n_)) {
    double lp = 0.0;
    for (int a = 0; a < 2; ++a) {
      lp += gp_prior_log_density(test, frame_velocity(f, a), mean_[static_cast<std::size_t>(a)],
                                 params_.sigma_sq(a), params_.w_x, params_.w_y,
                                 params_.sigma_n_sq);
    }
    return lp;
  }

  double lp = 0.0;
  if (it != blocks_.end()) {
    // Leave-one-out through the precision block: with P = C^-1 and
    // delta = v - mu, y_B | rest ~ N(y_B - P_BB^-1 (P delta)_B, P_BB^-1).
    const Eigen::Index p = it->offset;
    const Eigen::Index tail = n_ - p;
    for (int a = 0; a < 2; ++a) {
      const auto ai = static_cast<std::size_t>(a);
      Eigen::MatrixXd z = Eigen::MatrixXd::Zero(tail, l);
      z.topRows(l).setIdentity();
      factor_[ai].block(p, p, tail, tail).triangularView<Eigen::Lower>().solveInPlace(z);
      const Eigen::MatrixXd pbb = z.transpose() * z;
      const Eigen::VectorXd g = z.transpose() * beta_[ai].tail(tail);
      const SpdFactor pf = factorize_spd(pbb, pbb.diagonal().mean());
      const Eigen::VectorXd u = pf.llt.matrixL().solve(g);
      lp += -0.5 * (static_cast<double>(l) * kLog2Pi - pf.log_det() + u.squaredNorm());
    }
    return lp;
  }

  const Eigen::MatrixXd rts = correlation_matrix(positions_.topRows(n_), test, params_.w_x,
                                                 params_.w_y);
  const Eigen::MatrixXd rss = correlation_matrix(test, test, params_.w_x, params_.w_y);
  for (int a = 0; a < 2; ++a) {
    const auto ai = static_cast<std::size_t>(a);
    const double s2 = params_.sigma_sq(a);
    Eigen::MatrixXd w = s2 * rts;
    factor_[ai].topLeftCorner(n_, n_).triangularView<Eigen::Lower>().solveInPlace(w);
    const Eigen::VectorXd mean = (w.transpose() * beta_[ai]).array() + mean_[ai];
    Eigen::MatrixXd cov = s2 * rss;
    cov.noalias() -= w.transpose() * w;
    cov.diagonal().array() += params_.sigma_n_sq + jitter_[ai];
    lp += gaussian_log_density(frame_velocity(f, a), mean, cov);
  }
  return lp;
}

double PatternCache::log_marginal() const {
  if (n_ == 0) return 0.0;
  double lp = 0.0;
  for (std::size_t a = 0; a < 2; ++a) {
    const double log_det =
        2.0 * factor_[a].topLeftCorner(n_, n_).diagonal().array().log().sum();
    lp += -0.5 * (static_cast<double>(n_) * kLog2Pi + log_det + beta_[a].squaredNorm());
  }
  return lp;
}

}  // namespace dpgp
