// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgp/empirical_dist.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dpgp/errors.hpp"

namespace dpgp {

namespace {

int axis_bin(double v, double lo, double hi, int n) {
  const double t = (v - lo) * n / (hi - lo);
  const int idx = static_cast<int>(std::ceil(t)) - 1;
  return std::clamp(idx, 0, n - 1);
}

}  // namespace

CountDistribution::CountDistribution(std::map<std::size_t, double> probabilities)
    : probs_(std::move(probabilities)) {
  double acc = 0.0;
  for (const auto& [m, p] : probs_) {
    if (!(p >= 0)) throw DomainError("count probabilities must be non-negative");
    acc += p;
    cdf_.emplace_back(acc, m);
  }
  if (probs_.empty() || std::abs(acc - 1.0) > 1e-9) {
    throw DomainError("count probabilities must sum to one");
  }
}

double CountDistribution::probability(std::size_t count) const {
  auto it = probs_.find(count);
  return it == probs_.end() ? 0.0 : it->second;
}

double CountDistribution::log_prob(std::size_t count) const {
  const double p = probability(count);
  return p > 0 ? std::log(p) : kLogZero;
}

std::size_t CountDistribution::sample(Rng& rng) const {
  std::uniform_real_distribution<double> u(0.0, cdf_.back().first);
  const double r = u(rng);
  for (const auto& [c, m] : cdf_) {
    if (r < c) return m;
  }
  return cdf_.back().second;
}

PositionDistribution::PositionDistribution(const RegionOfInterest& roi,
                                           std::vector<double> weights)
    : roi_(roi), weights_(std::move(weights)) {
  roi_.validate();
  if (weights_.size() != static_cast<std::size_t>(roi_.n_bins())) {
    throw DomainError("position weights do not match the bin grid");
  }
  double acc = 0.0;
  cdf_.reserve(weights_.size());
  for (double w : weights_) {
    if (!(w >= 0)) throw DomainError("position weights must be non-negative");
    acc += w;
    cdf_.push_back(acc);
  }
  if (std::abs(acc - 1.0) > 1e-9) throw DomainError("position weights must sum to one");
}

int PositionDistribution::bin_of(double x, double y) const {
  if (!roi_.contains(x, y)) {
    std::ostringstream os;
    os << "point (" << x << ", " << y << ") lies outside the region of interest";
    throw DomainError(os.str());
  }
  const int ix = axis_bin(x, roi_.x_min, roi_.x_max, roi_.n_bins_x);
  const int iy = axis_bin(y, roi_.y_min, roi_.y_max, roi_.n_bins_y);
  return iy * roi_.n_bins_x + ix;
}

BinRect PositionDistribution::bin_rect(int bin) const {
  const int ix = bin % roi_.n_bins_x;
  const int iy = bin / roi_.n_bins_x;
  const double dx = roi_.width() / roi_.n_bins_x;
  const double dy = roi_.height() / roi_.n_bins_y;
  BinRect r;
  r.x_lo = roi_.x_min + ix * dx;
  r.x_hi = ix + 1 == roi_.n_bins_x ? roi_.x_max : roi_.x_min + (ix + 1) * dx;
  r.y_lo = roi_.y_min + iy * dy;
  r.y_hi = iy + 1 == roi_.n_bins_y ? roi_.y_max : roi_.y_min + (iy + 1) * dy;
  return r;
}

double PositionDistribution::log_prob(double x, double y) const {
  const int bin = bin_of(x, y);
  const double w = weights_[static_cast<std::size_t>(bin)];
  return w > 0 ? std::log(w / bin_rect(bin).area()) : kLogZero;
}

std::pair<double, double> PositionDistribution::sample(Rng& rng) const {
  std::uniform_real_distribution<double> u(0.0, cdf_.back());
  const double r = u(rng);
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), r);
  auto bin = static_cast<int>(std::min<std::ptrdiff_t>(it - cdf_.begin(),
                                                       static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
  while (weights_[static_cast<std::size_t>(bin)] <= 0) --bin;  // r landed on a flat cdf step
  const BinRect rect = bin_rect(bin);
  std::uniform_real_distribution<double> ux(rect.x_lo, rect.x_hi);
  std::uniform_real_distribution<double> uy(rect.y_lo, rect.y_hi);
  for (;;) {
    const double x = ux(rng);
    const double y = uy(rng);
    // The lower edge of a bin belongs to its neighbour.
    if (bin_of(x, y) == bin) return {x, y};
  }
}

CountDistribution fit_count_dist(std::span<const Frame> frames) {
  if (frames.empty()) throw DomainError("cannot fit a count distribution to an empty dataset");
  std::map<std::size_t, std::size_t> counts;
  for (const auto& f : frames) ++counts[f.size()];
  std::map<std::size_t, double> probs;
  const auto n = static_cast<double>(frames.size());
  for (const auto& [m, c] : counts) probs[m] = static_cast<double>(c) / n;
  return CountDistribution(std::move(probs));
}

PositionDistribution fit_position_dist(std::span<const Frame> frames,
                                       const RegionOfInterest& roi) {
  if (frames.empty()) throw DomainError("cannot fit a position distribution to an empty dataset");
  roi.validate();
  PositionDistribution probe(roi, [&] {
    std::vector<double> w(static_cast<std::size_t>(roi.n_bins()), 0.0);
    w[0] = 1.0;
    return w;
  }());
  std::vector<std::size_t> counts(static_cast<std::size_t>(roi.n_bins()), 0);
  std::size_t total = 0;
  for (const auto& f : frames) {
    for (const auto& v : f.vehicles) {
      ++counts[static_cast<std::size_t>(probe.bin_of(v.x, v.y))];
      ++total;
    }
  }
  if (total == 0) throw DomainError("dataset contains no vehicle observations");
  std::vector<double> w(counts.size());
  for (std::size_t b = 0; b < counts.size(); ++b) {
    w[b] = static_cast<double>(counts[b]) / static_cast<double>(total);
  }
  return PositionDistribution(roi, std::move(w));
}

double EmpiricalDists::frame_log_prob(const Frame& frame) const {
  double lp = count.log_prob(frame.size());
  for (const auto& v : frame.vehicles) lp += position.log_prob(v.x, v.y);
  return lp;
}

EmpiricalDists fit_empirical_dists(std::span<const Frame> frames, const RegionOfInterest& roi) {
  return {fit_count_dist(frames), fit_position_dist(frames, roi)};
}

}  // namespace dpgp
