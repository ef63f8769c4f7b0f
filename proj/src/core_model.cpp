// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgp/core_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <sstream>

#include "dpgp/errors.hpp"

namespace dpgp {

void RegionOfInterest::validate() const {
  if (!(x_min < x_max) || !(y_min < y_max)) {
    throw DomainError("region of interest must satisfy x_min < x_max and y_min < y_max");
  }
  if (n_bins_x < 1 || n_bins_y < 1) {
    throw DomainError("region of interest needs at least one bin per axis");
  }
}

StackedFrame Frame::stacked() const {
  const auto n = static_cast<Eigen::Index>(vehicles.size());
  StackedFrame s{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n),
                 Eigen::VectorXd(n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& v = vehicles[static_cast<std::size_t>(j)];
    s.vx[j] = v.vx;
    s.vy[j] = v.vy;
    s.x[j] = v.x;
    s.y[j] = v.y;
  }
  return s;
}

Frame Frame::from_stacked(std::size_t frame_id, double timestamp, const StackedFrame& s) {
  const auto n = s.x.size();
  if (s.y.size() != n || s.vx.size() != n || s.vy.size() != n) {
    throw DomainError("stacked frame vectors differ in length");
  }
  Frame f{frame_id, timestamp, {}};
  f.vehicles.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) f.vehicles.push_back({s.x[j], s.y[j], s.vx[j], s.vy[j]});
  return f;
}

void validate_frame(const Frame& frame, const RegionOfInterest& roi) {
  if (frame.vehicles.empty()) {
    throw DomainError("frame " + std::to_string(frame.frame_id) + " has no vehicles");
  }
  for (const auto& v : frame.vehicles) {
    if (!roi.contains(v.x, v.y)) {
      std::ostringstream os;
      os << "frame " << frame.frame_id << " has a vehicle outside the region of interest at ("
         << v.x << ", " << v.y << ")";
      throw DomainError(os.str());
    }
  }
}

const MotionPattern* MixtureState::find(PatternId id) const {
  auto it = std::lower_bound(patterns.begin(), patterns.end(), id,
                             [](const MotionPattern& p, PatternId v) { return p.id < v; });
  return (it != patterns.end() && it->id == id) ? &*it : nullptr;
}

MotionPattern* MixtureState::find(PatternId id) {
  return const_cast<MotionPattern*>(std::as_const(*this).find(id));
}

void PriorConfig::validate() const {
  if (!(a > 0) || !(b > 0)) throw DomainError("gamma prior needs a > 0 and b > 0");
  if (!(sigma0_sq_x > 0) || !(sigma0_sq_y > 0)) {
    throw DomainError("new-pattern prior variances must be positive");
  }
  if (!(sigma_n_sq >= 0)) throw DomainError("noise variance must be non-negative");
  if (n_mc < 1) throw DomainError("n_mc must be at least 1");
  if (n_gibbs < 0) throw DomainError("n_gibbs must be non-negative");
}

void fill_data_moments(PriorConfig& prior, const std::vector<Frame>& frames,
                       double min_variance) {
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (const auto& f : frames) {
    for (const auto& v : f.vehicles) {
      sx += v.vx;
      sy += v.vy;
      ++n;
    }
  }
  if (n == 0) throw DomainError("cannot compute velocity moments of an empty dataset");
  const double mx = sx / static_cast<double>(n);
  const double my = sy / static_cast<double>(n);
  double qx = 0.0, qy = 0.0;
  for (const auto& f : frames) {
    for (const auto& v : f.vehicles) {
      qx += (v.vx - mx) * (v.vx - mx);
      qy += (v.vy - my) * (v.vy - my);
    }
  }
  prior.mu0_x = mx;
  prior.mu0_y = my;
  prior.sigma0_sq_x = std::max(qx / static_cast<double>(n), min_variance);
  prior.sigma0_sq_y = std::max(qy / static_cast<double>(n), min_variance);
}

MixtureState make_single_pattern_state(std::size_t n_frames, const KernelParams& params,
                                       double mean_x, double mean_y, double alpha) {
  MixtureState s;
  s.alpha = alpha;
  s.assignments.assign(n_frames, PatternId{1});
  if (n_frames > 0) {
    MotionPattern p;
    p.id = PatternId{1};
    for (std::size_t i = 0; i < n_frames; ++i) p.member_frames.insert(p.member_frames.end(), i);
    p.params = params;
    p.prior_mean_x = mean_x;
    p.prior_mean_y = mean_y;
    s.patterns.push_back(std::move(p));
  }
  s.next_id = 2;
  return s;
}

std::vector<std::string> validate_state(const MixtureState& state) {
  std::vector<std::string> report;
  const std::size_t n = state.N();

  std::size_t total = 0;
  std::map<std::int64_t, std::size_t> seen;
  for (std::size_t k = 0; k < state.patterns.size(); ++k) {
    const auto& p = state.patterns[k];
    const auto id = to_int(p.id);
    if (k > 0 && !(state.patterns[k - 1].id < p.id)) {
      report.push_back("pattern ids not strictly ascending at pattern " + std::to_string(id));
    }
    if (id >= state.next_id) {
      report.push_back("pattern " + std::to_string(id) + " not below next_id");
    }
    if (p.member_frames.empty()) report.push_back("pattern " + std::to_string(id) + " is empty");
    if (!p.params.valid()) {
      report.push_back("pattern " + std::to_string(id) + " has non-positive kernel parameters");
    }
    for (auto i : p.member_frames) {
      if (i >= n) {
        report.push_back("pattern " + std::to_string(id) + " lists frame " + std::to_string(i) +
                         " beyond N");
      } else if (state.assignments[i] != p.id) {
        report.push_back("frame " + std::to_string(i) + " listed in pattern " +
                         std::to_string(id) + " but assigned to " +
                         std::to_string(to_int(state.assignments[i])));
      }
    }
    total += p.member_frames.size();
    seen[id] = p.member_frames.size();
  }
  if (total != n) {
    report.push_back("count mismatch: sum of n_k is " + std::to_string(total) + " but N is " +
                     std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = to_int(state.assignments[i]);
    if (!seen.contains(id)) {
      report.push_back("dangling assignment: frame " + std::to_string(i) +
                       " references missing pattern " + std::to_string(id));
    }
  }
  if (state.K() > n) report.push_back("K exceeds N");
  if (n > 0 && state.K() == 0) report.push_back("no live patterns");
  if (!(state.alpha > 0) || !std::isfinite(state.alpha)) {
    report.push_back("alpha must be positive and finite");
  }
  return report;
}

namespace {

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ull;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

}  // namespace

std::uint64_t state_fingerprint(const MixtureState& state) {
  Fnv1a h;
  h.u64(state.assignments.size());
  for (auto z : state.assignments) h.u64(static_cast<std::uint64_t>(to_int(z)));
  h.u64(state.patterns.size());
  for (const auto& p : state.patterns) {
    h.u64(static_cast<std::uint64_t>(to_int(p.id)));
    h.u64(p.member_frames.size());
    for (auto i : p.member_frames) h.u64(i);
    h.f64(p.params.sigma_sq_x);
    h.f64(p.params.sigma_sq_y);
    h.f64(p.params.w_x);
    h.f64(p.params.w_y);
    h.f64(p.params.sigma_n_sq);
    h.f64(p.prior_mean_x);
    h.f64(p.prior_mean_y);
  }
  h.f64(state.alpha);
  h.u64(static_cast<std::uint64_t>(state.next_id));
  return h.h;
}

}  // namespace dpgp
