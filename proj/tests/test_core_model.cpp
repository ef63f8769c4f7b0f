// Apache License, Version 2.0, refer to LICENSE.txt

#include <doctest.h>

#include <algorithm>

#include "dpgp/core_model.hpp"
#include "dpgp/errors.hpp"

using namespace dpgp;

namespace {

bool mentions(const std::vector<std::string>& msgs, const std::string& needle) {
  return std::any_of(msgs.begin(), msgs.end(),
                     [&](const std::string& m) { return m.find(needle) != std::string::npos; });
}

}  // namespace

TEST_SUITE("core_model") {
  TEST_CASE("region contains its closed boundary") {
    RegionOfInterest roi{0, 10, -5, 5};
    CHECK(roi.contains(0, -5));
    CHECK(roi.contains(10, 5));
    CHECK_FALSE(roi.contains(10.0001, 0));
    CHECK(roi.area() == doctest::Approx(100));
    CHECK_NOTHROW(roi.validate());
    CHECK_THROWS_AS((RegionOfInterest{1, 1, 0, 1}.validate()), DomainError);
    CHECK_THROWS_AS((RegionOfInterest{0, 1, 0, 1, 0, 3}.validate()), DomainError);
  }

  TEST_CASE("stacked view round-trips") {
    Frame f{3, 1.5, {{1, 2, 3, 4}, {5, 6, 7, 8}}};
    const StackedFrame s = f.stacked();
    CHECK(s.vx[1] == 7);
    CHECK(s.y[0] == 2);
    CHECK(Frame::from_stacked(3, 1.5, s) == f);
  }

  TEST_CASE("frame validation") {
    RegionOfInterest roi{0, 10, 0, 10};
    CHECK_THROWS_AS(validate_frame(Frame{}, roi), DomainError);
    CHECK_THROWS_AS(validate_frame(Frame{0, 0, {{11, 1, 0, 0}}}, roi), DomainError);
    CHECK_NOTHROW(validate_frame(Frame{0, 0, {{10, 0, 0, 0}}}, roi));
  }

  TEST_CASE("kernel params validity") {
    KernelParams p;
    CHECK(p.valid());
    p.sigma_n_sq = 0;
    CHECK(p.valid());
    p.w_y = 0;
    CHECK_FALSE(p.valid());
  }

  TEST_CASE("prior validation") {
    PriorConfig p;
    CHECK_NOTHROW(p.validate());
    p.n_gibbs = 0;
    CHECK_NOTHROW(p.validate());
    p.a = -1;
    CHECK_THROWS_AS(p.validate(), DomainError);
    p = PriorConfig{};
    p.n_mc = 0;
    CHECK_THROWS_AS(p.validate(), DomainError);
  }

  TEST_CASE("data moments are pooled over vehicles") {
    std::vector<Frame> frames{{0, 0, {{0, 0, 1, 10}, {0, 0, 3, 10}}}, {1, 0, {{0, 0, 5, 10}}}};
    PriorConfig p;
    fill_data_moments(p, frames);
    CHECK(p.mu0_x == doctest::Approx(3));
    CHECK(p.sigma0_sq_x == doctest::Approx(8.0 / 3.0));
    CHECK(p.mu0_y == doctest::Approx(10));
    CHECK(p.sigma0_sq_y == doctest::Approx(1e-8));
  }

  TEST_CASE("single pattern state is consistent") {
    const MixtureState s = make_single_pattern_state(5, KernelParams{}, 1, 2, 0.5);
    CHECK(s.K() == 1);
    CHECK(s.N() == 5);
    CHECK(to_int(s.patterns[0].id) == 1);
    CHECK(s.next_id == 2);
    CHECK(validate_state(s).empty());
    CHECK(s.find(PatternId{1})->count() == 5);
    CHECK(s.find(PatternId{2}) == nullptr);
  }

  TEST_CASE("state validation reports each violation") {
    MixtureState s = make_single_pattern_state(3, KernelParams{}, 0, 0, 1);
    s.assignments.push_back(PatternId{1});
    CHECK(mentions(validate_state(s), "count mismatch"));

    s = make_single_pattern_state(3, KernelParams{}, 0, 0, 1);
    s.assignments[2] = PatternId{7};
    CHECK(mentions(validate_state(s), "dangling assignment"));

    s = make_single_pattern_state(3, KernelParams{}, 0, 0, 1);
    MotionPattern empty;
    empty.id = PatternId{1};
    s.patterns.push_back(empty);
    CHECK(mentions(validate_state(s), "not strictly ascending"));

    s = make_single_pattern_state(3, KernelParams{}, 0, 0, 1);
    s.alpha = 0;
    CHECK(mentions(validate_state(s), "alpha"));

    s = make_single_pattern_state(3, KernelParams{}, 0, 0, 1);
    s.next_id = 1;
    CHECK(mentions(validate_state(s), "next_id"));
  }

  TEST_CASE("fingerprint tracks any change") {
    MixtureState s = make_single_pattern_state(4, KernelParams{}, 0, 0, 1);
    const auto h = state_fingerprint(s);
    CHECK(state_fingerprint(s) == h);
    s.patterns[0].params.w_x += 1e-12;
    CHECK(state_fingerprint(s) != h);
  }
}
