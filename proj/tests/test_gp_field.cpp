// Apache License, Version 2.0, refer to LICENSE.txt

#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "dpgp/errors.hpp"
#include "dpgp/gp_field.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace dpgp;

namespace {

std::vector<oracle::Point> to_points(const Positions& p) {
  std::vector<oracle::Point> out;
  for (Eigen::Index i = 0; i < p.rows(); ++i) out.push_back({p(i, 0), p(i, 1)});
  return out;
}

oracle::Vec flatten(const Eigen::MatrixXd& m) {
  oracle::Vec out;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return out;
}

oracle::Vec flatten(const oracle::Mat& m) {
  oracle::Vec out;
  for (const auto& row : m) out.insert(out.end(), row.begin(), row.end());
  return out;
}

}  // namespace

TEST_SUITE("gp_field") {
  TEST_CASE("kernel is symmetric and bounded by the signal variance") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-50, 50);
    for (int t = 0; t < 500; ++t) {
      const Eigen::Vector2d p(u(rng), u(rng)), q(u(rng), u(rng));
      const double k1 = sq_exp_kernel(p, q, 2.5, 3.0, 7.0);
      const double k2 = sq_exp_kernel(q, p, 2.5, 3.0, 7.0);
      CHECK(k1 == k2);
      CHECK(k1 <= 2.5);
      CHECK(k1 >= 0);
    }
    CHECK(sq_exp_kernel({1, 1}, {1, 1}, 2.5, 3, 7) == 2.5);
    CHECK(sq_exp_kernel({0, 0}, {3, 0}, 1, 3, 7) == doctest::Approx(std::exp(-0.5)));
  }

  TEST_CASE("noisy kernel matrices are numerically positive semidefinite") {
    std::mt19937_64 rng(11);
    for (int n : {1, 5, 50, 200}) {
      const Positions p = testutil::random_positions(rng, n, 0, 20);
      const Eigen::MatrixXd k = kernel_matrix(p, p, 4.0, 2.0, 3.0, 1e-6);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
      CHECK(es.eigenvalues().minCoeff() >= -1e-9);
    }
  }

  TEST_CASE("kernel matrix argument checks") {
    std::mt19937_64 rng(1);
    const Positions a = testutil::random_positions(rng, 3, 0, 1);
    const Positions b = testutil::random_positions(rng, 3, 0, 1);
    CHECK_THROWS_AS(kernel_matrix(a, b, 1, 1, 1, 0.1), DomainError);
    CHECK_THROWS_AS(kernel_matrix(Positions(0, 2), b, 1, 1, 1), DomainError);
    CHECK(kernel_matrix(a, b, 1, 1, 1).rows() == 3);
  }

  TEST_CASE("factorization escalates jitter and reports failure") {
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(4, 4);
    const SpdFactor f = factorize_spd(ones, 1.0);
    CHECK(f.jitter > 0);
    CHECK(f.jitter <= 1e-6);

    const SpdFactor g = factorize_spd(Eigen::MatrixXd::Identity(3, 3), 1.0);
    CHECK(g.jitter == 0);
    CHECK(g.log_det() == doctest::Approx(0));

    Eigen::MatrixXd bad = -Eigen::MatrixXd::Identity(2, 2);
    try {
      factorize_spd(bad, 1.0);
      FAIL("expected a conditioning error");
    } catch (const ConditioningError& e) {
      CHECK(e.jitter_levels().size() == 6);
      CHECK(e.jitter_levels().front() == 0);
      CHECK(e.jitter_levels().back() == doctest::Approx(1e-6));
    }
  }

  TEST_CASE("posterior matches dense joint conditioning") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.5, 3.0);
    std::normal_distribution<double> n(0, 2);
    for (int inst = 0; inst < 20; ++inst) {
      const int nt = 1 + inst * 2;
      const Positions train = testutil::random_positions(rng, nt, 0, 10);
      const Positions test = testutil::random_positions(rng, 7, 0, 10);
      Eigen::VectorXd vx(nt), vy(nt);
      for (int i = 0; i < nt; ++i) {
        vx[i] = n(rng);
        vy[i] = n(rng);
      }
      KernelParams p{u(rng), u(rng), u(rng), u(rng), 0.1 * u(rng)};
      const Posterior post = gp_posterior(train, vx, vy, test, p, 0.3, -0.2);
      for (int axis = 0; axis < 2; ++axis) {
        const Eigen::VectorXd& v = axis == 0 ? vx : vy;
        const auto ref = oracle::dense_condition(
            to_points(train), std::vector<double>(v.data(), v.data() + v.size()),
            to_points(test), p.sigma_sq(axis), p.w_x, p.w_y, p.sigma_n_sq, axis == 0 ? 0.3 : -0.2);
        const auto& ax = post.axis[static_cast<std::size_t>(axis)];
        CHECK(oracle::relative_error(flatten(ax.mean), ref.mean) < 1e-8);
        CHECK(oracle::relative_error(flatten(ax.cov), flatten(ref.cov)) < 1e-8);
      }
    }
  }

  TEST_CASE("posterior variance never exceeds the prior variance") {
    std::mt19937_64 rng(5);
    const Positions train = testutil::random_positions(rng, 40, 0, 10);
    const Positions test = testutil::random_positions(rng, 100, -5, 15);
    Eigen::VectorXd v = Eigen::VectorXd::Random(40);
    KernelParams p{2.0, 0.5, 1.5, 2.5, 0.01};
    GpPredictor pred(TrainingSet{train, v, v, {}}, p, 0, 0);
    const auto mv = pred.mean_and_variance(test);
    CHECK(mv.col(2).maxCoeff() <= 2.0 + 1e-9);
    CHECK(mv.col(3).maxCoeff() <= 0.5 + 1e-9);
    CHECK(mv.col(2).minCoeff() >= 0);
  }

  TEST_CASE("uniform training data is reproduced") {
    Positions train(4, 2);
    train << 10, 10, 20, 10, 10, 20, 20, 20;
    Eigen::VectorXd vx = Eigen::VectorXd::Constant(4, 10.0);
    Eigen::VectorXd vy = Eigen::VectorXd::Zero(4);
    KernelParams p{1.0, 1.0, 5.0, 5.0, 0.0};
    GpPredictor pred(TrainingSet{train, vx, vy, {}}, p, 10.0, 0.0);
    const auto m = pred.mean(train);
    for (Eigen::Index i = 0; i < 4; ++i) {
      CHECK(m(i, 0) == doctest::Approx(10.0).epsilon(1e-9));
      CHECK(std::abs(m(i, 1)) < 1e-9);
    }
    const Positions grid = GridSpec{5, 5}.points({0, 30, 0, 30});
    const auto g = pred.mean(grid);
    for (Eigen::Index i = 0; i < g.rows(); ++i) CHECK(g(i, 0) == doctest::Approx(10.0));
  }

  TEST_CASE("far from the data the prior is recovered") {
    Positions train(1, 2);
    train << 0, 0;
    Eigen::VectorXd v = Eigen::VectorXd::Constant(1, 5.0);
    KernelParams p{3.0, 2.0, 1.0, 1.0, 1.0};
    GpPredictor pred(TrainingSet{train, v, v, {}}, p, -1.0, 2.0);
    Positions far(1, 2);
    far << 1000, 1000;
    const auto mv = pred.mean_and_variance(far);
    CHECK(mv(0, 0) == doctest::Approx(-1.0));
    CHECK(mv(0, 1) == doctest::Approx(2.0));
    CHECK(mv(0, 2) == doctest::Approx(3.0));
    CHECK(mv(0, 3) == doctest::Approx(2.0));
  }

  TEST_CASE("sinusoidal field on a grid matches the oracle") {
    std::mt19937_64 rng(8);
    const Positions train = testutil::random_positions(rng, 50, 0, 20);
    Eigen::VectorXd vx(50), vy(50);
    for (int i = 0; i < 50; ++i) {
      vx[i] = std::sin(train(i, 0) / 3.0);
      vy[i] = std::cos(train(i, 1) / 4.0);
    }
    KernelParams p{1.0, 1.0, 3.0, 3.0, 0.05};
    GpPredictor pred(TrainingSet{train, vx, vy, {}}, p, 0, 0);
    const Positions grid = GridSpec{6, 6}.points({0, 20, 0, 20});
    const VectorField field = evaluate_field(pred, grid);
    for (int axis = 0; axis < 2; ++axis) {
      const Eigen::VectorXd& v = axis == 0 ? vx : vy;
      const auto ref = oracle::dense_condition(to_points(train),
                                               std::vector<double>(v.data(), v.data() + 50),
                                               to_points(grid), 1.0, 3.0, 3.0, 0.05, 0.0);
      const Eigen::VectorXd& m = axis == 0 ? field.mean_x : field.mean_y;
      CHECK(oracle::relative_error(flatten(m), ref.mean) < 1e-8);
    }
  }

  TEST_CASE("axes use independent parameters through identical code") {
    std::mt19937_64 rng(4);
    const Positions train = testutil::random_positions(rng, 10, 0, 10);
    const Positions test = testutil::random_positions(rng, 5, 0, 10);
    const Eigen::VectorXd a = Eigen::VectorXd::Random(10);
    const Eigen::VectorXd b = Eigen::VectorXd::Random(10);
    const Posterior p1 = gp_posterior(train, a, b, test, KernelParams{2, 3, 1.5, 2, 0.2}, 1, -1);
    const Posterior p2 = gp_posterior(train, b, a, test, KernelParams{3, 2, 1.5, 2, 0.2}, -1, 1);
    CHECK((p1.axis[0].mean - p2.axis[1].mean).norm() == 0);
    CHECK((p1.axis[1].cov - p2.axis[0].cov).norm() == 0);
  }

  TEST_CASE("prior density equals the explicit two-point normal") {
    Positions pos(2, 2);
    pos << 0, 0, 1, 2;
    Eigen::VectorXd v(2);
    v << 0.7, -0.4;
    const double s2 = 2.0, wx = 1.5, wy = 2.5, sn = 0.3;
    const long double c01 = oracle::sq_exp({0, 0}, {1, 2}, s2, wx, wy);
    const double ref = static_cast<double>(oracle::log_normal_2d(0.7, -0.4, 0.1, s2 + sn, c01, s2 + sn));
    CHECK(gp_prior_log_density(pos, v, 0.1, s2, wx, wy, sn) == doctest::Approx(ref).epsilon(1e-12));
  }

  TEST_CASE("grid is row-major with y outer") {
    const Positions g = GridSpec{2, 2}.points({0, 2, 0, 2});
    REQUIRE(g.rows() == 4);
    CHECK(g(0, 0) == 0.5);
    CHECK(g(0, 1) == 0.5);
    CHECK(g(1, 0) == 1.5);
    CHECK(g(1, 1) == 0.5);
    CHECK(g(2, 0) == 0.5);
    CHECK(g(2, 1) == 1.5);
  }

  TEST_CASE("training frame selection respects the cap") {
    std::vector<Frame> frames;
    for (std::size_t i = 0; i < 30; ++i) frames.push_back(Frame{i, 0, std::vector<Vehicle>(i % 5 + 1)});
    std::set<std::size_t> members;
    for (std::size_t i = 0; i < 30; ++i) members.insert(i);
    CHECK(select_training_frames(frames, members, 1000, 1).size() == 30);

    const auto capped = select_training_frames(frames, members, 20, 1);
    std::size_t total = 0;
    for (auto i : capped) total += frames[i].size();
    CHECK(total <= 20);
    CHECK(std::is_sorted(capped.begin(), capped.end()));
    CHECK(capped == select_training_frames(frames, members, 20, 1));

    const auto one = select_training_frames(frames, {4}, 2, 1);
    CHECK(one == std::vector<std::size_t>{4});
    CHECK(select_training_frames(frames, {4, 5}, 100, 1, 4) == std::vector<std::size_t>{5});
  }
}
