#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <limits>

#include "wcluster/distribution.hpp"
#include "wcluster/rng.hpp"

using namespace wcluster;

namespace {

EmpiricalDistribution dirac1(double x) {
  Eigen::MatrixXd s(1, 1);
  s(0, 0) = x;
  return EmpiricalDistribution(s, Eigen::VectorXd::Ones(1));
}

EmpiricalDistribution dirac2(double x, double y) {
  Eigen::MatrixXd s(1, 2);
  s << x, y;
  return EmpiricalDistribution(s, Eigen::VectorXd::Ones(1));
}

}  // namespace

TEST_CASE("constructor validates its invariants") {
  Eigen::MatrixXd s(2, 1);
  s << 0, 1;
  Eigen::VectorXd w(2);
  w << 0.5, 0.5;
  CHECK_NOTHROW(EmpiricalDistribution(s, w));

  Eigen::VectorXd short_w(1);
  short_w << 1.0;
  CHECK_THROWS_AS(EmpiricalDistribution(s, short_w), ValidationError);

  Eigen::VectorXd bad_sum(2);
  bad_sum << 0.5, 0.6;
  CHECK_THROWS_AS(EmpiricalDistribution(s, bad_sum), ValidationError);

  Eigen::VectorXd zero_w(2);
  zero_w << 1.0, 0.0;
  CHECK_THROWS_AS(EmpiricalDistribution(s, zero_w), ValidationError);

  Eigen::VectorXd neg_w(2);
  neg_w << 1.5, -0.5;
  CHECK_THROWS_AS(EmpiricalDistribution(s, neg_w), ValidationError);

  Eigen::MatrixXd dup(2, 1);
  dup << 3, 3;
  CHECK_THROWS_AS(EmpiricalDistribution(dup, w), ValidationError);

  Eigen::MatrixXd inf_s(2, 1);
  inf_s << 0, std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(EmpiricalDistribution(inf_s, w), ValidationError);

  CHECK_THROWS_AS(EmpiricalDistribution(Eigen::MatrixXd(0, 1), Eigen::VectorXd(0)), ValidationError);
}

TEST_CASE("from_samples merges duplicate rows with summed mass") {
  Eigen::MatrixXd samples(3, 1);
  samples << 0, 1, 0;
  auto d = EmpiricalDistribution::from_samples(samples);
  REQUIRE(d.size() == 2);
  CHECK(d.support()(0, 0) == 0.0);
  CHECK(d.support()(1, 0) == 1.0);
  CHECK(d.weights()[0] == Catch::Approx(2.0 / 3.0));
  CHECK(d.weights()[1] == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("from_samples folds negative zero onto positive zero") {
  Eigen::MatrixXd samples(2, 1);
  samples << 0.0, -0.0;
  auto d = EmpiricalDistribution::from_samples(samples);
  CHECK(d.size() == 1);
  CHECK(d.weights()[0] == 1.0);
}

TEST_CASE("from_points renormalizes unnormalized weights") {
  Eigen::MatrixXd pts(3, 2);
  pts << 0, 0, 1, 1, 0, 0;
  Eigen::VectorXd w(3);
  w << 2, 3, 1;
  auto d = EmpiricalDistribution::from_points(pts, w);
  REQUIRE(d.size() == 2);
  CHECK(d.weights()[0] == Catch::Approx(0.5));
  CHECK(d.weights()[1] == Catch::Approx(0.5));
  CHECK(d.weights().sum() == Catch::Approx(1.0));
}

TEST_CASE("mean is the weighted support average") {
  Eigen::MatrixXd pts(2, 2);
  pts << 0, 0, 4, 2;
  Eigen::VectorXd w(2);
  w << 0.25, 0.75;
  EmpiricalDistribution d(pts, w);
  Eigen::VectorXd mu = d.mean();
  CHECK(mu[0] == Catch::Approx(3.0));
  CHECK(mu[1] == Catch::Approx(1.5));
}

TEST_CASE("fit_normalization on two diracs at 0 and 2 gives center 1 scale 1") {
  std::vector<EmpiricalDistribution> dists = {dirac1(0), dirac1(2)};
  auto params = fit_normalization(dists);
  REQUIRE(params.center.size() == 1);
  CHECK(params.center[0] == Catch::Approx(1.0));
  CHECK(params.scale[0] == Catch::Approx(1.0));
}

TEST_CASE("normalizing an already normalized family is the identity map") {
  std::vector<EmpiricalDistribution> dists;
  SubstreamRng rng({5});
  for (int k = 0; k < 4; ++k) {
    Eigen::MatrixXd pts(6, 2);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 2; ++j) pts(i, j) = rng.next_uniform(-2, 2) + 3 * k;
    dists.push_back(EmpiricalDistribution::from_samples(pts));
  }
  auto params = fit_normalization(dists);
  std::vector<EmpiricalDistribution> normalized;
  for (const auto& d : dists) normalized.push_back(params.apply(d));
  auto again = fit_normalization(normalized);
  for (int j = 0; j < 2; ++j) {
    CHECK(again.center[j] == Catch::Approx(0.0).margin(1e-12));
    CHECK(again.scale[j] == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("normalization is invariant to a common affine shift") {
  std::vector<EmpiricalDistribution> dists;
  SubstreamRng rng({9});
  for (int k = 0; k < 3; ++k) {
    Eigen::MatrixXd pts(5, 1);
    for (int i = 0; i < 5; ++i) pts(i, 0) = rng.next_uniform(0, 1) + k;
    dists.push_back(EmpiricalDistribution::from_samples(pts));
  }
  auto base = fit_normalization(dists);
  std::vector<EmpiricalDistribution> shifted;
  for (const auto& d : dists) {
    Eigen::MatrixXd s = d.support().array() + 17.0;
    shifted.emplace_back(s, d.weights());
  }
  auto moved = fit_normalization(shifted);
  for (std::size_t k = 0; k < dists.size(); ++k) {
    Eigen::MatrixXd a = base.apply(dists[k]).support();
    Eigen::MatrixXd b = moved.apply(shifted[k]).support();
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("degenerate coordinates keep scale 1") {
  Eigen::MatrixXd pts(2, 2);
  pts << 0, 5, 1, 5;
  std::vector<EmpiricalDistribution> dists = {EmpiricalDistribution::from_samples(pts)};
  auto params = fit_normalization(dists);
  CHECK(params.scale[1] == 1.0);
  CHECK(params.center[1] == Catch::Approx(5.0));
}

TEST_CASE("apply and invert are inverse maps") {
  Eigen::MatrixXd pts(4, 3);
  pts << 1, 2, 3, 4, 5, 6, 7, 8, 9, -1, -2, -3;
  auto d = EmpiricalDistribution::from_samples(pts);
  auto params = fit_normalization({d});
  auto back = params.invert(params.apply(d));
  CHECK((back.support() - d.support()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::VectorXd x(3);
  x << 0.5, -0.5, 2.0;
  Eigen::VectorXd raw = params.invert_point(x);
  for (int j = 0; j < 3; ++j) CHECK(raw[j] == Catch::Approx(x[j] * params.scale[j] + params.center[j]));
}

TEST_CASE("fit_normalization validates its inputs") {
  CHECK_THROWS_AS(fit_normalization({}), ValidationError);
  CHECK_THROWS_AS(fit_normalization({dirac1(0), dirac2(0, 0)}), ValidationError);
}

TEST_CASE("cost matrix of two diracs is the point distance") {
  auto a = dirac2(0, 0);
  auto b = dirac2(3, 4);
  auto cm = cost_matrix(a, b, Metric::Euclidean);
  REQUIRE(cm.entries.rows() == 1);
  REQUIRE(cm.entries.cols() == 1);
  CHECK(cm.entries(0, 0) == Catch::Approx(5.0));
  CHECK(cost_matrix(a, b, Metric::SquaredEuclidean).entries(0, 0) == Catch::Approx(25.0));
}

TEST_CASE("cost matrix example on the line") {
  Eigen::MatrixXd sa(2, 1), sb(2, 1);
  sa << 0, 1;
  sb << 0, 2;
  auto a = EmpiricalDistribution::from_samples(sa);
  auto b = EmpiricalDistribution::from_samples(sb);
  auto cm = cost_matrix(a, b, Metric::Euclidean).entries;
  CHECK(cm(0, 0) == 0.0);
  CHECK(cm(0, 1) == 2.0);
  CHECK(cm(1, 0) == 1.0);
  CHECK(cm(1, 1) == 1.0);
}

TEST_CASE("cost matrix transposes when the arguments swap") {
  SubstreamRng rng({13});
  Eigen::MatrixXd sa(4, 3), sb(6, 3);
  for (int i = 0; i < sa.size(); ++i) sa(i / 3, i % 3) = rng.next_unit();
  for (int i = 0; i < sb.size(); ++i) sb(i / 3, i % 3) = rng.next_unit();
  auto a = EmpiricalDistribution::from_samples(sa);
  auto b = EmpiricalDistribution::from_samples(sb);
  for (Metric m : {Metric::Euclidean, Metric::SquaredEuclidean}) {
    Eigen::MatrixXd ab = cost_matrix(a, b, m).entries;
    Eigen::MatrixXd ba = cost_matrix(b, a, m).entries;
    CHECK((ab - ba.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("cost matrix rejects mismatched dimensions") {
  CHECK_THROWS_AS(cost_matrix(dirac1(0), dirac2(0, 0), Metric::Euclidean), ValidationError);
}
