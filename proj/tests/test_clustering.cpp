#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "wcluster/clustering.hpp"
#include "wcluster/exact_transport.hpp"

using namespace wcluster;

namespace {

DistanceMatrix matrix_from(const Eigen::MatrixXd& entries) {
  DistanceMatrix dm;
  dm.entries = entries;
  for (int i = 0; i < entries.rows(); ++i) dm.ids.push_back(std::to_string(i));
  return dm;
}

// canonical set-partition signature: labels renumbered by first occurrence
std::vector<int> canonical(const std::vector<int>& labels) {
  std::vector<int> map(labels.size(), -1), out(labels.size());
  int next = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (map[labels[i]] < 0) map[labels[i]] = next++;
    out[i] = map[labels[i]];
  }
  return out;
}

// the 5-point asymmetric instance used for the silhouette regression values
Eigen::MatrixXd asymmetric_instance() {
  Eigen::MatrixXd d(5, 5);
  d << 0, 1, 2, 10, 10,
       1, 0, 1, 8, 12,
       2, 1, 0, 9, 11,
       10, 8, 9, 0, 2,
       10, 12, 11, 2, 0;
  return d;
}

}  // namespace

TEST_CASE("distance matrix validation") {
  CHECK_NOTHROW(matrix_from(Eigen::MatrixXd::Zero(3, 3)).validate());

  DistanceMatrix rect;
  rect.entries = Eigen::MatrixXd::Zero(2, 3);
  CHECK_THROWS_AS(rect.validate(), ValidationError);

  auto diag = matrix_from(Eigen::MatrixXd::Zero(2, 2));
  diag.entries(1, 1) = 1e-13;
  CHECK_THROWS_AS(diag.validate(), ValidationError);

  auto neg = matrix_from(Eigen::MatrixXd::Zero(2, 2));
  neg.entries(0, 1) = -1;
  neg.entries(1, 0) = -1;
  CHECK_THROWS_AS(neg.validate(), ValidationError);

  auto skew = matrix_from(Eigen::MatrixXd::Zero(2, 2));
  skew.entries(0, 1) = 1.0;
  skew.entries(1, 0) = 1.0 + 1e-6;
  CHECK_THROWS_AS(skew.validate(), ValidationError);

  auto nearly = matrix_from(Eigen::MatrixXd::Zero(2, 2));
  nearly.entries(0, 1) = 1.0;
  nearly.entries(1, 0) = 1.0 + 1e-10;  // inside the 1e-9 tolerance
  CHECK_NOTHROW(nearly.validate());

  auto bad_ids = matrix_from(Eigen::MatrixXd::Zero(2, 2));
  bad_ids.ids.push_back("extra");
  CHECK_THROWS_AS(bad_ids.validate(), ValidationError);
}

TEST_CASE("pairwise distances of three diracs recover point distances") {
  std::vector<EmpiricalDistribution> dists;
  for (double x : {0.0, 1.0, 10.0}) {
    Eigen::MatrixXd s(1, 1);
    s << x;
    dists.push_back(EmpiricalDistribution::from_samples(s));
  }
  SinkhornConfig sk;
  sk.lambda = 1e-3;
  sk.tolerance = 1e-12;
  sk.max_iterations = 1000;
  DistanceMatrix dm = pairwise_distances(dists, sk, Metric::Euclidean, /*normalize=*/false);
  Eigen::MatrixXd expected(3, 3);
  expected << 0, 1, 10, 1, 0, 9, 10, 9, 0;
  CHECK((dm.entries - expected).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(dm.entries(0, 0) == 0.0);
  CHECK(dm.entries(1, 2) == dm.entries(2, 1));
}

TEST_CASE("pairwise distances are identical for any worker count") {
  std::vector<EmpiricalDistribution> dists;
  for (int k = 0; k < 6; ++k) dists.push_back(oracle::random_distribution(700, k, 9, 3));
  SinkhornConfig sk;
  sk.lambda = 0.1;
  DistanceMatrix one = pairwise_distances(dists, sk, Metric::Euclidean, true, 1);
  DistanceMatrix four = pairwise_distances(dists, sk, Metric::Euclidean, true, 4);
  CHECK(one.entries == four.entries);
  CHECK_NOTHROW(one.validate());
}

TEST_CASE("pairwise distances validate their inputs") {
  SinkhornConfig sk;
  std::vector<EmpiricalDistribution> single = {oracle::random_distribution(1, 1, 4, 2)};
  CHECK_THROWS_AS(pairwise_distances(single, sk), ValidationError);
  std::vector<EmpiricalDistribution> mixed = {oracle::random_distribution(1, 1, 4, 2),
                                              oracle::random_distribution(1, 2, 4, 3)};
  CHECK_THROWS_AS(pairwise_distances(mixed, sk, Metric::Euclidean, false), ValidationError);
}

TEST_CASE("dirac chain merges nearest pair first") {
  Eigen::MatrixXd entries(3, 3);
  entries << 0, 1, 10, 1, 0, 9, 10, 9, 0;
  Dendrogram dendro = agglomerate(matrix_from(entries));
  REQUIRE(dendro.merges.size() == 2);
  CHECK(dendro.merges[0].left == 0);
  CHECK(dendro.merges[0].right == 1);
  CHECK(dendro.merges[0].height == 1.0);
  CHECK(dendro.merges[0].new_id == 3);
  CHECK(dendro.merges[1].left == 2);
  CHECK(dendro.merges[1].right == 3);
  CHECK(dendro.merges[1].height == 10.0);  // complete linkage takes the max
  CHECK(dendro.merges[1].new_id == 4);
}

TEST_CASE("two points merge at their distance") {
  Eigen::MatrixXd entries(2, 2);
  entries << 0, 3.5, 3.5, 0;
  Dendrogram dendro = agglomerate(matrix_from(entries));
  REQUIRE(dendro.merges.size() == 1);
  CHECK(dendro.merges[0].height == 3.5);
}

TEST_CASE("merge sequence equals the naive rescan reference") {
  SubstreamRng rng({811});
  for (int trial = 0; trial < 120; ++trial) {
    int n = 2 + static_cast<int>(rng.next_u64() % 7);
    Eigen::MatrixXd d = oracle::random_distance_matrix(rng, n, trial % 2 == 1);
    Dendrogram dendro = agglomerate(matrix_from(d));
    auto reference = oracle::complete_linkage_naive(d);
    REQUIRE(dendro.merges.size() == reference.size());
    for (std::size_t s = 0; s < reference.size(); ++s) {
      INFO("trial " << trial << " n " << n << " step " << s);
      CHECK(dendro.merges[s].left == reference[s].left);
      CHECK(dendro.merges[s].right == reference[s].right);
      CHECK(dendro.merges[s].new_id == reference[s].new_id);
      CHECK(dendro.merges[s].height == reference[s].height);
    }
  }
}

TEST_CASE("linkage heights never decrease") {
  SubstreamRng rng({812});
  for (int trial = 0; trial < 30; ++trial) {
    int n = 3 + static_cast<int>(rng.next_u64() % 10);
    Dendrogram dendro = agglomerate(matrix_from(oracle::random_distance_matrix(rng, n, false)));
    for (std::size_t s = 1; s < dendro.merges.size(); ++s)
      CHECK(dendro.merges[s].height >= dendro.merges[s - 1].height);
  }
}

TEST_CASE("partitions are invariant to input permutation") {
  // Distinct distances only: with exact ties the lexicographic merge
  // tie-break can legitimately pick a different, equally valid partition.
  SubstreamRng rng({813});
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 5 + static_cast<int>(rng.next_u64() % 6);
    Eigen::MatrixXd d = oracle::random_distance_matrix(rng, n, false);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.next_u64() % (i + 1)]);
    Eigen::MatrixXd pd(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) pd(i, j) = d(perm[i], perm[j]);

    Dendrogram base = agglomerate(matrix_from(d));
    Dendrogram permuted = agglomerate(matrix_from(pd));
    for (int k = 1; k <= n; ++k) {
      std::vector<int> lb = cut_dendrogram(base, k);
      std::vector<int> lp = cut_dendrogram(permuted, k);
      std::vector<int> lp_in_base_order(n);
      for (int i = 0; i < n; ++i) lp_in_base_order[perm[i]] = lp[i];
      INFO("trial " << trial << " n " << n << " k " << k);
      CHECK(oracle::ari_pair_counts(lb, lp_in_base_order) == 1.0);
    }
  }
}

TEST_CASE("merge structure is invariant to increasing distance transforms") {
  SubstreamRng rng({814});
  const int n = 8;
  Eigen::MatrixXd d = oracle::random_distance_matrix(rng, n, true);
  Eigen::MatrixXd warped = d.array().square() + d.array() * 0.5;
  Dendrogram base = agglomerate(matrix_from(d));
  Dendrogram trans = agglomerate(matrix_from(warped));
  REQUIRE(base.merges.size() == trans.merges.size());
  for (std::size_t s = 0; s < base.merges.size(); ++s) {
    CHECK(base.merges[s].left == trans.merges[s].left);
    CHECK(base.merges[s].right == trans.merges[s].right);
  }
}

TEST_CASE("cut labels are numbered by smallest leaf") {
  Eigen::MatrixXd entries(4, 4);
  entries << 0, 9, 9, 1,
             9, 0, 1, 9,
             9, 1, 0, 9,
             1, 9, 9, 0;
  // pairs {0,3} and {1,2} merge first
  Dendrogram dendro = agglomerate(matrix_from(entries));
  std::vector<int> labels = cut_dendrogram(dendro, 2);
  CHECK(labels == std::vector<int>{0, 1, 1, 0});
  CHECK(cut_dendrogram(dendro, 1) == std::vector<int>{0, 0, 0, 0});
  CHECK(cut_dendrogram(dendro, 4) == std::vector<int>{0, 1, 2, 3});
  CHECK_THROWS_AS(cut_dendrogram(dendro, 0), ValidationError);
  CHECK_THROWS_AS(cut_dendrogram(dendro, 5), ValidationError);
}

TEST_CASE("silhouette on the asymmetric hand instance") {
  Eigen::MatrixXd d = asymmetric_instance();
  std::vector<int> labels = {0, 0, 0, 1, 1};
  double s = silhouette_index(matrix_from(d), labels);
  // cluster means 13/15 and 79/99, two-level average 412/495
  CHECK(s == Catch::Approx(412.0 / 495.0).epsilon(1e-12));
  CHECK(s == Catch::Approx(0.8323232323232324).epsilon(1e-12));
  CHECK(s == Catch::Approx(oracle::silhouette_reference(d, labels)).epsilon(1e-12));

  // the flat per-point mean would be different; guard against regressions to it
  double flat = (0.85 + 0.9 + 0.85 + 7.0 / 9.0 + 9.0 / 11.0) / 5.0;
  CHECK(std::abs(s - flat) > 1e-3);

  SilhouetteOptions legacy;
  legacy.legacy_between_denominator = true;
  double sl = silhouette_index(matrix_from(d), labels, legacy);
  CHECK(sl == Catch::Approx(0.8993265993265993).epsilon(1e-12));
  CHECK(sl == Catch::Approx(oracle::silhouette_reference(d, labels, true)).epsilon(1e-12));
}

TEST_CASE("silhouette agrees with the reference on random instances") {
  SubstreamRng rng({815});
  for (int trial = 0; trial < 40; ++trial) {
    int n = 4 + static_cast<int>(rng.next_u64() % 8);
    int k = 2 + static_cast<int>(rng.next_u64() % (n - 2));
    Eigen::MatrixXd d = oracle::random_distance_matrix(rng, n, false);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = i < k ? i : static_cast<int>(rng.next_u64() % k);
    labels = canonical(labels);
    bool legacy = trial % 2 == 1;
    SilhouetteOptions opts;
    opts.legacy_between_denominator = legacy;
    double lib = silhouette_index(matrix_from(d), labels, opts);
    double ref = oracle::silhouette_reference(d, labels, legacy);
    CHECK(lib == Catch::Approx(ref).margin(1e-12));
    CHECK(lib >= -1.0);
    CHECK(lib <= 1.0);
  }
}

TEST_CASE("equidistant points score zero") {
  Eigen::MatrixXd d = Eigen::MatrixXd::Ones(4, 4) - Eigen::MatrixXd::Identity(4, 4);
  CHECK(silhouette_index(matrix_from(d), {0, 0, 1, 1}) == 0.0);
  CHECK(silhouette_index(matrix_from(d), {0, 1, 0, 1}) == 0.0);
}

TEST_CASE("two far tight groups score at least 0.9") {
  SubstreamRng rng({816});
  const int n = 8;
  Eigen::MatrixXd d(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      double v = 0;
      if (i != j) v = (i < 4) == (j < 4) ? 0.1 * rng.next_unit() : 10 + rng.next_unit();
      d(i, j) = v;
      d(j, i) = v;
    }
  CHECK(silhouette_index(matrix_from(d), {0, 0, 0, 0, 1, 1, 1, 1}) >= 0.9);
}

TEST_CASE("singletons contribute zero") {
  Eigen::MatrixXd d(3, 3);
  d << 0, 1, 5, 1, 0, 5, 5, 5, 0;
  std::vector<int> labels = {0, 0, 1};
  // pair: a=1, b=5, s=0.8 each; singleton cluster contributes 0
  CHECK(silhouette_index(matrix_from(d), labels) == Catch::Approx((0.8 + 0.0) / 2.0));
}

TEST_CASE("silhouette rejects degenerate levels") {
  Eigen::MatrixXd d = asymmetric_instance();
  CHECK_THROWS_AS(silhouette_index(matrix_from(d), {0, 0, 0, 0, 0}), ValidationError);
  CHECK_THROWS_AS(silhouette_index(matrix_from(d), {0, 1, 2, 3, 4}), ValidationError);
  CHECK_THROWS_AS(silhouette_index(matrix_from(d), {0, 0, 0, 2, 2}), ValidationError);
  CHECK_THROWS_AS(silhouette_index(matrix_from(d), {0, 0}), ValidationError);
}

TEST_CASE("selection recovers three planted triples") {
  // points on a line: triples near 0, 10 and 30
  std::vector<double> xs = {0.0, 0.1, 0.2, 10.0, 10.1, 10.2, 30.0, 30.1, 30.2};
  const int n = static_cast<int>(xs.size());
  Eigen::MatrixXd d(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) d(i, j) = std::abs(xs[i] - xs[j]);
  DistanceMatrix dm = matrix_from(d);
  Clustering c = select_clustering(agglomerate(dm), dm);
  CHECK(c.k == 3);
  std::vector<int> truth = {0, 0, 0, 1, 1, 1, 2, 2, 2};
  CHECK(adjusted_rand_index(c.labels, truth) == 1.0);
  CHECK(c.silhouette > 0.9);

  auto table = silhouette_by_level(agglomerate(dm), dm);
  REQUIRE(table.size() == static_cast<std::size_t>(n - 2));
  CHECK(table.front().first == 2);
  CHECK(table.back().first == n - 1);
}

TEST_CASE("four far diracs in two pairs select k 2") {
  Eigen::MatrixXd d(4, 4);
  d << 0, 0.1, 10, 10,
       0.1, 0, 10, 10,
       10, 10, 0, 0.1,
       10, 10, 0.1, 0;
  DistanceMatrix dm = matrix_from(d);
  Clustering c = select_clustering(agglomerate(dm), dm);
  CHECK(c.k == 2);
  CHECK(adjusted_rand_index(c.labels, {0, 0, 1, 1}) == 1.0);
}

TEST_CASE("silhouette ties resolve to the smaller k") {
  Eigen::MatrixXd d = Eigen::MatrixXd::Ones(5, 5) - Eigen::MatrixXd::Identity(5, 5);
  DistanceMatrix dm = matrix_from(d);
  Clustering c = select_clustering(agglomerate(dm), dm);
  CHECK(c.k == 2);  // every level scores 0
  CHECK(c.silhouette == 0.0);
}

TEST_CASE("ari worked example and axioms") {
  CHECK(adjusted_rand_index({0, 0, 1, 1}, {0, 1, 0, 1}) == Catch::Approx(-0.5));
  CHECK(adjusted_rand_index({0, 0, 1, 1}, {0, 0, 1, 1}) == 1.0);
  CHECK(adjusted_rand_index({0, 0, 1, 1}, {1, 1, 0, 0}) == 1.0);
  CHECK(adjusted_rand_index({0, 1, 2}, {2, 0, 1}) == 1.0);
  CHECK(adjusted_rand_index({0, 0, 0}, {0, 1, 2}) == 0.0);  // one block vs all singletons
  CHECK(adjusted_rand_index({0, 1, 2}, {0, 1, 2}) == 1.0);  // identical trivial partitions
  CHECK_THROWS_AS(adjusted_rand_index({0, 1}, {0, 1, 2}), ValidationError);
  CHECK_THROWS_AS(adjusted_rand_index({}, {}), ValidationError);
}

TEST_CASE("ari matches pair counting on all small labelings") {
  auto labelings = oracle::all_labelings(5, 3);
  for (const auto& x : labelings)
    for (const auto& y : labelings) {
      double lib = adjusted_rand_index(x, y);
      double ref = oracle::ari_pair_counts(x, y);
      CHECK(lib == Catch::Approx(ref).margin(1e-12));
      CHECK(lib == Catch::Approx(adjusted_rand_index(y, x)).margin(1e-15));
    }
}

TEST_CASE("planted transport clusters are recovered end to end") {
  std::vector<int> truth;
  auto dists = oracle::planted_blobs(3, 4, 3, 10.0, 1.0, 15, 42, &truth);
  SinkhornConfig sk;
  sk.lambda = 0.05;
  sk.tolerance = 1e-8;
  DistanceMatrix dm = pairwise_distances(dists, sk, Metric::Euclidean, true, 2);
  Clustering c = select_clustering(agglomerate(dm), dm);
  CHECK(c.k == 3);
  CHECK(adjusted_rand_index(c.labels, truth) == 1.0);
}
