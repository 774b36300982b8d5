#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

#include "helpers.hpp"
#include "kcd/matching.hpp"

using kcd::Error;
using kcd::ErrorCategory;
using kcd::Matrix;
using kcd::MetricKind;
using kcd::TransformKind;

namespace {

double gamma_of(const Matrix& m, const std::vector<std::size_t>& map) {
  double g = 0.0;
  for (std::size_t j = 0; j < map.size(); ++j) g += m(map[j], j);
  return g;
}

}  // namespace

TEST_CASE("greedy takes the column argmax with ties to the lowest row") {
  const Matrix m{{0.9, 0.8}, {0.1, 0.7}};
  const auto t = kcd::match_greedy(m);
  REQUIRE(t.kind == TransformKind::IndexMap);
  REQUIRE(t.map == std::vector<std::size_t>{0, 0});
  REQUIRE(gamma_of(m, t.map) == Catch::Approx(1.7));

  const Matrix tie{{1.0, 1.0}, {1.0, 1.0}};
  REQUIRE(kcd::match_greedy(tie).map == std::vector<std::size_t>{0, 0});
}

TEST_CASE("greedy on the identity matrix is the identity map") {
  Matrix m(5, 5);
  for (std::size_t i = 0; i < 5; ++i) m(i, i) = 1.0;
  const auto t = kcd::match_greedy(m);
  for (std::size_t j = 0; j < 5; ++j) REQUIRE(t.map[j] == j);
}

TEST_CASE("greedy dominates every permutation (exhaustive, 8x8)") {
  kcd::Rng rng(101);
  const Matrix m = kcdtest::random_matrix(8, 8, rng);
  const double greedy_gamma = gamma_of(m, kcd::match_greedy(m).map);
  for (const auto& perm : kcdtest::all_permutations(8))
    REQUIRE(greedy_gamma >= gamma_of(m, perm));
}

TEST_CASE("bipartite solves the forced swap") {
  const Matrix m{{0, 1}, {1, 0}};
  const auto t = kcd::match_bipartite(m);
  REQUIRE(t.kind == TransformKind::Permutation);
  REQUIRE(t.map == std::vector<std::size_t>{1, 0});
  REQUIRE(gamma_of(m, t.map) == 2.0);
}

TEST_CASE("bipartite keeps a diagonally dominant matrix on the identity") {
  const Matrix m{{2, 1}, {1, 2}};
  const auto t = kcd::match_bipartite(m);
  REQUIRE(t.map == std::vector<std::size_t>{0, 1});
  REQUIRE(gamma_of(m, t.map) == 4.0);
}

TEST_CASE("bipartite matches the exhaustive optimum on random 7x7 matrices") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    kcd::Rng rng(seed);
    const Matrix m = kcdtest::random_matrix(7, 7, rng, -5.0, 5.0);
    const auto t = kcd::match_bipartite(m);
    REQUIRE(gamma_of(m, t.map) ==
            Catch::Approx(kcdtest::brute_force_best_gamma(m)).margin(1e-9));
    std::set<std::size_t> seen(t.map.begin(), t.map.end());
    REQUIRE(seen.size() == 7);
  }
}

TEST_CASE("bipartite tie-breaking picks the lexicographically smallest optimum") {
  // All entries equal: every permutation is optimal, identity is smallest.
  Matrix ones(4, 4);
  for (double& v : ones.data()) v = 1.0;
  REQUIRE(kcd::match_bipartite(ones).map == std::vector<std::size_t>{0, 1, 2, 3});

  // Two optima: [0,1] and [1,0] both score 2; [0,1] is smaller.
  const Matrix two{{1, 1}, {1, 1}};
  REQUIRE(kcd::match_bipartite(two).map == std::vector<std::size_t>{0, 1});

  // Optima are {0->1,1->0,2->2} and {0->1,1->2,2->0}: rows 0 and 2 are
  // interchangeable for columns 1 and 2. Lexicographic choice is [1,0,2].
  const Matrix tri{{0, 1, 1}, {1, 0, 0}, {0, 1, 1}};
  const auto t = kcd::match_bipartite(tri);
  REQUIRE(gamma_of(tri, t.map) == 3.0);
  REQUIRE(t.map == std::vector<std::size_t>{1, 0, 2});

  // Exhaustive check on small random matrices with quantized entries so
  // ties are common: the result must be the lexicographically smallest
  // among all optimal permutations.
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    kcd::Rng rng(200 + seed);
    Matrix m(5, 5);
    for (double& v : m.data()) v = static_cast<double>(rng.uniform_below(3));
    const auto got = kcd::match_bipartite(m).map;
    const double best = kcdtest::brute_force_best_gamma(m);
    std::vector<std::size_t> expected;
    for (const auto& perm : kcdtest::all_permutations(5)) {
      if (gamma_of(m, perm) >= best - 1e-12) {
        expected = perm;  // permutations enumerate in lexicographic order
        break;
      }
    }
    REQUIRE(got == expected);
  }
}

TEST_CASE("bipartite is invariant to constant shifts and positive rescaling") {
  kcd::Rng rng(131);
  const Matrix m = kcdtest::random_matrix(6, 6, rng);
  const auto base = kcd::match_bipartite(m).map;
  Matrix shifted = m;
  for (double& v : shifted.data()) v += 17.5;
  REQUIRE(kcd::match_bipartite(shifted).map == base);
  Matrix scaled = m;
  for (double& v : scaled.data()) v *= 3.25;
  REQUIRE(kcd::match_bipartite(scaled).map == base);
}

TEST_CASE("bipartite rejects bad inputs") {
  try {
    kcd::match_bipartite(Matrix(2, 3));
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    REQUIRE(e.category() == ErrorCategory::ShapeMismatch);
  }
  Matrix nan_matrix(2, 2);
  nan_matrix(0, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    kcd::match_bipartite(nan_matrix);
    FAIL("expected InvalidValue");
  } catch (const Error& e) {
    REQUIRE(e.category() == ErrorCategory::InvalidValue);
  }
}

TEST_CASE("bipartite on self-consistency under correlation is the identity") {
  kcd::Rng rng(137);
  const auto x = kcdtest::random_pooled(24, 8, rng);
  const auto m = kcd::consistency_matrix(x, x, {MetricKind::Correlation});
  const auto t = kcd::match_bipartite(m);
  for (std::size_t j = 0; j < 8; ++j) REQUIRE(t.map[j] == j);
}

TEST_CASE("random permutations are seeded and uniform") {
  REQUIRE(kcd::match_random(1, 42).map == std::vector<std::size_t>{0});
  REQUIRE(kcd::match_random(9, 7).map == kcd::match_random(9, 7).map);

  // 10^4 draws at c=3: each of the 6 permutations within 3 sigma of 1/6.
  std::map<std::vector<std::size_t>, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    counts[kcd::match_random(3, static_cast<std::uint64_t>(i)).map]++;
  REQUIRE(counts.size() == 6);
  const double p = 1.0 / 6.0;
  const double sigma = std::sqrt(p * (1 - p) / draws);
  for (const auto& [perm, count] : counts) {
    const double freq = static_cast<double>(count) / draws;
    REQUIRE(std::abs(freq - p) <= 3 * sigma);
  }
}

TEST_CASE("identity transform is a no-op and scores the trace") {
  kcd::Rng rng(139);
  const auto x = kcdtest::random_pooled(5, 4, rng);
  const auto t = kcd::identity_transform(4);
  REQUIRE(kcd::apply_transform(t, x).data == x.data);
  kcd::ConsistencyMatrix m;
  m.m = kcdtest::random_matrix(4, 4, rng);
  REQUIRE(kcd::consistency_score(m, t) == kcd::consistency_score(m));
}

TEST_CASE("apply_transform reorders, duplicates, and mixes channels") {
  kcd::PooledActivations x;
  x.data = Matrix{{1.0, 2.0}, {3.0, 4.0}};

  kcd::Transformation swap;
  swap.kind = TransformKind::Permutation;
  swap.channels = 2;
  swap.map = {1, 0};
  const auto swapped = kcd::apply_transform(swap, x);
  REQUIRE(swapped.data == Matrix{{2.0, 1.0}, {4.0, 3.0}});

  kcd::Transformation dup;
  dup.kind = TransformKind::IndexMap;
  dup.channels = 2;
  dup.map = {0, 0};
  const auto duped = kcd::apply_transform(dup, x);
  REQUIRE(duped.data == Matrix{{1.0, 1.0}, {3.0, 3.0}});

  kcd::Transformation linear;
  linear.kind = TransformKind::Linear;
  linear.channels = 2;
  linear.linear = Matrix{{1.0, 0.0}, {0.0, 1.0}};
  const auto same = kcd::apply_transform(linear, x);
  for (std::size_t i = 0; i < 4; ++i)
    REQUIRE(same.data.data()[i] == Catch::Approx(x.data.data()[i]).margin(1e-12));
}

TEST_CASE("permutation then inverse restores tensors bit-exactly") {
  kcd::Rng rng(149);
  const auto x = kcdtest::random_tensor(2, 6, 3, 2, kcd::Dtype::F64, rng);
  const auto perm = kcd::match_random(6, 999);
  kcd::Transformation inverse;
  inverse.kind = TransformKind::Permutation;
  inverse.channels = 6;
  inverse.map.resize(6);
  for (std::size_t j = 0; j < 6; ++j) inverse.map[perm.map[j]] = j;
  const auto there = kcd::apply_transform(perm, x);
  const auto back = kcd::apply_transform(inverse, there);
  REQUIRE(back.data == x.data);
}

TEST_CASE("per-class transforms: degenerate K, per-class K, indivisible K") {
  kcd::Rng rng(151);
  const std::size_t b = 40, c = 6;
  const auto teacher = kcdtest::random_pooled(b, c, rng);
  const auto student = kcdtest::random_pooled(b, c, rng);
  std::vector<std::int64_t> labels(b);
  for (std::size_t i = 0; i < b; ++i) labels[i] = static_cast<std::int64_t>(i % 4);

  const kcd::ConsistencyMetric metric{MetricKind::L2};
  const auto global = kcd::match_bipartite(kcd::consistency_matrix(teacher, student, metric));

  const auto k1 = kcd::per_class_transforms(teacher, student, labels, 1, metric,
                                            kcd::MatchStrategy::Bipartite);
  REQUIRE(k1.transforms.size() == 1);
  REQUIRE(k1.transforms[0].map == global.map);
  REQUIRE(k1.for_label(2).map == global.map);

  const auto k4 = kcd::per_class_transforms(teacher, student, labels, 4, metric,
                                            kcd::MatchStrategy::Greedy);
  REQUIRE(k4.transforms.size() == 4);
  for (std::int64_t cls = 0; cls < 4; ++cls)
    REQUIRE(k4.class_to_partition.at(cls) == static_cast<std::size_t>(cls));

  try {
    kcd::per_class_transforms(teacher, student, labels, 3, metric,
                              kcd::MatchStrategy::Bipartite);
    FAIL("expected PartitionError");
  } catch (const Error& e) {
    REQUIRE(e.category() == ErrorCategory::PartitionError);
  }
}

TEST_CASE("transformation records survive serialization") {
  kcdtest::TempDir tmp("transform-io");
  kcd::Rng rng(157);

  auto perm = kcd::match_random(5, 5);
  perm.provenance.metric = "correlation";
  perm.provenance.sources["teacher"] = "fnv1a64:0123456789abcdef";
  kcd::save_transform(perm, tmp.path("perm.map"));
  const auto perm2 = kcd::load_transform(tmp.path("perm.map"));
  REQUIRE(perm2.kind == TransformKind::Permutation);
  REQUIRE(perm2.map == perm.map);
  REQUIRE(perm2.provenance.metric == "correlation");
  REQUIRE(perm2.provenance.sources.at("teacher") == "fnv1a64:0123456789abcdef");

  const auto ident = kcd::identity_transform(3);
  kcd::save_transform(ident, tmp.path("id.map"));
  REQUIRE(kcd::load_transform(tmp.path("id.map")).kind == TransformKind::Identity);

  kcd::Transformation linear;
  linear.kind = TransformKind::Linear;
  linear.channels = 3;
  linear.linear = kcdtest::random_matrix(3, 3, rng);
  kcd::save_transform(linear, tmp.path("lin.map"));
  const auto linear2 = kcd::load_transform(tmp.path("lin.map"));
  REQUIRE(linear2.linear == linear.linear);

  kcd::Transformation res;
  res.kind = TransformKind::Residual;
  res.channels = 3;
  res.res_w1 = kcdtest::random_matrix(3, 2, rng);
  res.res_b1 = {0.5, -0.5};
  res.res_w2 = kcdtest::random_matrix(2, 3, rng);
  res.res_b2 = {0.0, 1.0, 2.0};
  kcd::save_transform(res, tmp.path("res.map"));
  const auto res2 = kcd::load_transform(tmp.path("res.map"));
  REQUIRE(res2.res_w1 == res.res_w1);
  REQUIRE(res2.res_b1 == res.res_b1);
  REQUIRE(res2.res_w2 == res.res_w2);
  REQUIRE(res2.res_b2 == res.res_b2);
}
