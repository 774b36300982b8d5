#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "helpers.hpp"
#include "kcd/consistency.hpp"
#include "kcd/matching.hpp"
#include "kcd/parallel.hpp"

using kcd::ConsistencyMetric;
using kcd::Error;
using kcd::ErrorCategory;
using kcd::Matrix;
using kcd::MetricKind;
using kcd::PooledActivations;

namespace {

PooledActivations from_columns(const std::vector<std::vector<double>>& cols) {
  PooledActivations p;
  p.data = Matrix(cols.at(0).size(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t r = 0; r < cols[j].size(); ++r) p.data(r, j) = cols[j][r];
  return p;
}

}  // namespace

TEST_CASE("correlation of a channel with itself is 1") {
  kcd::Rng rng(3);
  const auto x = kcdtest::random_pooled(16, 5, rng);
  const auto m = kcd::consistency_matrix(x, x, {MetricKind::Correlation});
  for (std::size_t i = 0; i < 5; ++i)
    REQUIRE(m.m(i, i) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("correlation of perfectly anti-correlated channels is -1") {
  const auto t = from_columns({{1, 2, 3}});
  const auto s = from_columns({{3, 2, 1}});
  const auto m = kcd::consistency_matrix(t, s, {MetricKind::Correlation});
  REQUIRE(m.m(0, 0) == -1.0);
}

TEST_CASE("correlation worked example is exactly -0.5") {
  const auto t = from_columns({{1, 0, 1}});
  const auto s = from_columns({{0, 1, 1}});
  const auto m = kcd::consistency_matrix(t, s, {MetricKind::Correlation});
  REQUIRE(m.m(0, 0) == -0.5);
}

TEST_CASE("l2 entry for ([0,0],[3,4]) is 1/(5+eps)") {
  const auto t = from_columns({{0, 0}});
  const auto s = from_columns({{3, 4}});
  const auto m = kcd::consistency_matrix(t, s, {MetricKind::L2, 1e-8});
  REQUIRE(m.m(0, 0) == 1.0 / (5.0 + 1e-8));
}

TEST_CASE("constant channels get correlation 0") {
  const auto t = from_columns({{2, 2, 2}, {1, 2, 3}});
  const auto s = from_columns({{1, 2, 3}, {5, 5, 5}});
  const auto m = kcd::consistency_matrix(t, s, {MetricKind::Correlation});
  REQUIRE(m.m(0, 0) == 0.0);  // constant teacher channel
  REQUIRE(m.m(1, 1) == 0.0);  // constant student channel
  REQUIRE(m.m(1, 0) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("correlation is invariant to positive affine rescaling") {
  kcd::Rng rng(17);
  const auto t = kcdtest::random_pooled(12, 4, rng);
  const auto s = kcdtest::random_pooled(12, 4, rng);
  const auto m0 = kcd::consistency_matrix(t, s, {MetricKind::Correlation});
  for (int trial = 0; trial < 10; ++trial) {
    PooledActivations t2 = t;
    const double a = rng.uniform(0.1, 4.0);
    const double b = rng.uniform(-3.0, 3.0);
    for (double& v : t2.data.data()) v = a * v + b;
    const auto m1 = kcd::consistency_matrix(t2, s, {MetricKind::Correlation});
    for (std::size_t i = 0; i < m0.m.size(); ++i)
      REQUIRE(m1.m.data()[i] == Catch::Approx(m0.m.data()[i]).margin(1e-9));
  }
}

TEST_CASE("L_p consistency is symmetric across roles") {
  kcd::Rng rng(19);
  const auto t = kcdtest::random_pooled(8, 3, rng);
  const auto s = kcdtest::random_pooled(8, 3, rng);
  for (const MetricKind kind : {MetricKind::L1, MetricKind::L2}) {
    const auto mts = kcd::consistency_matrix(t, s, {kind});
    const auto mst = kcd::consistency_matrix(s, t, {kind});
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) REQUIRE(mts.m(i, j) == mst.m(j, i));
  }
}

TEST_CASE("kl entries are nonpositive, zero only on identical distributions") {
  kcd::Rng rng(23);
  const auto t = kcdtest::random_pooled(10, 4, rng);
  auto s = kcdtest::random_pooled(10, 4, rng);
  // Make one student channel identical to one teacher channel.
  for (std::size_t r = 0; r < 10; ++r) s.data(r, 2) = t.data(r, 1);
  const auto m = kcd::consistency_matrix(t, s, {MetricKind::KlDivergence});
  for (double v : m.m.data()) REQUIRE(v <= 0.0);
  REQUIRE(m.m(1, 2) == 0.0);
  REQUIRE(m.m(0, 0) < 0.0);
}

TEST_CASE("shape and sample-count preconditions") {
  kcd::Rng rng(29);
  const auto t = kcdtest::random_pooled(8, 3, rng);
  const auto s_batch = kcdtest::random_pooled(7, 3, rng);
  const auto s_chan = kcdtest::random_pooled(8, 4, rng);
  try {
    kcd::consistency_matrix(t, s_batch, {MetricKind::L2});
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    REQUIRE(e.category() == ErrorCategory::ShapeMismatch);
  }
  try {
    kcd::consistency_matrix(t, s_chan, {MetricKind::L2});
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    REQUIRE(e.category() == ErrorCategory::ShapeMismatch);
  }
  const auto t1 = kcdtest::random_pooled(1, 3, rng);
  const auto s1 = kcdtest::random_pooled(1, 3, rng);
  try {
    kcd::consistency_matrix(t1, s1, {MetricKind::Correlation});
    FAIL("expected InsufficientSamples");
  } catch (const Error& e) {
    REQUIRE(e.category() == ErrorCategory::InsufficientSamples);
  }
}

TEST_CASE("score without transform is the trace") {
  kcd::ConsistencyMatrix m;
  m.m = Matrix{{1, 2}, {3, 4}};
  REQUIRE(kcd::consistency_score(m) == 5.0);
}

TEST_CASE("score under the swap permutation picks up off-diagonal entries") {
  kcd::ConsistencyMatrix m;
  m.m = Matrix{{0, 1}, {1, 0}};
  kcd::Transformation swap;
  swap.kind = kcd::TransformKind::Permutation;
  swap.channels = 2;
  swap.map = {1, 0};
  REQUIRE(kcd::consistency_score(m, swap) == 2.0);
}

TEST_CASE("score under a random permutation matches brute-force summation") {
  kcd::Rng rng(31);
  kcd::ConsistencyMatrix m;
  m.m = kcdtest::random_matrix(6, 6, rng);
  m.sample_count = 6;
  for (int trial = 0; trial < 25; ++trial) {
    const auto t = kcd::match_random(6, 1000 + static_cast<std::uint64_t>(trial));
    double expected = 0.0;
    for (std::size_t j = 0; j < 6; ++j) expected += m.m(t.map[j], j);
    REQUIRE(kcd::consistency_score(m, t) == expected);
  }
}

TEST_CASE("index-map score equals retracing on transformed features") {
  kcd::Rng rng(37);
  const auto teacher = kcdtest::random_pooled(20, 6, rng);
  const auto student = kcdtest::random_pooled(20, 6, rng);
  for (const MetricKind kind :
       {MetricKind::L1, MetricKind::L2, MetricKind::Correlation, MetricKind::Cosine,
        MetricKind::KlDivergence}) {
    const ConsistencyMetric metric{kind};
    const auto m = kcd::consistency_matrix(teacher, student, metric);
    for (int trial = 0; trial < 5; ++trial) {
      auto t = kcd::match_random(6, 50 + static_cast<std::uint64_t>(trial));
      const double via_lookup = kcd::consistency_score(m, t);
      const double via_features = kcd::consistency_score(teacher, student, metric, t);
      REQUIRE(via_lookup == Catch::Approx(via_features).margin(1e-9));
    }
  }
}

TEST_CASE("matrix bytes do not depend on the worker count") {
  kcd::Rng rng(41);
  const auto teacher = kcdtest::random_pooled(32, 24, rng);
  const auto student = kcdtest::random_pooled(32, 24, rng);
  const int before = kcd::max_threads_slot();
  kcd::set_max_threads(1);
  const auto m1 = kcd::consistency_matrix(teacher, student, {MetricKind::Correlation});
  kcd::set_max_threads(7);
  const auto m7 = kcd::consistency_matrix(teacher, student, {MetricKind::Correlation});
  kcd::set_max_threads(before);
  REQUIRE(std::memcmp(m1.m.data().data(), m7.m.data().data(),
                      m1.m.size() * sizeof(double)) == 0);
}
