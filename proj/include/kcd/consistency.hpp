#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "kcd/error.hpp"
#include "kcd/matrix.hpp"
#include "kcd/parallel.hpp"
#include "kcd/tensor.hpp"
#include "kcd/transform.hpp"

namespace kcd {

enum class MetricKind { L1, L2, Correlation, Cosine, KlDivergence };

inline std::string to_string(MetricKind k) {
  switch (k) {
    case MetricKind::L1: return "l1";
    case MetricKind::L2: return "l2";
    case MetricKind::Correlation: return "correlation";
    case MetricKind::Cosine: return "cosine";
    case MetricKind::KlDivergence: return "kl";
  }
  return "correlation";
}

inline MetricKind metric_kind_from_string(const std::string& s) {
  if (s == "l1") return MetricKind::L1;
  if (s == "l2") return MetricKind::L2;
  if (s == "correlation") return MetricKind::Correlation;
  if (s == "cosine") return MetricKind::Cosine;
  if (s == "kl") return MetricKind::KlDivergence;
  fail(ErrorCategory::ConfigError, "unknown metric '" + s + "'");
}

struct ConsistencyMetric {
  MetricKind kind = MetricKind::Correlation;
  double epsilon = 1e-8;
};

// Pairwise teacher/student channel consistency. Row i = teacher channel,
// column j = student channel; larger entries mean more consistent.
struct ConsistencyMatrix {
  Matrix m;
  ConsistencyMetric metric;
  std::size_t sample_count = 0;

  std::size_t channels() const noexcept { return m.rows(); }
};

namespace detail {

// Per-channel batch statistics reused across all (i, j) pairs.
struct ChannelStats {
  Matrix centered;              // b x c, x - mean (correlation)
  std::vector<double> inv_std;  // 1/sqrt(var_sum), 0 for constant channels
  std::vector<double> l2_norm;
  Matrix log_softmax;           // b x c, softmax over the batch dimension
};

inline ChannelStats channel_stats(const Matrix& x, MetricKind kind) {
  ChannelStats st;
  const std::size_t b = x.rows(), c = x.cols();
  if (kind == MetricKind::Correlation) {
    st.centered = Matrix(b, c);
    st.inv_std.assign(c, 0.0);
    for (std::size_t j = 0; j < c; ++j) {
      double mean = 0.0;
      for (std::size_t r = 0; r < b; ++r) mean += x(r, j);
      mean /= static_cast<double>(b);
      double var_sum = 0.0;
      for (std::size_t r = 0; r < b; ++r) {
        const double d = x(r, j) - mean;
        st.centered(r, j) = d;
        var_sum += d * d;
      }
      st.inv_std[j] = var_sum > 0.0 ? 1.0 / std::sqrt(var_sum) : 0.0;
    }
  } else if (kind == MetricKind::Cosine) {
    st.l2_norm.assign(c, 0.0);
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < b; ++r) s += x(r, j) * x(r, j);
      st.l2_norm[j] = std::sqrt(s);
    }
  } else if (kind == MetricKind::KlDivergence) {
    st.log_softmax = Matrix(b, c);
    for (std::size_t j = 0; j < c; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < b; ++r) mx = std::max(mx, x(r, j));
      double z = 0.0;
      for (std::size_t r = 0; r < b; ++r) z += std::exp(x(r, j) - mx);
      const double log_z = std::log(z) + mx;
      for (std::size_t r = 0; r < b; ++r) st.log_softmax(r, j) = x(r, j) - log_z;
    }
  }
  return st;
}

}  // namespace detail

// Builds the c x c matrix M under the chosen metric.
//   L_p:          1 / (||t_i - s_j||_p + eps)
//   Correlation:  Pearson with population moments; 0 if either side constant
//   Cosine:       <t_i, s_j> / (||t_i|| ||s_j|| + eps)
//   KL:           -KL(softmax(t_i) || softmax(s_j)), softmax over the batch
inline ConsistencyMatrix consistency_matrix(const PooledActivations& teacher,
                                            const PooledActivations& student,
                                            const ConsistencyMetric& metric = {}) {
  const Matrix& t = teacher.data;
  const Matrix& s = student.data;
  if (t.rows() != s.rows())
    fail(ErrorCategory::ShapeMismatch, "teacher/student batch counts differ");
  if (t.cols() != s.cols())
    fail(ErrorCategory::ShapeMismatch, "teacher/student channel counts differ");
  const std::size_t b = t.rows(), c = t.cols();
  if (metric.kind == MetricKind::Correlation && b < 2)
    fail(ErrorCategory::InsufficientSamples, "correlation needs at least 2 samples");
  if (!(metric.epsilon > 0.0))
    fail(ErrorCategory::ConfigError, "metric epsilon must be positive");

  ConsistencyMatrix out;
  out.metric = metric;
  out.sample_count = b;
  out.m = Matrix(c, c);

  const detail::ChannelStats ts = detail::channel_stats(t, metric.kind);
  const detail::ChannelStats ss = detail::channel_stats(s, metric.kind);

  // Each (i, j) entry is independent; rows are distributed over workers and
  // written to disjoint slots, so the result bytes do not depend on the
  // worker count.
  parallel_for(c, [&](std::size_t i) {
    for (std::size_t j = 0; j < c; ++j) {
      double v = 0.0;
      switch (metric.kind) {
        case MetricKind::L1: {
          double d = 0.0;
          for (std::size_t r = 0; r < b; ++r) d += std::abs(t(r, i) - s(r, j));
          v = 1.0 / (d + metric.epsilon);
          break;
        }
        case MetricKind::L2: {
          double d = 0.0;
          for (std::size_t r = 0; r < b; ++r) {
            const double e = t(r, i) - s(r, j);
            d += e * e;
          }
          v = 1.0 / (std::sqrt(d) + metric.epsilon);
          break;
        }
        case MetricKind::Correlation: {
          if (ts.inv_std[i] == 0.0 || ss.inv_std[j] == 0.0) {
            v = 0.0;  // constant channel carries no matching signal
          } else {
            double cov = 0.0, vt = 0.0, vs = 0.0;
            for (std::size_t r = 0; r < b; ++r) {
              const double dt = ts.centered(r, i), ds = ss.centered(r, j);
              cov += dt * ds;
              vt += dt * dt;
              vs += ds * ds;
            }
            v = std::clamp(cov / std::sqrt(vt * vs), -1.0, 1.0);
          }
          break;
        }
        case MetricKind::Cosine: {
          double dot = 0.0;
          for (std::size_t r = 0; r < b; ++r) dot += t(r, i) * s(r, j);
          v = dot / (ts.l2_norm[i] * ss.l2_norm[j] + metric.epsilon);
          v = std::clamp(v, -1.0, 1.0);
          break;
        }
        case MetricKind::KlDivergence: {
          // -sum_r p_r (log p_r - log q_r) with p = softmax(t_i).
          double kl = 0.0;
          for (std::size_t r = 0; r < b; ++r) {
            const double lp = ts.log_softmax(r, i);
            kl += std::exp(lp) * (lp - ss.log_softmax(r, j));
          }
          v = -std::max(kl, 0.0);
          break;
        }
      }
      out.m(i, j) = v;
    }
  });
  return out;
}

// Trace of M: the consistency score under the default channel order.
inline double consistency_score(const ConsistencyMatrix& m) {
  double g = 0.0;
  for (std::size_t i = 0; i < m.channels(); ++i) g += m.m(i, i);
  return g;
}

// Score under an index transform: sum_j M[map[j], j]. Equal to rebuilding M
// on transformed teacher features, without touching the features. Linear and
// residual transforms cannot be scored from M alone; use the feature
// overload below.
inline double consistency_score(const ConsistencyMatrix& m, const Transformation& t) {
  if (t.kind == TransformKind::Identity) return consistency_score(m);
  if (t.kind == TransformKind::Linear || t.kind == TransformKind::Residual)
    fail(ErrorCategory::ConfigError,
         "linear/residual transforms need feature recomputation; "
         "call consistency_score(teacher, student, metric, transform)");
  if (t.channels != m.channels())
    fail(ErrorCategory::ShapeMismatch, "transform channels != matrix channels");
  t.validate();
  double g = 0.0;
  for (std::size_t j = 0; j < m.channels(); ++j) g += m.m(t.map[j], j);
  return g;
}

// General route: transform the teacher features, rebuild M, take the trace.
inline double consistency_score(const PooledActivations& teacher,
                                const PooledActivations& student,
                                const ConsistencyMetric& metric,
                                const Transformation& t) {
  return consistency_score(consistency_matrix(apply_transform(t, teacher), student, metric));
}

}  // namespace kcd
