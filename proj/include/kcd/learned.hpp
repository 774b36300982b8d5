#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kcd/error.hpp"
#include "kcd/matrix.hpp"
#include "kcd/rng.hpp"
#include "kcd/tensor.hpp"
#include "kcd/transform.hpp"

namespace kcd {

struct FitConfig {
  double ridge_lambda = 1e-6;  // linear fit
  double lr = 1e-2;            // residual fit
  std::size_t epochs = 500;    // residual fit
  std::size_t hidden = 0;      // residual hidden width, 0 = channel count
  std::uint64_t seed = 0;

  void validate() const {
    if (ridge_lambda < 0.0) fail(ErrorCategory::ConfigError, "ridge_lambda must be >= 0");
    if (!(lr > 0.0)) fail(ErrorCategory::ConfigError, "lr must be positive");
    if (epochs < 1) fail(ErrorCategory::ConfigError, "epochs must be >= 1");
  }
};

struct LinearFit {
  Transformation transform;
  double objective = 0.0;  // ||X_T W - X_S||_F^2 + lambda ||W||_F^2
};

struct ResidualFit {
  Transformation transform;
  std::vector<double> loss_curve;  // loss after each accepted step
};

namespace detail {

inline void require_same_shape(const Matrix& t, const Matrix& s) {
  if (t.rows() != s.rows()) fail(ErrorCategory::ShapeMismatch, "batch counts differ");
  if (t.cols() != s.cols()) fail(ErrorCategory::ShapeMismatch, "channel counts differ");
  if (t.rows() < 1) fail(ErrorCategory::ShapeMismatch, "empty feature matrix");
}

}  // namespace detail

// Exact ridge solution of min_W ||X_T W - X_S||_F^2 + lambda ||W||_F^2 via
// the normal equations, W = (X_T^T X_T + lambda I)^-1 X_T^T X_S.
inline LinearFit fit_linear_transform(const PooledActivations& teacher,
                                      const PooledActivations& student,
                                      const FitConfig& cfg = {}) {
  cfg.validate();
  const Matrix& xt = teacher.data;
  const Matrix& xs = student.data;
  detail::require_same_shape(xt, xs);
  const std::size_t c = xt.cols();

  Matrix g = gram(xt);
  for (std::size_t i = 0; i < c; ++i) g(i, i) += cfg.ridge_lambda;
  const Matrix rhs = matmul(transpose(xt), xs);
  Matrix w;
  try {
    w = cholesky_solve(g, rhs);
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::SingularSystem)
      fail(ErrorCategory::SingularSystem,
           "teacher Gram matrix is singular; set ridge_lambda > 0");
    throw;
  }

  LinearFit fit;
  fit.transform.kind = TransformKind::Linear;
  fit.transform.channels = c;
  fit.transform.linear = w;
  fit.transform.provenance.strategy = "fc";
  fit.transform.provenance.seed = cfg.seed;
  Matrix resid = matmul(xt, w);
  for (std::size_t i = 0; i < resid.size(); ++i) resid.data()[i] -= xs.data()[i];
  fit.objective = frobenius_sq(resid) + cfg.ridge_lambda * frobenius_sq(w);
  fit.transform.validate();
  return fit;
}

namespace residual_detail {

struct Params {
  Matrix w1;                // c x hidden
  std::vector<double> b1;   // hidden
  Matrix w2;                // hidden x c
  std::vector<double> b2;   // c
};

struct Grads {
  Matrix w1;
  std::vector<double> b1;
  Matrix w2;
  std::vector<double> b2;
};

// Mean squared error of y = x + relu(x W1 + b1) W2 + b2 against the target,
// with gradients for every parameter. Backprop is hand-written; the test
// suite checks it against central finite differences.
inline double loss_and_grad(const Params& p, const Matrix& x, const Matrix& target,
                            Grads* grads) {
  const std::size_t b = x.rows(), c = x.cols(), hidden = p.w1.cols();
  const double scale = 1.0 / static_cast<double>(b * c);

  Matrix z(b, hidden);  // pre-activation
  Matrix a(b, hidden);  // relu(z)
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t k = 0; k < hidden; ++k) {
      double acc = p.b1[k];
      for (std::size_t i = 0; i < c; ++i) acc += x(r, i) * p.w1(i, k);
      z(r, k) = acc;
      a(r, k) = acc > 0.0 ? acc : 0.0;
    }

  double loss = 0.0;
  Matrix dy(b, c);  // d loss / d y
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      double y = x(r, j) + p.b2[j];
      for (std::size_t k = 0; k < hidden; ++k) y += a(r, k) * p.w2(k, j);
      const double e = y - target(r, j);
      loss += e * e;
      dy(r, j) = 2.0 * e * scale;
    }
  loss *= scale;
  if (grads == nullptr) return loss;

  grads->w1 = Matrix(c, hidden);
  grads->b1.assign(hidden, 0.0);
  grads->w2 = Matrix(hidden, c);
  grads->b2.assign(c, 0.0);
  Matrix dz(b, hidden);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < c; ++j) grads->b2[j] += dy(r, j);
    for (std::size_t k = 0; k < hidden; ++k) {
      double da = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        grads->w2(k, j) += a(r, k) * dy(r, j);
        da += dy(r, j) * p.w2(k, j);
      }
      dz(r, k) = z(r, k) > 0.0 ? da : 0.0;
      grads->b1[k] += dz(r, k);
    }
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t k = 0; k < hidden; ++k) grads->w1(i, k) += x(r, i) * dz(r, k);
  }
  return loss;
}

}  // namespace residual_detail

// Trains y = x + W2 relu(W1 x + b1) + b2 by full-batch gradient descent on
// the MSE to the student features. W2 and b2 start at zero so the initial
// map is the identity; steps that would raise the loss are retried at half
// the learning rate, so the recorded curve is nonincreasing.
inline ResidualFit fit_residual_transform(const PooledActivations& teacher,
                                          const PooledActivations& student,
                                          const FitConfig& cfg = {}) {
  cfg.validate();
  const Matrix& xt = teacher.data;
  const Matrix& xs = student.data;
  detail::require_same_shape(xt, xs);
  if (xt.rows() < 2)
    fail(ErrorCategory::InsufficientSamples, "residual fit needs at least 2 samples");
  const std::size_t c = xt.cols();
  const std::size_t hidden = cfg.hidden == 0 ? c : cfg.hidden;

  residual_detail::Params p;
  p.w1 = Matrix(c, hidden);
  p.b1.assign(hidden, 0.0);
  p.w2 = Matrix(hidden, c);
  p.b2.assign(c, 0.0);
  Rng rng(cfg.seed);
  for (double& v : p.w1.data()) v = rng.normal(0.0, 0.01);

  residual_detail::Grads g;
  double lr = cfg.lr;
  double loss = residual_detail::loss_and_grad(p, xt, xs, &g);
  if (!std::isfinite(loss))
    fail(ErrorCategory::DivergenceError, "non-finite loss at initialization");

  ResidualFit fit;
  fit.loss_curve.reserve(cfg.epochs + 1);
  fit.loss_curve.push_back(loss);
  residual_detail::Params candidate = p;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    bool accepted = false;
    while (lr > 1e-15) {
      candidate = p;
      for (std::size_t i = 0; i < p.w1.size(); ++i)
        candidate.w1.data()[i] -= lr * g.w1.data()[i];
      for (std::size_t i = 0; i < hidden; ++i) candidate.b1[i] -= lr * g.b1[i];
      for (std::size_t i = 0; i < p.w2.size(); ++i)
        candidate.w2.data()[i] -= lr * g.w2.data()[i];
      for (std::size_t i = 0; i < c; ++i) candidate.b2[i] -= lr * g.b2[i];
      residual_detail::Grads g_next;
      const double next = residual_detail::loss_and_grad(candidate, xt, xs, &g_next);
      if (std::isfinite(next) && next <= loss) {
        p = candidate;
        g = g_next;
        loss = next;
        accepted = true;
        break;
      }
      lr *= 0.5;
    }
    if (!accepted) break;  // step size exhausted, already at a minimum
    fit.loss_curve.push_back(loss);
  }

  fit.transform.kind = TransformKind::Residual;
  fit.transform.channels = c;
  fit.transform.res_w1 = std::move(p.w1);
  fit.transform.res_b1 = std::move(p.b1);
  fit.transform.res_w2 = std::move(p.w2);
  fit.transform.res_b2 = std::move(p.b2);
  fit.transform.provenance.strategy = "res";
  fit.transform.provenance.seed = cfg.seed;
  fit.transform.validate();
  return fit;
}

}  // namespace kcd
