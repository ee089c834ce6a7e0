#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "tsde/control.hpp"
#include "tsde/errors.hpp"
#include "tsde/rng.hpp"

namespace tsde {

namespace detail {

inline Eigen::MatrixXd cholesky_or_jitter(const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  // One retry after re-symmetrizing with a small diagonal jitter.
  Eigen::MatrixXd fixed = 0.5 * (sigma + sigma.transpose());
  fixed.diagonal().array() += 1e-12;
  llt.compute(fixed);
  if (llt.info() != Eigen::Success)
    throw SingularCovarianceError("covariance is not positive definite");
  return llt.matrixL();
}

inline double log_det_spd(const Eigen::MatrixXd& sigma) {
  const Eigen::MatrixXd L = cholesky_or_jitter(sigma);
  return 2.0 * L.diagonal().array().log().sum();
}

}  // namespace detail

// Gaussian belief over theta: one mean per column, one shared covariance.
// log det(sigma) is tracked incrementally and reconciled against a fresh
// Cholesky factorization every 1000 updates.
struct PosteriorState {
  Eigen::MatrixXd theta_hat;  // d x n
  Eigen::MatrixXd sigma;      // d x d
  double log_det_sigma = 0.0;
  long t = 1;
  long updates_since_reconcile = 0;

  int d() const { return static_cast<int>(sigma.rows()); }
  int n() const { return static_cast<int>(theta_hat.cols()); }
};

inline PosteriorState make_posterior(Eigen::MatrixXd theta_hat, Eigen::MatrixXd sigma,
                                     long t = 1) {
  if (sigma.rows() != sigma.cols() || sigma.rows() != theta_hat.rows())
    throw DimensionError("sigma must be d x d with d = rows(theta_hat)");
  PosteriorState s;
  s.log_det_sigma = detail::log_det_spd(sigma);
  s.theta_hat = std::move(theta_hat);
  s.sigma = std::move(sigma);
  s.t = t;
  return s;
}

struct PriorSpec {
  Eigen::MatrixXd theta_hat_1;
  Eigen::MatrixXd sigma_1;
  SupportSet omega;
};

inline void posterior_update_inplace(PosteriorState& state, const Eigen::VectorXd& z,
                                     const Eigen::VectorXd& x_next) {
  if (z.size() != state.d()) throw DimensionError("z must have dimension d");
  if (x_next.size() != state.n()) throw DimensionError("x_next must have dimension n");
  if (!z.allFinite() || !x_next.allFinite())
    throw NonFiniteError("posterior_update inputs must be finite");

  const Eigen::VectorXd sz = state.sigma * z;
  const double zsz = z.dot(sz);
  const double denom = 1.0 + zsz;
  const Eigen::RowVectorXd innovation =
      (x_next.transpose() - z.transpose() * state.theta_hat) / denom;
  state.theta_hat.noalias() += sz * innovation;
  state.sigma.noalias() -= (sz * sz.transpose()) / denom;
  state.sigma = 0.5 * (state.sigma + state.sigma.transpose()).eval();
  state.log_det_sigma -= std::log1p(zsz);
  state.t += 1;

  if (++state.updates_since_reconcile >= 1000) {
    const double fresh = detail::log_det_spd(state.sigma);
    if (std::abs(fresh - state.log_det_sigma) > 1e-6)
      throw SingularCovarianceError("log det drifted from Cholesky reconciliation");
    state.log_det_sigma = fresh;
    state.updates_since_reconcile = 0;
  }
}

inline PosteriorState posterior_update(PosteriorState state, const Eigen::VectorXd& z,
                                       const Eigen::VectorXd& x_next) {
  posterior_update_inplace(state, z, x_next);
  return state;
}

inline Eigen::MatrixXd information_matrix(const PosteriorState& state) {
  Eigen::LLT<Eigen::MatrixXd> llt(state.sigma);
  if (llt.info() != Eigen::Success)
    throw SingularCovarianceError("covariance not factorizable");
  const Eigen::MatrixXd inv =
      llt.solve(Eigen::MatrixXd::Identity(state.d(), state.d()));
  const double cond_estimate = state.sigma.norm() * inv.norm();
  if (cond_estimate > 1e12)
    throw SingularCovarianceError("covariance condition estimate exceeds 1e12");
  return 0.5 * (inv + inv.transpose());
}

struct SampledParameter {
  SystemParams params;
  RiccatiSolution riccati;
  int attempts = 0;
};

// Draw theta with independent columns theta(i) ~ N(theta_hat(i), sigma),
// rejecting until the draw lies in omega and admits a Riccati solution.
// The solved Riccati is returned so the scheduler never re-solves it.
inline std::optional<SampledParameter> sample_parameter(
    const PosteriorState& belief, const SupportSet& omega, const CostParams& cost,
    RngStream& rng, int max_attempts = 10000, double riccati_tol = 1e-9,
    int riccati_max_iter = 10000) {
  if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  const int d = belief.d();
  const int n = belief.n();
  const int m = d - n;
  const Eigen::MatrixXd L = detail::cholesky_or_jitter(belief.sigma);

  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    Eigen::MatrixXd xi(d, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < d; ++i) xi(i, j) = rng.gaussian();
    SystemParams theta =
        SystemParams::from_theta(belief.theta_hat + L * xi, n, m);
    if (!support_contains(omega, theta, cost, riccati_tol, riccati_max_iter)) continue;
    auto sol = try_solve_riccati(theta, cost, riccati_tol, riccati_max_iter);
    if (!sol) continue;
    return SampledParameter{std::move(theta), *std::move(sol), attempt};
  }
  return std::nullopt;
}

// One-shot normal-equations posterior; the independent oracle for the
// recursive updates.
inline PosteriorState batch_posterior(
    const PriorSpec& prior,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& history) {
  const int d = static_cast<int>(prior.sigma_1.rows());
  Eigen::LLT<Eigen::MatrixXd> prior_llt(prior.sigma_1);
  if (prior_llt.info() != Eigen::Success)
    throw SingularCovarianceError("prior covariance not positive definite");
  Eigen::MatrixXd info = prior_llt.solve(Eigen::MatrixXd::Identity(d, d));
  Eigen::MatrixXd rhs = info * prior.theta_hat_1;
  for (const auto& [z, x_next] : history) {
    info.noalias() += z * z.transpose();
    rhs.noalias() += z * x_next.transpose();
  }
  Eigen::LLT<Eigen::MatrixXd> info_llt(0.5 * (info + info.transpose()));
  if (info_llt.info() != Eigen::Success)
    throw SingularCovarianceError("information matrix not positive definite");
  Eigen::MatrixXd sigma = info_llt.solve(Eigen::MatrixXd::Identity(d, d));
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  PosteriorState out = make_posterior(sigma * rhs, sigma,
                                      1 + static_cast<long>(history.size()));
  return out;
}

}  // namespace tsde
