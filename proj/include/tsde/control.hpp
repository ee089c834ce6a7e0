#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <limits>
#include <optional>
#include <utility>

#include "tsde/errors.hpp"

namespace tsde {

// System parameter theta (d x n, d = n + m) whose transpose stacks [A, B].
struct SystemParams {
  Eigen::MatrixXd theta;
  int n = 0;
  int m = 0;

  int d() const { return n + m; }

  Eigen::MatrixXd a() const { return theta.topRows(n).transpose(); }
  Eigen::MatrixXd b() const { return theta.bottomRows(m).transpose(); }

  static SystemParams from_ab(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    const int n = static_cast<int>(A.rows());
    const int m = static_cast<int>(B.cols());
    if (A.cols() != n) throw DimensionError("A must be square");
    if (B.rows() != n) throw DimensionError("B must have n rows");
    SystemParams p;
    p.n = n;
    p.m = m;
    p.theta.resize(n + m, n);
    p.theta.topRows(n) = A.transpose();
    p.theta.bottomRows(m) = B.transpose();
    return p;
  }

  static SystemParams from_theta(Eigen::MatrixXd theta, int n, int m) {
    if (theta.rows() != n + m || theta.cols() != n)
      throw DimensionError("theta must be (n+m) x n");
    return SystemParams{std::move(theta), n, m};
  }
};

struct CostParams {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;

  CostParams(Eigen::MatrixXd q, Eigen::MatrixXd r) : Q(std::move(q)), R(std::move(r)) {
    check_spd(Q, "Q");
    check_spd(R, "R");
  }

 private:
  static void check_spd(const Eigen::MatrixXd& M, const char* name) {
    if (M.rows() != M.cols())
      throw DimensionError(std::string(name) + " must be square");
    if (!M.isApprox(M.transpose(), 1e-12))
      throw DimensionError(std::string(name) + " must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 0.0)
      throw DimensionError(std::string(name) + " must be positive definite");
  }
};

struct RiccatiSolution {
  Eigen::MatrixXd S;  // n x n, symmetric positive definite
  Eigen::MatrixXd G;  // m x n
  double J = 0.0;     // trace(S), optimal average cost per stage
  int iterations = 0;
  double residual = 0.0;
};

inline Eigen::MatrixXd gain_from_value(const SystemParams& params,
                                       const CostParams& cost,
                                       const Eigen::MatrixXd& S) {
  const Eigen::MatrixXd A = params.a();
  const Eigen::MatrixXd B = params.b();
  if (S.rows() != params.n || S.cols() != params.n)
    throw DimensionError("S must be n x n");
  if (cost.R.rows() != params.m) throw DimensionError("R must be m x m");
  const Eigen::MatrixXd BtS = B.transpose() * S;
  return -(cost.R + BtS * B).ldlt().solve(BtS * A);
}

namespace detail {

inline Eigen::MatrixXd riccati_rhs(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                   const CostParams& cost, const Eigen::MatrixXd& S) {
  const Eigen::MatrixXd BtS = B.transpose() * S;
  const Eigen::MatrixXd BtSA = BtS * A;
  return cost.Q + A.transpose() * S * A -
         BtSA.transpose() * (cost.R + BtS * B).ldlt().solve(BtSA);
}

}  // namespace detail

// Value iteration for the discrete Riccati fixed point, started at S = Q and
// symmetrized each step. A failure to converge is the normal signal that a
// sampled parameter is not stabilizable; callers treat it as a rejection.
inline std::optional<RiccatiSolution> try_solve_riccati(const SystemParams& params,
                                                        const CostParams& cost,
                                                        double tol = 1e-9,
                                                        int max_iter = 10000) {
  if (tol <= 0.0) throw std::invalid_argument("tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
  if (cost.Q.rows() != params.n || cost.R.rows() != params.m)
    throw DimensionError("cost dimensions do not match system");

  const Eigen::MatrixXd A = params.a();
  const Eigen::MatrixXd B = params.b();
  Eigen::MatrixXd S = cost.Q;
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::MatrixXd next = detail::riccati_rhs(A, B, cost, S);
    next = 0.5 * (next + next.transpose()).eval();
    if (!next.allFinite() || next.norm() > 1e100) return std::nullopt;
    const double delta = (next - S).cwiseAbs().maxCoeff();
    S = std::move(next);
    if (delta <= tol) {
      const double residual =
          (detail::riccati_rhs(A, B, cost, S) - S).cwiseAbs().maxCoeff();
      if (residual <= tol) {
        RiccatiSolution sol;
        sol.S = S;
        sol.G = gain_from_value(params, cost, S);
        sol.J = S.trace();
        sol.iterations = it;
        sol.residual = residual;
        return sol;
      }
    }
  }
  return std::nullopt;
}

inline RiccatiSolution solve_riccati(const SystemParams& params, const CostParams& cost,
                                     double tol = 1e-9, int max_iter = 10000) {
  auto sol = try_solve_riccati(params, cost, tol, max_iter);
  if (!sol) throw NoConvergenceError(max_iter, std::numeric_limits<double>::infinity());
  return *std::move(sol);
}

inline double spectral_radius(const Eigen::MatrixXd& M, double /*tol*/ = 1e-9) {
  if (M.rows() != M.cols()) throw DimensionError("spectral_radius needs a square matrix");
  if (!M.allFinite()) throw NonFiniteError("matrix has non-finite entries");
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline Eigen::MatrixXd closed_loop(const SystemParams& true_params,
                                   const Eigen::MatrixXd& G) {
  if (G.rows() != true_params.m || G.cols() != true_params.n)
    throw DimensionError("gain must be m x n");
  return true_params.a() + true_params.b() * G;
}

// Compact support restricting the Gaussian prior/posterior.
struct SupportSet {
  enum class Kind { SpectralRadiusBall, NormBall, All };

  Kind kind = Kind::All;
  // SpectralRadiusBall: membership checks rho(A_true + B_true G(theta)) <= delta.
  // This needs the true system, so it is a simulation-only construct.
  SystemParams true_params;
  double delta = 0.0;
  // NormBall: ||theta - center||_F < epsilon, strict.
  Eigen::MatrixXd center;
  double epsilon = 0.0;

  static SupportSet all() { return SupportSet{}; }

  static SupportSet spectral_radius_ball(SystemParams true_params, double delta) {
    if (delta <= 0.0) throw std::invalid_argument("delta must be positive");
    SupportSet s;
    s.kind = Kind::SpectralRadiusBall;
    s.true_params = std::move(true_params);
    s.delta = delta;
    return s;
  }

  static SupportSet norm_ball(Eigen::MatrixXd center, double epsilon) {
    if (epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
    SupportSet s;
    s.kind = Kind::NormBall;
    s.center = std::move(center);
    s.epsilon = epsilon;
    return s;
  }
};

inline bool support_contains(const SupportSet& omega, const SystemParams& theta,
                             const CostParams& cost, double riccati_tol = 1e-9,
                             int riccati_max_iter = 10000) {
  switch (omega.kind) {
    case SupportSet::Kind::All:
      return true;
    case SupportSet::Kind::NormBall:
      return (theta.theta - omega.center).norm() < omega.epsilon;
    case SupportSet::Kind::SpectralRadiusBall: {
      auto sol = try_solve_riccati(theta, cost, riccati_tol, riccati_max_iter);
      if (!sol) return false;
      return spectral_radius(closed_loop(omega.true_params, sol->G)) <= omega.delta;
    }
  }
  return false;
}

}  // namespace tsde
