#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "tsde/bayes.hpp"
#include "tsde/control.hpp"
#include "tsde/errors.hpp"
#include "tsde/rng.hpp"

namespace tsde {

inline double stage_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                         const CostParams& cost) {
  if (x.size() != cost.Q.rows() || u.size() != cost.R.rows())
    throw DimensionError("stage_cost dimension mismatch");
  return x.dot(cost.Q * x) + u.dot(cost.R * u);
}

struct JumpSchedule {
  enum class Kind { None, FixedUniform, Bernoulli };
  Kind kind = Kind::None;
  std::vector<long> change_points;  // sorted, subset of {2,...,T}
  double p = 0.0;                   // Bernoulli only
};

inline JumpSchedule make_none_schedule() { return JumpSchedule{}; }

// Draws floor(T^alpha) distinct change points uniformly from {2,...,T}.
inline JumpSchedule make_fixed_uniform_schedule(long T, double alpha, RngStream& rng) {
  if (T < 1) throw std::invalid_argument("T must be >= 1");
  if (alpha < 0.0 || alpha >= 1.0) throw std::invalid_argument("alpha must be in [0,1)");
  const long count = static_cast<long>(std::floor(std::pow(static_cast<double>(T), alpha)));
  if (count > T - 1)
    throw ConfigError("jump count floor(T^alpha) exceeds T-1 candidate change points");
  std::vector<long> pool(static_cast<std::size_t>(T - 1));
  std::iota(pool.begin(), pool.end(), 2L);
  // Partial Fisher-Yates for the first `count` positions.
  for (long i = 0; i < count; ++i) {
    const auto j = i + static_cast<long>(rng.next_below(static_cast<std::uint64_t>(pool.size() - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  JumpSchedule s;
  s.kind = JumpSchedule::Kind::FixedUniform;
  s.change_points.assign(pool.begin(), pool.begin() + count);
  std::sort(s.change_points.begin(), s.change_points.end());
  return s;
}

inline JumpSchedule make_bernoulli_schedule(double p) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("p must be in [0,1]");
  JumpSchedule s;
  s.kind = JumpSchedule::Kind::Bernoulli;
  s.p = p;
  return s;
}

// Per-run accounting: stage costs, oracle costs, regret, and the
// diagnostics the analysis cares about (X_T, K_T, episode structure).
struct EpisodeEvent {
  int k = 0;
  long t_k = 0;
  long T_prev = 0;
  double log_det_at_start = 0.0;
  int sampling_attempts = 0;
  double true_closed_loop_radius = 0.0;  // rho(A_true + B_true G_k) at episode start
};

struct RegretRecord {
  std::vector<double> stage_costs;   // c_t, t = 1..T
  std::vector<double> oracle_costs;  // J(theta_t)
  std::vector<double> state_norms;   // ||x_t||
  double cumulative_regret = 0.0;
  double max_state_norm = 0.0;  // X_T
  int episode_count = 0;        // K_T
  std::vector<EpisodeEvent> episodes;
  std::vector<long> reinit_times;
  std::vector<long> jump_times;
  long sampling_rejections = 0;
  bool partial_final_episode = false;
  long horizon = 0;
  std::uint64_t master_seed = 0;
  std::uint64_t run_index = 0;
  // Optional per-step trace for replay tests: log det Sigma_t for t = 1..T.
  std::vector<double> log_det_trace;

  double recompute_regret() const {
    double total = 0.0;
    for (std::size_t i = 0; i < stage_costs.size(); ++i)
      total += stage_costs[i] - oracle_costs[i];
    return total;
  }
};

// Ground-truth linear plant with N(0, I) noise and an optional jump process
// that redraws theta_true from the prior restricted to Omega_1.
class Plant {
 public:
  Plant(SystemParams theta_true, CostParams cost, JumpSchedule schedule,
        PriorSpec redraw_prior, RngStream noise, RngStream jumps,
        bool zero_noise = false)
      : theta_true_(std::move(theta_true)),
        cost_(std::move(cost)),
        schedule_(std::move(schedule)),
        redraw_prior_(std::move(redraw_prior)),
        noise_(std::move(noise)),
        jumps_(std::move(jumps)),
        zero_noise_(zero_noise),
        x_(Eigen::VectorXd::Zero(theta_true_.n)) {
    oracle_j_ = solve_riccati(theta_true_, cost_).J;
  }

  int n() const { return theta_true_.n; }
  int m() const { return theta_true_.m; }
  long t() const { return t_; }
  const Eigen::VectorXd& x() const { return x_; }
  const SystemParams& theta_true() const { return theta_true_; }
  double oracle_cost() const { return oracle_j_; }
  const std::vector<long>& realized_jumps() const { return realized_jumps_; }

  void step(const Eigen::VectorXd& u) {
    if (u.size() != theta_true_.m) throw DimensionError("control dimension mismatch");
    if (!u.allFinite()) throw NonFiniteError("control is not finite");
    Eigen::VectorXd w = Eigen::VectorXd::Zero(theta_true_.n);
    if (!zero_noise_)
      for (int i = 0; i < theta_true_.n; ++i) w(i) = noise_.gaussian();
    Eigen::VectorXd z(theta_true_.d());
    z << x_, u;
    x_ = theta_true_.theta.transpose() * z + w;
    if (!x_.allFinite()) throw NonFiniteError("plant state diverged to non-finite");
    t_ += 1;
    if (jump_due()) apply_jump();
  }

 private:
  bool jump_due() {
    switch (schedule_.kind) {
      case JumpSchedule::Kind::None:
        return false;
      case JumpSchedule::Kind::FixedUniform:
        return next_cp_ < schedule_.change_points.size() &&
               schedule_.change_points[next_cp_] == t_;
      case JumpSchedule::Kind::Bernoulli:
        return jumps_.uniform() < schedule_.p;
    }
    return false;
  }

  void apply_jump() {
    if (schedule_.kind == JumpSchedule::Kind::FixedUniform) ++next_cp_;
    auto belief = make_posterior(redraw_prior_.theta_hat_1, redraw_prior_.sigma_1);
    auto drawn = sample_parameter(belief, redraw_prior_.omega, cost_, jumps_);
    if (!drawn) throw SamplingExhaustedError(10000);
    theta_true_ = std::move(drawn->params);
    oracle_j_ = drawn->riccati.J;
    realized_jumps_.push_back(t_);
  }

  SystemParams theta_true_;
  CostParams cost_;
  JumpSchedule schedule_;
  PriorSpec redraw_prior_;
  RngStream noise_;
  RngStream jumps_;
  bool zero_noise_;
  Eigen::VectorXd x_;
  long t_ = 1;
  double oracle_j_ = 0.0;
  std::size_t next_cp_ = 0;
  std::vector<long> realized_jumps_;
};

// Non-learning baseline: applies the optimal gain of the current true
// parameter every step. Its long-run average cost converges to J(theta).
inline RegretRecord run_oracle_baseline(Plant& plant, const CostParams& cost, long T) {
  if (T < 1) throw std::invalid_argument("T must be >= 1");
  RegretRecord rec;
  rec.horizon = T;
  rec.stage_costs.reserve(static_cast<std::size_t>(T));
  rec.oracle_costs.reserve(static_cast<std::size_t>(T));

  Eigen::MatrixXd gain;
  std::size_t jumps_seen = 0;
  bool have_gain = false;
  for (long t = 1; t <= T; ++t) {
    if (!have_gain || plant.realized_jumps().size() != jumps_seen) {
      gain = solve_riccati(plant.theta_true(), cost).G;
      jumps_seen = plant.realized_jumps().size();
      have_gain = true;
    }
    const Eigen::VectorXd u = gain * plant.x();
    const double c = stage_cost(plant.x(), u, cost);
    rec.max_state_norm = std::max(rec.max_state_norm, plant.x().norm());
    rec.state_norms.push_back(plant.x().norm());
    rec.stage_costs.push_back(c);
    rec.oracle_costs.push_back(plant.oracle_cost());
    rec.cumulative_regret += c - plant.oracle_cost();
    plant.step(u);
  }
  rec.jump_times = plant.realized_jumps();
  return rec;
}

}  // namespace tsde
