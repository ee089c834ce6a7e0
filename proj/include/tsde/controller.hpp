#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <utility>

#include "tsde/bayes.hpp"
#include "tsde/control.hpp"
#include "tsde/errors.hpp"
#include "tsde/rng.hpp"
#include "tsde/sim.hpp"

namespace tsde {

constexpr double kLogHalf = -0.6931471805599453;  // log(0.5)

struct EpisodeState {
  int k = 0;
  long t_k = 0;
  long T_prev = 1;  // T_0 = 1 by convention
  double log_det_at_start = 0.0;
  SystemParams sampled_theta;
  Eigen::MatrixXd gain;
  RiccatiSolution riccati;
};

struct ReinitState {
  int l = 1;
  long s_l = 1;
  double q = 1.0;
};

enum class Variant { Stationary, TimeVarying };

struct ControllerConfig {
  PriorSpec prior;
  CostParams cost;
  Variant variant = Variant::Stationary;
  double q = 1.0;  // TimeVarying only
  int max_sample_attempts = 10000;
  double riccati_tol = 1e-9;
  int riccati_max_iter = 10000;
};

// Episode stopping rule: linear length growth cap, or the determinant of the
// sample covariance halving since the episode started. Strict comparisons,
// evaluated in log space.
inline bool should_end_episode(long t, const EpisodeState& ep, double log_det_now) {
  return t > ep.t_k + ep.T_prev || log_det_now < kLogHalf + ep.log_det_at_start;
}

// Re-initialization rule: non-strict, t >= s_l + l^q with l^q in floating point.
inline bool should_reinit(long t, const ReinitState& rs) {
  return static_cast<double>(t) >= static_cast<double>(rs.s_l) +
                                       std::pow(static_cast<double>(rs.l), rs.q);
}

inline Eigen::VectorXd next_control(const Eigen::VectorXd& x, const EpisodeState& ep) {
  if (x.size() != ep.gain.cols()) throw DimensionError("state dimension mismatch");
  return ep.gain * x;
}

struct RunOptions {
  bool record_log_det_trace = false;
};

namespace detail {

// Sample a new episode parameter; on exhaustion fall back to the previous
// episode's draw, or to the prior mean for the very first episode.
inline SampledParameter sample_episode_parameter(const ControllerConfig& cfg,
                                                 const PosteriorState& posterior,
                                                 const EpisodeState* prev,
                                                 RngStream& rng,
                                                 long* rejection_counter) {
  auto drawn = sample_parameter(posterior, cfg.prior.omega, cfg.cost, rng,
                                cfg.max_sample_attempts, cfg.riccati_tol,
                                cfg.riccati_max_iter);
  if (drawn) {
    *rejection_counter += drawn->attempts - 1;
    return *std::move(drawn);
  }
  *rejection_counter += cfg.max_sample_attempts;
  if (prev)
    return SampledParameter{prev->sampled_theta, prev->riccati,
                            cfg.max_sample_attempts};
  const int n = posterior.n();
  const int m = posterior.d() - n;
  SystemParams mean = SystemParams::from_theta(cfg.prior.theta_hat_1, n, m);
  if (!support_contains(cfg.prior.omega, mean, cfg.cost, cfg.riccati_tol,
                        cfg.riccati_max_iter))
    throw SamplingExhaustedError(cfg.max_sample_attempts);
  return SampledParameter{mean, solve_riccati(mean, cfg.cost, cfg.riccati_tol,
                                              cfg.riccati_max_iter),
                          cfg.max_sample_attempts};
}

}  // namespace detail

// The full learning control loop: sample at episode starts, act with the
// sampled gain, update the posterior each step, end episodes per the
// two-criterion rule, and (TimeVarying) re-initialize on the l^q schedule.
inline RegretRecord run_controller(const ControllerConfig& cfg, Plant& plant, long T,
                                   RngStream& sampler_rng,
                                   const RunOptions& opts = {}) {
  if (T < 1) throw std::invalid_argument("T must be >= 1");
  const int n = plant.n();
  const int m = plant.m();

  RegretRecord rec;
  rec.horizon = T;
  rec.stage_costs.reserve(static_cast<std::size_t>(T));
  rec.oracle_costs.reserve(static_cast<std::size_t>(T));

  PosteriorState posterior = make_posterior(cfg.prior.theta_hat_1, cfg.prior.sigma_1);
  ReinitState reinit{1, 1, cfg.q};

  long t = 1;
  long t_k = 0;
  std::optional<EpisodeState> episode;

  while (t <= T) {
    EpisodeState ep;
    ep.k = episode ? episode->k + 1 : 1;
    ep.T_prev = t - t_k;
    t_k = t;
    ep.t_k = t_k;
    ep.log_det_at_start = posterior.log_det_sigma;
    SampledParameter drawn = detail::sample_episode_parameter(
        cfg, posterior, episode ? &*episode : nullptr, sampler_rng,
        &rec.sampling_rejections);
    ep.sampled_theta = std::move(drawn.params);
    ep.riccati = std::move(drawn.riccati);
    ep.gain = ep.riccati.G;

    EpisodeEvent ev;
    ev.k = ep.k;
    ev.t_k = ep.t_k;
    ev.T_prev = ep.T_prev;
    ev.log_det_at_start = ep.log_det_at_start;
    ev.sampling_attempts = drawn.attempts;
    ev.true_closed_loop_radius =
        spectral_radius(closed_loop(plant.theta_true(), ep.gain));
    rec.episodes.push_back(ev);
    episode = std::move(ep);

    while (t <= T && !should_end_episode(t, *episode, posterior.log_det_sigma)) {
      if (cfg.variant == Variant::TimeVarying && should_reinit(t, reinit)) {
        // The reinit backdates the episode start so the next episode sees
        // T_{k-1} = 1, and resets the belief to the prior.
        t_k = t - 1;
        posterior = make_posterior(cfg.prior.theta_hat_1, cfg.prior.sigma_1);
        reinit.s_l = t;
        reinit.l += 1;
        rec.reinit_times.push_back(t);
        break;
      }
      if (opts.record_log_det_trace)
        rec.log_det_trace.push_back(posterior.log_det_sigma);
      const Eigen::VectorXd x = plant.x();
      const Eigen::VectorXd u = next_control(x, *episode);
      const double c = stage_cost(x, u, cfg.cost);
      rec.max_state_norm = std::max(rec.max_state_norm, x.norm());
      rec.state_norms.push_back(x.norm());
      rec.stage_costs.push_back(c);
      rec.oracle_costs.push_back(plant.oracle_cost());
      rec.cumulative_regret += c - plant.oracle_cost();
      plant.step(u);
      Eigen::VectorXd z(n + m);
      z << x, u;
      posterior_update_inplace(posterior, z, plant.x());
      t += 1;
    }
  }

  rec.episode_count = episode ? episode->k : 0;
  rec.partial_final_episode =
      episode && !should_end_episode(t, *episode, posterior.log_det_sigma);
  rec.jump_times = plant.realized_jumps();
  return rec;
}

}  // namespace tsde
