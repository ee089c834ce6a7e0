#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tsde/control.hpp"
#include "tsde/errors.hpp"

namespace tsde {

inline constexpr const char* kLibraryVersion = "0.1.0";

struct SupportSpec {
  enum class Kind { SpectralRadiusBall, NormBall, All };
  Kind kind = Kind::All;
  double delta = 0.0;    // SpectralRadiusBall
  double epsilon = 0.0;  // NormBall
  // NormBall center defaults to the prior mean when unset.
  std::optional<Eigen::MatrixXd> center;
};

struct TrueSystemSpec {
  enum class Kind { Explicit, DrawFromPrior };
  Kind kind = Kind::Explicit;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
};

struct VariantSpec {
  enum class Kind { Stationary, TimeVarying };
  Kind kind = Kind::Stationary;
  double alpha = 0.0;
  double q = 0.0;
  bool q_auto = true;  // q = 2(1-alpha)/(1+2alpha)
};

struct ExperimentConfig {
  std::string scenario = "custom";
  int n = 0;
  int m = 0;
  TrueSystemSpec true_system;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::MatrixXd theta_hat_1;  // d x n
  Eigen::MatrixXd sigma_1;      // d x d
  SupportSpec support;
  VariantSpec variant;
  long horizon = 100000;
  int num_runs = 100;
  std::uint64_t master_seed = 1;
  std::string out_dir = "out";
  bool assumption_violating = false;  // delta >= 1 presets
  int max_sample_attempts = 10000;
  double riccati_tol = 1e-9;
  int riccati_max_iter = 10000;

  int d() const { return n + m; }

  double resolved_q() const {
    if (variant.kind != VariantSpec::Kind::TimeVarying) return 0.0;
    if (variant.q_auto)
      return 2.0 * (1.0 - variant.alpha) / (1.0 + 2.0 * variant.alpha);
    return variant.q;
  }

  Eigen::MatrixXd support_center() const {
    return support.center ? *support.center : theta_hat_1;
  }
};

inline void validate_config(const ExperimentConfig& cfg) {
  std::vector<std::string> errs;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) errs.push_back(msg);
  };
  check(cfg.n >= 1, "n: must be >= 1");
  check(cfg.m >= 1, "m: must be >= 1");
  check(cfg.horizon >= 1, "horizon: must be >= 1");
  check(cfg.num_runs >= 1, "num_runs: must be >= 1");
  const int d = cfg.n + cfg.m;
  check(cfg.Q.rows() == cfg.n && cfg.Q.cols() == cfg.n, "Q: must be n x n");
  check(cfg.R.rows() == cfg.m && cfg.R.cols() == cfg.m, "R: must be m x m");
  check(cfg.theta_hat_1.rows() == d && cfg.theta_hat_1.cols() == cfg.n,
        "prior.theta_hat: must be (n+m) x n");
  check(cfg.sigma_1.rows() == d && cfg.sigma_1.cols() == d,
        "prior.sigma: must be (n+m) x (n+m)");
  if (cfg.true_system.kind == TrueSystemSpec::Kind::Explicit) {
    check(cfg.true_system.A.rows() == cfg.n && cfg.true_system.A.cols() == cfg.n,
          "true_system.A: must be n x n");
    check(cfg.true_system.B.rows() == cfg.n && cfg.true_system.B.cols() == cfg.m,
          "true_system.B: must be n x m");
  } else {
    check(cfg.support.kind != SupportSpec::Kind::SpectralRadiusBall,
          "true_system: draw_from_prior cannot be combined with a "
          "spectral-radius-ball support (it references the true system)");
  }
  if (cfg.support.kind == SupportSpec::Kind::SpectralRadiusBall)
    check(cfg.support.delta > 0.0, "support.delta: must be > 0");
  if (cfg.support.kind == SupportSpec::Kind::NormBall) {
    check(cfg.support.epsilon > 0.0, "support.epsilon: must be > 0");
    if (cfg.support.center)
      check(cfg.support.center->rows() == d && cfg.support.center->cols() == cfg.n,
            "support.center: must be (n+m) x n");
  }
  if (cfg.variant.kind == VariantSpec::Kind::TimeVarying) {
    check(cfg.variant.alpha >= 0.0 && cfg.variant.alpha < 1.0,
          "variant.alpha: must be in [0,1)");
    check(cfg.resolved_q() > 0.0, "variant.q: must be > 0");
  }
  if (!errs.empty()) {
    std::ostringstream oss;
    oss << "invalid config:";
    for (const auto& e : errs) oss << "\n  - " << e;
    throw ConfigError(oss.str());
  }
}

// ---- JSON (de)serialization -------------------------------------------

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const char* field) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ConfigError(std::string(field) + ": expected a 2-D array of numbers");
  const auto rows = j.size();
  const auto cols = j[0].size();
  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw ConfigError(std::string(field) + ": ragged matrix rows");
    for (std::size_t c = 0; c < cols; ++c)
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          j[i][c].get<double>();
  }
  return M;
}

}  // namespace detail

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["scenario"] = cfg.scenario;
  j["n"] = cfg.n;
  j["m"] = cfg.m;
  if (cfg.true_system.kind == TrueSystemSpec::Kind::Explicit) {
    j["true_system"] = {{"kind", "explicit"},
                        {"A", detail::matrix_to_json(cfg.true_system.A)},
                        {"B", detail::matrix_to_json(cfg.true_system.B)}};
  } else {
    j["true_system"] = {{"kind", "draw_from_prior"}};
  }
  j["cost"] = {{"Q", detail::matrix_to_json(cfg.Q)},
               {"R", detail::matrix_to_json(cfg.R)}};
  nlohmann::json prior;
  prior["theta_hat"] = detail::matrix_to_json(cfg.theta_hat_1);
  prior["sigma"] = detail::matrix_to_json(cfg.sigma_1);
  nlohmann::json support;
  switch (cfg.support.kind) {
    case SupportSpec::Kind::All:
      support["kind"] = "all";
      break;
    case SupportSpec::Kind::SpectralRadiusBall:
      support["kind"] = "spectral_radius_ball";
      support["delta"] = cfg.support.delta;
      break;
    case SupportSpec::Kind::NormBall:
      support["kind"] = "norm_ball";
      support["epsilon"] = cfg.support.epsilon;
      if (cfg.support.center)
        support["center"] = detail::matrix_to_json(*cfg.support.center);
      break;
  }
  prior["support"] = std::move(support);
  j["prior"] = std::move(prior);
  if (cfg.variant.kind == VariantSpec::Kind::Stationary) {
    j["variant"] = {{"kind", "stationary"}};
  } else {
    j["variant"] = {{"kind", "time_varying"},
                    {"alpha", cfg.variant.alpha},
                    {"q", cfg.resolved_q()},
                    {"q_auto", cfg.variant.q_auto}};
  }
  j["horizon"] = cfg.horizon;
  j["num_runs"] = cfg.num_runs;
  j["master_seed"] = cfg.master_seed;
  j["out_dir"] = cfg.out_dir;
  j["assumption_violating"] = cfg.assumption_violating;
  j["max_sample_attempts"] = cfg.max_sample_attempts;
  j["riccati_tol"] = cfg.riccati_tol;
  j["riccati_max_iter"] = cfg.riccati_max_iter;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    cfg.scenario = j.value("scenario", std::string("custom"));
    cfg.n = j.at("n").get<int>();
    cfg.m = j.at("m").get<int>();
    const auto& ts = j.at("true_system");
    const std::string ts_kind = ts.at("kind").get<std::string>();
    if (ts_kind == "explicit") {
      cfg.true_system.kind = TrueSystemSpec::Kind::Explicit;
      cfg.true_system.A = detail::matrix_from_json(ts.at("A"), "true_system.A");
      cfg.true_system.B = detail::matrix_from_json(ts.at("B"), "true_system.B");
    } else if (ts_kind == "draw_from_prior") {
      cfg.true_system.kind = TrueSystemSpec::Kind::DrawFromPrior;
    } else {
      throw ConfigError("true_system.kind: unknown value '" + ts_kind + "'");
    }
    cfg.Q = detail::matrix_from_json(j.at("cost").at("Q"), "cost.Q");
    cfg.R = detail::matrix_from_json(j.at("cost").at("R"), "cost.R");
    const auto& prior = j.at("prior");
    cfg.theta_hat_1 = detail::matrix_from_json(prior.at("theta_hat"), "prior.theta_hat");
    cfg.sigma_1 = detail::matrix_from_json(prior.at("sigma"), "prior.sigma");
    const auto& support = prior.at("support");
    const std::string sk = support.at("kind").get<std::string>();
    if (sk == "all") {
      cfg.support.kind = SupportSpec::Kind::All;
    } else if (sk == "spectral_radius_ball") {
      cfg.support.kind = SupportSpec::Kind::SpectralRadiusBall;
      cfg.support.delta = support.at("delta").get<double>();
    } else if (sk == "norm_ball") {
      cfg.support.kind = SupportSpec::Kind::NormBall;
      cfg.support.epsilon = support.at("epsilon").get<double>();
      if (support.contains("center"))
        cfg.support.center =
            detail::matrix_from_json(support.at("center"), "support.center");
    } else {
      throw ConfigError("prior.support.kind: unknown value '" + sk + "'");
    }
    const auto& variant = j.at("variant");
    const std::string vk = variant.at("kind").get<std::string>();
    if (vk == "stationary") {
      cfg.variant.kind = VariantSpec::Kind::Stationary;
    } else if (vk == "time_varying") {
      cfg.variant.kind = VariantSpec::Kind::TimeVarying;
      cfg.variant.alpha = variant.at("alpha").get<double>();
      if (variant.contains("q") && variant.at("q").is_number()) {
        cfg.variant.q = variant.at("q").get<double>();
        cfg.variant.q_auto = variant.value("q_auto", false);
      } else {
        cfg.variant.q_auto = true;
      }
    } else {
      throw ConfigError("variant.kind: unknown value '" + vk + "'");
    }
    cfg.horizon = j.at("horizon").get<long>();
    cfg.num_runs = j.at("num_runs").get<int>();
    cfg.master_seed = j.value("master_seed", std::uint64_t{1});
    cfg.out_dir = j.value("out_dir", std::string("out"));
    cfg.assumption_violating = j.value("assumption_violating", false);
    cfg.max_sample_attempts = j.value("max_sample_attempts", 10000);
    cfg.riccati_tol = j.value("riccati_tol", 1e-9);
    cfg.riccati_max_iter = j.value("riccati_max_iter", 10000);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  validate_config(cfg);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// ---- Presets -----------------------------------------------------------

namespace detail {

// Fixed orthogonal conjugation for the 3x3 presets (product of plane
// rotations; recorded in the manifest via the resolved A matrix).
inline Eigen::Matrix3d preset_rotation() {
  auto plane = [](int i, int j, double angle) {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    R(i, i) = std::cos(angle);
    R(j, j) = std::cos(angle);
    R(i, j) = -std::sin(angle);
    R(j, i) = std::sin(angle);
    return R;
  };
  return plane(0, 1, 0.3) * plane(0, 2, 0.7) * plane(1, 2, 1.1);
}

inline Eigen::Matrix3d conjugated_diag(double l1, double l2, double l3) {
  const Eigen::Matrix3d U = preset_rotation();
  Eigen::Vector3d ev(l1, l2, l3);
  return U * ev.asDiagonal() * U.transpose();
}

inline ExperimentConfig scalar_stationary(const std::string& name, double a1,
                                          double delta) {
  ExperimentConfig cfg;
  cfg.scenario = name;
  cfg.n = 1;
  cfg.m = 1;
  cfg.true_system.kind = TrueSystemSpec::Kind::Explicit;
  cfg.true_system.A = Eigen::MatrixXd::Constant(1, 1, a1);
  cfg.true_system.B = Eigen::MatrixXd::Constant(1, 1, 0.5);
  cfg.Q = Eigen::MatrixXd::Constant(1, 1, 2.0);
  cfg.R = Eigen::MatrixXd::Constant(1, 1, 1.0);
  cfg.theta_hat_1 = Eigen::MatrixXd::Ones(2, 1);
  cfg.sigma_1 = Eigen::MatrixXd::Identity(2, 2);
  cfg.support.kind = SupportSpec::Kind::SpectralRadiusBall;
  cfg.support.delta = delta;
  cfg.assumption_violating = delta >= 1.0;
  cfg.horizon = 100000;
  cfg.num_runs = 500;
  return cfg;
}

inline ExperimentConfig vector_stationary(const std::string& name, double lambda_max,
                                          double delta) {
  ExperimentConfig cfg;
  cfg.scenario = name;
  cfg.n = 3;
  cfg.m = 3;
  cfg.true_system.kind = TrueSystemSpec::Kind::Explicit;
  cfg.true_system.A = conjugated_diag(lambda_max, 0.5, -0.3);
  cfg.true_system.B = Eigen::MatrixXd::Identity(3, 3);
  cfg.Q = 2.0 * Eigen::MatrixXd::Identity(3, 3);
  cfg.R = Eigen::MatrixXd::Identity(3, 3);
  cfg.theta_hat_1 = Eigen::MatrixXd::Ones(6, 3);
  cfg.sigma_1 = Eigen::MatrixXd::Identity(6, 6);
  cfg.support.kind = SupportSpec::Kind::SpectralRadiusBall;
  cfg.support.delta = delta;
  cfg.assumption_violating = delta >= 1.0;
  cfg.horizon = 100000;
  cfg.num_runs = 500;
  return cfg;
}

inline ExperimentConfig tv_scalar(const std::string& name, double epsilon) {
  ExperimentConfig cfg;
  cfg.scenario = name;
  cfg.n = 1;
  cfg.m = 1;
  cfg.true_system.kind = TrueSystemSpec::Kind::DrawFromPrior;
  cfg.Q = Eigen::MatrixXd::Constant(1, 1, 2.0);
  cfg.R = Eigen::MatrixXd::Constant(1, 1, 1.0);
  // theta_prior = [A_prior, B_prior] = [1, 0.5]; theta_hat_1 = theta_prior.
  cfg.theta_hat_1 = (Eigen::MatrixXd(2, 1) << 1.0, 0.5).finished();
  cfg.sigma_1 = 0.01 * Eigen::MatrixXd::Identity(2, 2);
  cfg.support.kind = SupportSpec::Kind::NormBall;
  cfg.support.epsilon = epsilon;
  cfg.variant.kind = VariantSpec::Kind::TimeVarying;
  cfg.variant.alpha = 0.2;
  cfg.variant.q_auto = true;
  cfg.horizon = 50000;
  cfg.num_runs = 200;
  return cfg;
}

inline ExperimentConfig tv_vector(const std::string& name, double epsilon) {
  ExperimentConfig cfg;
  cfg.scenario = name;
  cfg.n = 3;
  cfg.m = 3;
  cfg.true_system.kind = TrueSystemSpec::Kind::DrawFromPrior;
  cfg.Q = 2.0 * Eigen::MatrixXd::Identity(3, 3);
  cfg.R = Eigen::MatrixXd::Identity(3, 3);
  Eigen::MatrixXd theta_prior(6, 3);
  theta_prior.topRows(3) = conjugated_diag(1.0, 0.7, -0.2).transpose();
  theta_prior.bottomRows(3) = Eigen::MatrixXd::Identity(3, 3);
  cfg.theta_hat_1 = theta_prior;
  cfg.sigma_1 = 0.01 * Eigen::MatrixXd::Identity(6, 6);
  cfg.support.kind = SupportSpec::Kind::NormBall;
  cfg.support.epsilon = epsilon;
  cfg.variant.kind = VariantSpec::Kind::TimeVarying;
  cfg.variant.alpha = 0.2;
  cfg.variant.q_auto = true;
  cfg.horizon = 50000;
  cfg.num_runs = 200;
  return cfg;
}

}  // namespace detail

inline std::vector<std::string> preset_names() {
  return {"scalar-stable",        "scalar-stable-delta2", "scalar-unstable",
          "scalar-unstable-delta2", "vector-stable",      "vector-stable-delta2",
          "vector-unstable",      "vector-unstable-delta2", "tv-scalar-eps05",
          "tv-scalar-eps08",      "tv-vector-eps05",      "tv-vector-eps08"};
}

inline ExperimentConfig make_preset(const std::string& name) {
  if (name == "scalar-stable") return detail::scalar_stationary(name, 0.9, 0.99);
  if (name == "scalar-stable-delta2") return detail::scalar_stationary(name, 0.9, 2.0);
  if (name == "scalar-unstable") return detail::scalar_stationary(name, 1.5, 0.99);
  if (name == "scalar-unstable-delta2") return detail::scalar_stationary(name, 1.5, 2.0);
  if (name == "vector-stable") return detail::vector_stationary(name, 0.9, 0.99);
  if (name == "vector-stable-delta2") return detail::vector_stationary(name, 0.9, 2.0);
  if (name == "vector-unstable") return detail::vector_stationary(name, 1.5, 0.99);
  if (name == "vector-unstable-delta2")
    return detail::vector_stationary(name, 1.5, 2.0);
  if (name == "tv-scalar-eps05") return detail::tv_scalar(name, 0.5);
  if (name == "tv-scalar-eps08") return detail::tv_scalar(name, 0.8);
  if (name == "tv-vector-eps05") return detail::tv_vector(name, 0.5);
  if (name == "tv-vector-eps08") return detail::tv_vector(name, 0.8);
  throw ConfigError("unknown preset: " + name);
}

}  // namespace tsde
