#pragma once

#include <optional>
#include <string>
#include <vector>

#include "riskgrad/baselines.hpp"
#include "riskgrad/ddpg.hpp"
#include "riskgrad/exact_pg.hpp"
#include "riskgrad/sample_pg.hpp"

namespace riskgrad {

struct MethodConfig {
  std::string name = "exact_npg";  // npg|gnpg|ddpg|exact_npg|lqr|clqr|mpc

  // shared by the policy-gradient methods
  Eigen::MatrixXd sigma_sigma;           // exploration covariance
  std::optional<Eigen::MatrixXd> K0;     // initial gain; default lqr_gain(sys)

  PgHyper pg;                            // npg/gnpg
  int pg_iters = 1000;

  ExactNpgOptions exact;                 // exact_npg
  std::string step_mode = "normalized";  // or "fixed"

  DdpgConfig ddpg;

  int mpc_S = 20;                        // mpc
  int mpc_T = 5;
  int mpc_T_sim = 2000;
  MpcOptions mpc_opt;

  // probe settings (probe CLI verb)
  int probe_samples = 200;
  double probe_radius = 0.05;
  double probe_zeta_margin = 2.0;        // zeta = margin * L(K0)

  std::optional<Eigen::MatrixXd> eval_K;  // explicit gain for the eval verb
};

struct EvaluationConfig {
  long eval_steps = 100000;
  int eval_rollouts = 5;  // independent evaluation seeds
  long burn_in = 10000;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

struct ExperimentConfig {
  LtiSystem system;
  ChanceSpec chance;
  std::vector<double> lambda_grid;  // optional; empty means single lambda
  MethodConfig method;
  EvaluationConfig evaluation;

  ExperimentConfig();  // UAV benchmark defaults throughout
};

// UAV model of the benchmark (fourth-order double-integrator pair), with the
// process noise entering through the input channels:
// SigmaW = B diag(80, 0.01) B'.
LtiSystem uav_system();
ChanceSpec uav_chance();

// Parses and validates a config JSON document. Missing blocks fall back to
// the UAV defaults; unknown keys are rejected; violations name the field.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);

// Serializes with every field materialized; parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);

// LtiSystem <-> JSON (row-major matrix arrays, schema in system.schema.json)
std::string serialize_system(const LtiSystem& sys);
LtiSystem parse_system(const std::string& json_text);

}  // namespace riskgrad
