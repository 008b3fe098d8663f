#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "riskgrad/exact_pg.hpp"
#include "riskgrad/sample_pg.hpp"

namespace riskgrad {

struct DualRecord {
  int i = 0;
  double lambda = 0.0;
  Eigen::MatrixXd K;
  double J = 0.0;
  double Jc = 0.0;
  double dual_grad = 0.0;  // Jc - delta
};

struct DualTrace {
  std::vector<DualRecord> records;
  std::string to_csv() const;  // i,lambda,J,Jc,dual_grad
  const DualRecord& final_record() const { return records.back(); }
};

enum class InnerSolver { ExactNpg, SampleNpg, SampleGnpg };

// Projected dual ascent: lambda_{i+1} = max(0, lambda_i + alpha_i (Jc_i - delta)).
double dual_step(double lambda_i, double Jc_i, double delta, double alpha_lambda_i);

struct PrimalDualOptions {
  double lambda0 = 1.0;
  double alpha_lambda0 = 5.0;  // alpha_i = alpha_lambda0 / sqrt(i+1)
  int outer_iters = 50;
  ExactNpgOptions inner;       // exact inner solves
  PgHyper pg;                  // sampled inner solves
  int pg_iters = 200;
  bool check_slater = true;
};

// Alternates an inner Lagrangian minimization at fixed lambda (warm-started
// from the previous gain) with the projected dual ascent step,
// alpha_i = alpha_lambda0/sqrt(i+1).
DualTrace run_primal_dual(const LtiSystem& sys, const ChanceSpec& chance_without_lambda,
                          const Eigen::MatrixXd& K0, const Eigen::MatrixXd& SigmaSigma,
                          InnerSolver inner, const PrimalDualOptions& opt, std::uint64_t seed);

// Slater probe: searches for a stabilizing gain with J_c < delta by weighting
// the constraint direction progressively harder in an auxiliary LQR.
bool slater_holds(const LtiSystem& sys, const ChanceSpec& chance,
                  const Eigen::MatrixXd& SigmaSigma);

struct DualityGapResult {
  double dual_value = 0.0;    // max over evaluated lambda of D(lambda)
  double primal_value = 0.0;  // best feasible J found
  double gap = 0.0;           // primal - dual
  double gap_rel = 0.0;       // gap / primal
  std::vector<double> lambda_grid;
  std::vector<double> D_values;
  bool feasible_found = false;
};

// Evaluates D(lambda) = min_K L(K, lambda) over a log-spaced grid, takes the
// max as the dual estimate; the primal estimate is the best feasible J found,
// sharpened by bisecting on lambda for the constraint boundary Jc = delta
// (valid because Jc(K*(lambda)) is nonincreasing in lambda).
DualityGapResult duality_gap_probe(const LtiSystem& sys, const ChanceSpec& chance,
                                   const Eigen::MatrixXd& K0, const Eigen::MatrixXd& SigmaSigma,
                                   int grid_points = 15, double lambda_min = 0.1,
                                   double lambda_max = 200.0);

}  // namespace riskgrad
