#pragma once

#include <cstdint>
#include <vector>

#include "riskgrad/risk.hpp"

namespace riskgrad {

// Solution of the chance-constrained LQR semidefinite program
//   min tr(QX) + tr(P)
//   s.t. [P, R^{1/2}Y; Y'R^{1/2}, X] >= 0,
//        [X - W, AX + BY; (AX+BY)', X] >= 0,
//        q'Xq <= alpha eps^2,  alpha = (Phi^-1(1-delta))^-2.
// The printed program uses u = +K x with K = Y X^-1; this artifact stores
// gains for u = -K x throughout, so K = -Y X^-1 here.
struct ClqrSolution {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Y;
  Eigen::MatrixXd P;
  Eigen::MatrixXd K;           // = -Y X^-1, artifact sign convention
  double objective = 0.0;      // tr(QX) + tr(P)
  double alpha = 0.0;
  std::vector<double> barrier_trace;  // objective after each centering step
};

// Log-det barrier interior-point solve of the program above, specialized to
// its three constraint blocks. W is the closed-loop noise covariance used in
// the covariance LMI (the plant's SigmaW for a deterministic policy).
// Throws SolverError when no strictly feasible start exists (infeasible) or
// the barrier iteration breaks down.
ClqrSolution clqr_solve(const LtiSystem& sys, const ChanceSpec& chance);

struct MpcPlan {
  Eigen::MatrixXd inputs;      // p x T planned inputs, column i applied at step i
  double objective = 0.0;      // scenario-averaged cost of the returned plan
  double warm_objective = 0.0; // cost of the quadratic (indicator-free) stage
  bool cem_stalled = false;    // refinement failed to improve the warm start
};

struct MpcOptions {
  int population = 64;
  int elites = 8;
  int generations = 30;
  double init_spread = 0.0;  // 0 = auto from the warm-start input scale
};

// One receding-horizon plan from state x_t: draws S scenario noise sequences,
// minimizes sum_s sum_{i=1..T} [x_i' Q x_i + u_i' R u_i + lambda 1{q'x_i >= eps}]
// over the open-loop inputs (x_i = state i steps ahead). Stage one solves the
// indicator-free quadratic exactly; stage two refines with the cross-entropy
// method on the full objective.
MpcPlan mpc_plan(const LtiSystem& sys, const ChanceSpec& chance, const Eigen::VectorXd& x_t,
                 int T, int S, std::uint64_t seed, const MpcOptions& opt = {});

struct MpcMetrics {
  double avg_stage_cost = 0.0;  // ergodic average of x'Qx + u'Ru
  double violation_rate = 0.0;  // ergodic average of the indicator
  int stalled_plans = 0;
};

// Receding-horizon rollout calling mpc_plan at every step.
MpcMetrics mpc_rollout(const LtiSystem& sys, const ChanceSpec& chance, int T_sim, int T, int S,
                       std::uint64_t seed, const MpcOptions& opt = {},
                       Trajectory* out_traj = nullptr);

}  // namespace riskgrad
