#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "riskgrad/mlp.hpp"
#include "riskgrad/risk.hpp"

namespace riskgrad {

// Value approximator: state -> 10 -> 50 -> 1, tanh hidden, linear output.
class CriticNet {
 public:
  CriticNet(int state_dim, std::uint64_t seed)
      : net_({state_dim, 10, 50, 1}, seed) {}

  double value(const Eigen::VectorXd& x) const { return net_.value(x); }
  Eigen::VectorXd param_jacobian(const Eigen::VectorXd& x) const {
    return net_.param_jacobian(x);
  }
  int num_params() const { return net_.num_params(); }
  const Eigen::VectorXd& params() const { return net_.params(); }
  void set_params(const Eigen::VectorXd& p) { net_.set_params(p); }

 private:
  Mlp net_;
};

struct PgHyper {
  double gamma = 0.98;   // discount for value targets
  double eta = 0.96;     // TD-residual discount in the advantage estimator
  double alpha_a = 2e-4; // actor step magnitude (KL-like)
  double alpha_c = 0.05; // critic step magnitude
  int N = 50;            // timesteps per trajectory used for estimates
  int M = 4;             // trajectories per iteration
  int T = 250;           // rollout horizon
  int eval_interval = 10;
  int eval_rollouts = 2;
  int eval_steps = 500;

  void validate() const;
};

enum class PgVariant { Npg, Gnpg };

struct LearningCurveRow {
  int iter = 0;
  long steps = 0;
  double avg_return = 0.0;
  double J_eval = 0.0;
  double Jc_eval = 0.0;
  double grad_norm = 0.0;
  double critic_loss = 0.0;
};

struct TrainResult {
  Eigen::MatrixXd final_K;
  Eigen::MatrixXd best10_K;  // actor parameters averaged over the best ten
                             // evaluated iterations (by average return)
  Eigen::VectorXd critic_params;
  std::vector<LearningCurveRow> curve;
  int unstable_iterations = 0;

  std::string curve_csv() const;  // iter,steps,avg_return,J_eval,Jc_eval,grad_norm,critic_loss
};

// GAE: A_k = sum_l (gamma eta)^l d_{k+l}, d_j = -V(x_j) + r_j + eta V(x_{j+1}),
// truncated at the trajectory end; single backward pass.
Eigen::VectorXd gae_advantages(const Trajectory& traj, const CriticNet& critic, double gamma,
                               double eta);

// Discounted reward-to-go targets: V_k = r_k + gamma V_{k+1}, V_{T-1} = r_{T-1}.
Eigen::VectorXd value_targets(const Trajectory& traj, double gamma);

// Gradient of log pi_K(u|x) for pi = N(-Kx, SigmaSigma), flattened row-major:
// -SigmaSigma^-1 (u + Kx) x'. Requires SigmaSigma positive definite.
Eigen::VectorXd score(const LinearGaussianPolicy& policy, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& u);

// G_hat = (1/N) sum A_k score_k over the batch.
Eigen::VectorXd estimate_G(const std::vector<Eigen::VectorXd>& scores,
                           const Eigen::VectorXd& advantages);

// F_hat = (1/N) sum score score' (unregularized; callers add ridge before inverting).
Eigen::MatrixXd estimate_F(const std::vector<Eigen::VectorXd>& scores);

// Ha_hat = (1/N) sum (A score)(A score)'.
Eigen::MatrixXd estimate_Ha(const std::vector<Eigen::VectorXd>& scores,
                            const Eigen::VectorXd& advantages);

struct CriticStepResult {
  double loss_before = 0.0;
  double loss_after = 0.0;
  bool no_op = false;  // zero gradient: already converged on this batch
};

// Gauss-Newton critic update on a batch of states/targets:
// s = grad MSE, H = (1/N) sum J_k J_k' + 1e-6 I,
// phi <- phi - sqrt(alpha_c / s'H^-1 s) H^-1 s, halved up to 10 times until
// the batch loss decreases.
CriticStepResult critic_gn_step(const std::vector<Eigen::VectorXd>& states,
                                const Eigen::VectorXd& targets, CriticNet& critic,
                                double alpha_c);

// Algorithm: per iteration roll M trajectories, estimate advantages, G and
// the chosen preconditioner (Fisher for npg, advantage-weighted Gauss-Newton
// for gnpg), take the normalized actor step, then the critic GN step.
TrainResult train(const LtiSystem& sys, const ChanceSpec& chance,
                  const LinearGaussianPolicy& policy0, const PgHyper& hyper,
                  PgVariant variant, int iters, std::uint64_t seed);

}  // namespace riskgrad
