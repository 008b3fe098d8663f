#pragma once

#include <cstdint>
#include <vector>

#include "riskgrad/mlp.hpp"
#include "riskgrad/risk.hpp"
#include "riskgrad/sample_pg.hpp"  // LearningCurveRow

namespace riskgrad {

// Fixed-capacity FIFO ring of transitions with uniform seeded minibatch
// sampling (without replacement within a minibatch).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return count_; }
  std::size_t capacity() const { return storage_.size(); }
  const Transition& at(std::size_t i) const { return storage_[i]; }

  std::vector<Transition> sample(std::size_t N, std::uint64_t seed) const;

 private:
  std::vector<Transition> storage_;
  std::size_t cursor_ = 0;
  std::size_t count_ = 0;
};

// Linear actor u = -theta x plus critic Q(x,u) MLP, with slowly tracking
// target copies of both.
struct DdpgNets {
  Eigen::MatrixXd theta;    // p x n actor gain
  Mlp critic;               // (n+p) -> 10 -> 50 -> 1
  Eigen::MatrixXd theta_t;  // target actor
  Eigen::VectorXd phi_t;    // target critic parameters
  double tau;

  DdpgNets(int n, int p, double tau_, std::uint64_t seed);

  Eigen::VectorXd actor(const Eigen::VectorXd& x) const { return -theta * x; }
  Eigen::VectorXd actor_target(const Eigen::VectorXd& x) const { return -theta_t * x; }
  double q_value(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  double q_target(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
};

// One TD step on the critic: y = r + gamma Qt(x', mu_t(x')), MSE loss,
// single gradient-descent update with rate lr. Returns the pre-update loss.
double critic_td_step(DdpgNets& nets, const std::vector<Transition>& minibatch, double gamma,
                      double lr);

// Deterministic policy gradient ascent step on the actor:
// dR/dtheta = (1/N) sum grad_u Q(x, mu(x)) * dmu/dtheta = -(1/N) sum g_u x'.
// Returns the gradient Frobenius norm.
double actor_step(DdpgNets& nets, const std::vector<Transition>& minibatch, double lr);

// theta_t <- tau theta + (1-tau) theta_t, likewise the critic target.
void soft_update(DdpgNets& nets, double tau);

struct DdpgConfig {
  double tau = 0.01;
  double alpha_d = 0.001;    // learning rate for both networks
  double gamma = 0.99;
  std::size_t capacity = 1000000;
  int batch = 64;            // N
  int episodes = 300;        // M
  int T = 200;
  double sigma_d0 = 5.0;     // initial exploration variance (times I)
  double sigma_df = 0.01;    // final exploration variance
  double anneal_fraction = 0.8;

  void validate() const;
};

struct DdpgResult {
  Eigen::MatrixXd final_theta;
  std::vector<LearningCurveRow> curve;  // one row per episode
  int divergence_events = 0;
  int unstable_episodes = 0;  // episodes started with non-stabilizing theta
};

DdpgResult train_ddpg(const LtiSystem& sys, const ChanceSpec& chance, const DdpgConfig& config,
                      std::uint64_t seed);

}  // namespace riskgrad
