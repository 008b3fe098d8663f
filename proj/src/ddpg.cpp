#include "riskgrad/ddpg.hpp"

#include <cmath>
#include <unordered_set>

#include "riskgrad/rng.hpp"

namespace riskgrad {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : storage_(capacity) {
  if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  storage_[cursor_] = std::move(t);
  cursor_ = (cursor_ + 1) % storage_.size();
  if (count_ < storage_.size()) ++count_;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t N, std::uint64_t seed) const {
  if (N > count_) throw ConfigError("ReplayBuffer::sample: fewer stored transitions than N");
  Rng rng(seed);
  std::vector<Transition> out;
  out.reserve(N);
  if (N == count_) {
    // permutation of the whole contents (Fisher-Yates on indices)
    std::vector<std::size_t> idx(count_);
    for (std::size_t i = 0; i < count_; ++i) idx[i] = i;
    for (std::size_t i = count_; i > 1; --i) {
      const std::size_t j = rng.uniform_index(i);
      std::swap(idx[i - 1], idx[j]);
    }
    for (std::size_t i : idx) out.push_back(storage_[i]);
    return out;
  }
  std::unordered_set<std::size_t> seen;
  while (out.size() < N) {
    const std::size_t i = rng.uniform_index(count_);
    if (seen.insert(i).second) out.push_back(storage_[i]);
  }
  return out;
}

DdpgNets::DdpgNets(int n, int p, double tau_, std::uint64_t seed)
    : theta(Eigen::MatrixXd::Zero(p, n)),
      critic({n + p, 10, 50, 1}, seed),
      theta_t(Eigen::MatrixXd::Zero(p, n)),
      phi_t(critic.params()),
      tau(tau_) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("DdpgNets: tau must be in (0,1]");
}

namespace {

Eigen::VectorXd stack_xu(const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  Eigen::VectorXd xu(x.size() + u.size());
  xu << x, u;
  return xu;
}

}  // namespace

double DdpgNets::q_value(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  return critic.value(stack_xu(x, u));
}

double DdpgNets::q_target(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  Mlp tgt = critic;
  tgt.set_params(phi_t);
  return tgt.value(stack_xu(x, u));
}

double critic_td_step(DdpgNets& nets, const std::vector<Transition>& minibatch, double gamma,
                      double lr) {
  if (minibatch.empty()) throw DimensionError("critic_td_step: empty minibatch");
  Mlp target_critic = nets.critic;
  target_critic.set_params(nets.phi_t);

  const double N = static_cast<double>(minibatch.size());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(nets.critic.num_params());
  double loss = 0.0;
  for (const auto& tr : minibatch) {
    const Eigen::VectorXd u_next = nets.actor_target(tr.x_next);
    const double y = tr.r + gamma * target_critic.value(stack_xu(tr.x_next, u_next));
    const Eigen::VectorXd xu = stack_xu(tr.x, tr.u);
    const double qv = nets.critic.value(xu);
    loss += (qv - y) * (qv - y);
    grad += 2.0 * (qv - y) * nets.critic.param_jacobian(xu);
  }
  loss /= N;
  grad /= N;
  nets.critic.set_params(nets.critic.params() - lr * grad);
  return loss;
}

double actor_step(DdpgNets& nets, const std::vector<Transition>& minibatch, double lr) {
  if (minibatch.empty()) throw DimensionError("actor_step: empty minibatch");
  const Eigen::Index n = nets.theta.cols(), p = nets.theta.rows();
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(p, n);
  for (const auto& tr : minibatch) {
    const Eigen::VectorXd u = nets.actor(tr.x);
    const Eigen::VectorXd g_xu = nets.critic.input_gradient(stack_xu(tr.x, u));
    const Eigen::VectorXd g_u = g_xu.tail(p);
    grad.noalias() += -g_u * tr.x.transpose();  // dmu/dtheta_{ab} = -x_b
  }
  grad /= static_cast<double>(minibatch.size());
  nets.theta += lr * grad;  // ascent on the critic surface
  return grad.norm();
}

void soft_update(DdpgNets& nets, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("soft_update: tau must be in (0,1]");
  nets.theta_t = tau * nets.theta + (1.0 - tau) * nets.theta_t;
  nets.phi_t = tau * nets.critic.params() + (1.0 - tau) * nets.phi_t;
}

void DdpgConfig::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("DdpgConfig: tau must be in (0,1]");
  if (!(alpha_d >= 0.0)) throw ConfigError("DdpgConfig: alpha_d must be >= 0");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("DdpgConfig: gamma must be in (0,1)");
  if (batch < 1 || episodes < 1 || T < 1)
    throw ConfigError("DdpgConfig: batch, episodes, T must be >= 1");
  if (!(sigma_d0 > 0.0 && sigma_df > 0.0)) throw ConfigError("DdpgConfig: noise variances > 0");
  if (!(anneal_fraction > 0.0 && anneal_fraction <= 1.0))
    throw ConfigError("DdpgConfig: anneal_fraction must be in (0,1]");
}

DdpgResult train_ddpg(const LtiSystem& sys, const ChanceSpec& chance, const DdpgConfig& config,
                      std::uint64_t seed) {
  config.validate();
  const Eigen::Index n = sys.state_dim(), p = sys.input_dim();
  DdpgNets nets(static_cast<int>(n), static_cast<int>(p), config.tau,
                derive_seed(seed, 0xddc1));
  ReplayBuffer buffer(config.capacity);
  Rng env_rng(derive_seed(seed, 0xe0));
  Rng sample_rng(derive_seed(seed, 0x5a));

  const Eigen::MatrixXd Lw = covariance_sqrt(sys.SigmaW);
  // geometric annealing reaching sigma_df at anneal_fraction of the episodes
  const int anneal_episodes =
      std::max(1, static_cast<int>(config.anneal_fraction * config.episodes));
  const double decay = std::pow(config.sigma_df / config.sigma_d0,
                                1.0 / static_cast<double>(anneal_episodes));

  DdpgResult result;
  long env_steps = 0;
  double sigma_d = config.sigma_d0;

  for (int ep = 0; ep < config.episodes; ++ep) {
    if (!is_stabilizing(sys, nets.theta)) ++result.unstable_episodes;
    Eigen::VectorXd x = env_rng.normal_vector(n);
    double ep_return = 0.0, ep_loss = 0.0, ep_gnorm = 0.0;
    int updates = 0;
    const double noise_std = std::sqrt(sigma_d);
    for (int k = 0; k < config.T; ++k) {
      Eigen::VectorXd u = nets.actor(x) + noise_std * env_rng.normal_vector(p);
      Eigen::VectorXd xn = sys.A * x + sys.B * u + Lw * env_rng.normal_vector(n);
      if (xn.norm() > 1e12) {
        ++result.divergence_events;  // truncate episode, reset state
        break;
      }
      const double r = reward(x, u, xn, sys, chance);
      ep_return += r;
      buffer.push({x, u, r, xn});
      x = xn;
      ++env_steps;
      if (buffer.size() >= static_cast<std::size_t>(config.batch)) {
        const auto mb = buffer.sample(static_cast<std::size_t>(config.batch),
                                      derive_seed(seed, 0xabc000 + env_steps));
        ep_loss += critic_td_step(nets, mb, config.gamma, config.alpha_d);
        ep_gnorm += actor_step(nets, mb, config.alpha_d);
        soft_update(nets, config.tau);
        ++updates;
      }
    }
    if (ep < anneal_episodes) sigma_d = std::max(config.sigma_df, sigma_d * decay);

    LearningCurveRow row;
    row.iter = ep;
    row.steps = env_steps;
    row.avg_return = ep_return / config.T;
    row.grad_norm = updates ? ep_gnorm / updates : 0.0;
    row.critic_loss = updates ? ep_loss / updates : 0.0;
    if (is_stabilizing(sys, nets.theta)) {
      LinearGaussianPolicy pol = LinearGaussianPolicy::deterministic(nets.theta);
      row.J_eval = cost_J(sys, pol);
      row.Jc_eval = cost_Jc(sys, pol, chance);
    } else {
      row.J_eval = row.Jc_eval = -1.0;
    }
    result.curve.push_back(row);
  }
  result.final_theta = nets.theta;
  return result;
}

}  // namespace riskgrad
