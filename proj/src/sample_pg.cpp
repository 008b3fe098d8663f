#include "riskgrad/sample_pg.hpp"

#include <cmath>
#include <sstream>

#include "riskgrad/parallel.hpp"

namespace riskgrad {

void PgHyper::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("PgHyper: gamma must be in (0,1)");
  if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("PgHyper: eta must be in (0,1)");
  if (!(alpha_a >= 0.0)) throw ConfigError("PgHyper: alpha_a must be >= 0");
  if (!(alpha_c >= 0.0)) throw ConfigError("PgHyper: alpha_c must be >= 0");
  if (N < 1 || M < 1 || T < 1) throw ConfigError("PgHyper: N, M, T must be >= 1");
  if (N > T) throw ConfigError("PgHyper: N cannot exceed T");
}

std::string TrainResult::curve_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "iter,steps,avg_return,J_eval,Jc_eval,grad_norm,critic_loss\n";
  for (const auto& r : curve)
    os << r.iter << ',' << r.steps << ',' << r.avg_return << ',' << r.J_eval << ','
       << r.Jc_eval << ',' << r.grad_norm << ',' << r.critic_loss << '\n';
  return os.str();
}

Eigen::VectorXd gae_advantages(const Trajectory& traj, const CriticNet& critic, double gamma,
                               double eta) {
  const Eigen::Index T = traj.length();
  if (T < 1) throw DimensionError("gae_advantages: empty trajectory");
  Eigen::VectorXd v(T + 1);
  for (Eigen::Index k = 0; k < T; ++k) v[k] = critic.value(traj.steps[k].x);
  v[T] = critic.value(traj.steps[T - 1].x_next);
  Eigen::VectorXd adv(T);
  double acc = 0.0;
  for (Eigen::Index k = T - 1; k >= 0; --k) {
    const double d = -v[k] + traj.steps[k].r + eta * v[k + 1];
    acc = d + gamma * eta * acc;
    adv[k] = acc;
  }
  return adv;
}

Eigen::VectorXd value_targets(const Trajectory& traj, double gamma) {
  const Eigen::Index T = traj.length();
  if (T < 1) throw DimensionError("value_targets: empty trajectory");
  Eigen::VectorXd v(T);
  double acc = 0.0;
  for (Eigen::Index k = T - 1; k >= 0; --k) {
    acc = traj.steps[k].r + gamma * acc;
    v[k] = acc;
  }
  return v;
}

Eigen::VectorXd score(const LinearGaussianPolicy& policy, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& u) {
  const Eigen::Index p = policy.K.rows(), n = policy.K.cols();
  if (x.size() != n || u.size() != p) throw DimensionError("score: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(policy.SigmaSigma);
  if (llt.info() != Eigen::Success)
    throw ConfigError("score: SigmaSigma must be positive definite (exploration required)");
  const Eigen::VectorXd lhs = -llt.solve(u + policy.K * x);
  Eigen::VectorXd out(p * n);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out[i * n + j] = lhs[i] * x[j];  // row-major flatten
  return out;
}

Eigen::VectorXd estimate_G(const std::vector<Eigen::VectorXd>& scores,
                           const Eigen::VectorXd& advantages) {
  if (scores.empty()) throw DimensionError("estimate_G: empty batch");
  if (advantages.size() != static_cast<Eigen::Index>(scores.size()))
    throw DimensionError("estimate_G: batch size mismatch");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(scores[0].size());
  for (std::size_t k = 0; k < scores.size(); ++k) g += advantages[k] * scores[k];
  return g / static_cast<double>(scores.size());
}

Eigen::MatrixXd estimate_F(const std::vector<Eigen::VectorXd>& scores) {
  if (scores.empty()) throw DimensionError("estimate_F: empty batch");
  const Eigen::Index d = scores[0].size();
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(d, d);
  for (const auto& s : scores) f.selfadjointView<Eigen::Lower>().rankUpdate(s);
  f = f.selfadjointView<Eigen::Lower>();
  return f / static_cast<double>(scores.size());
}

Eigen::MatrixXd estimate_Ha(const std::vector<Eigen::VectorXd>& scores,
                            const Eigen::VectorXd& advantages) {
  if (scores.empty()) throw DimensionError("estimate_Ha: empty batch");
  if (advantages.size() != static_cast<Eigen::Index>(scores.size()))
    throw DimensionError("estimate_Ha: batch size mismatch");
  const Eigen::Index d = scores[0].size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const Eigen::VectorXd ga = advantages[k] * scores[k];
    h.selfadjointView<Eigen::Lower>().rankUpdate(ga);
  }
  h = h.selfadjointView<Eigen::Lower>();
  return h / static_cast<double>(scores.size());
}

namespace {

double batch_loss(const std::vector<Eigen::VectorXd>& states, const Eigen::VectorXd& targets,
                  const CriticNet& critic) {
  double loss = 0.0;
  for (std::size_t k = 0; k < states.size(); ++k) {
    const double e = critic.value(states[k]) - targets[k];
    loss += e * e;
  }
  return loss / static_cast<double>(states.size());
}

}  // namespace

CriticStepResult critic_gn_step(const std::vector<Eigen::VectorXd>& states,
                                const Eigen::VectorXd& targets, CriticNet& critic,
                                double alpha_c) {
  if (states.empty()) throw DimensionError("critic_gn_step: empty batch");
  if (targets.size() != static_cast<Eigen::Index>(states.size()))
    throw DimensionError("critic_gn_step: batch size mismatch");
  const int P = critic.num_params();
  const double N = static_cast<double>(states.size());

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(P, P);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(P);
  CriticStepResult res;
  for (std::size_t k = 0; k < states.size(); ++k) {
    const Eigen::VectorXd jk = critic.param_jacobian(states[k]);
    const double err = critic.value(states[k]) - targets[k];
    res.loss_before += err * err;
    s += 2.0 * err * jk;
    H.selfadjointView<Eigen::Lower>().rankUpdate(jk);
  }
  res.loss_before /= N;
  s /= N;
  H = H.selfadjointView<Eigen::Lower>();
  H /= N;
  H.diagonal().array() += 1e-6;

  if (s.norm() == 0.0) {
    res.no_op = true;
    res.loss_after = res.loss_before;
    return res;
  }
  const Eigen::VectorXd dir = H.ldlt().solve(s);
  const double quad = s.dot(dir);
  if (!(quad > 0.0)) {
    res.no_op = true;
    res.loss_after = res.loss_before;
    return res;
  }
  double step = std::sqrt(alpha_c / quad);
  const Eigen::VectorXd phi0 = critic.params();
  for (int halving = 0; halving < 10; ++halving) {
    critic.set_params(phi0 - step * dir);
    res.loss_after = batch_loss(states, targets, critic);
    if (res.loss_after < res.loss_before) return res;
    step *= 0.5;
  }
  critic.set_params(phi0);  // no acceptable step; keep parameters
  res.loss_after = res.loss_before;
  res.no_op = true;
  return res;
}

TrainResult train(const LtiSystem& sys, const ChanceSpec& chance,
                  const LinearGaussianPolicy& policy0, const PgHyper& hyper, PgVariant variant,
                  int iters, std::uint64_t seed) {
  hyper.validate();
  if (!is_stabilizing(sys, policy0.K))
    throw InstabilityError("train: initial gain is not stabilizing");
  const Eigen::Index n = sys.state_dim(), p = sys.input_dim();
  const Eigen::Index dim = p * n;

  Eigen::MatrixXd K = policy0.K;
  CriticNet critic(static_cast<int>(n), derive_seed(seed, 0x10c0));
  TrainResult result;
  result.unstable_iterations = 0;
  long env_steps = 0;

  struct Scored {
    double ret;
    Eigen::MatrixXd K;
  };
  std::vector<Scored> evaluated;
  double last_avg_return = 0.0;

  for (int it = 0; it < iters; ++it) {
    LinearGaussianPolicy policy(K, policy0.SigmaSigma);
    if (!is_stabilizing(sys, K)) ++result.unstable_iterations;  // keep training

    // roll M trajectories in parallel with per-trajectory seeds
    std::vector<Trajectory> trajs(static_cast<std::size_t>(hyper.M));
    const std::uint64_t iter_seed = derive_seed(seed, static_cast<std::uint64_t>(it) + 1);
    parallel_for_indexed(trajs.size(), [&](std::size_t j) {
      Rng init(derive_seed(iter_seed, 2 * j));
      Eigen::VectorXd x0 = init.normal_vector(n);
      trajs[j] = rollout(sys, policy, chance, hyper.T, x0, derive_seed(iter_seed, 2 * j + 1));
    });
    env_steps += static_cast<long>(hyper.M) * hyper.T;

    // pooled estimates over the first N steps of each trajectory (equal N per
    // trajectory makes the pooled mean equal the per-trajectory average)
    std::vector<Eigen::VectorXd> scores;
    std::vector<Eigen::VectorXd> states;
    scores.reserve(trajs.size() * hyper.N);
    states.reserve(trajs.size() * hyper.N);
    Eigen::VectorXd advantages(static_cast<Eigen::Index>(trajs.size()) * hyper.N);
    Eigen::VectorXd targets(static_cast<Eigen::Index>(trajs.size()) * hyper.N);
    Eigen::Index row = 0;
    for (const auto& traj : trajs) {
      const Eigen::VectorXd adv = gae_advantages(traj, critic, hyper.gamma, hyper.eta);
      const Eigen::VectorXd tgt = value_targets(traj, hyper.gamma);
      for (int k = 0; k < hyper.N; ++k, ++row) {
        scores.push_back(score(policy, traj.steps[k].x, traj.steps[k].u));
        states.push_back(traj.steps[k].x);
        advantages[row] = adv[k];
        targets[row] = tgt[k];
      }
    }

    const Eigen::VectorXd G = estimate_G(scores, advantages);
    Eigen::MatrixXd P_mat =
        variant == PgVariant::Npg ? estimate_F(scores) : estimate_Ha(scores, advantages);
    P_mat.diagonal().array() += 1e-8;
    const Eigen::VectorXd dir = P_mat.ldlt().solve(G);
    const double quad = G.dot(dir);
    if (quad > 0.0) {
      const double step = std::sqrt(hyper.alpha_a / quad);
      for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < n; ++j) K(i, j) += step * dir[i * n + j];
    }

    const CriticStepResult cstep = critic_gn_step(states, targets, critic, hyper.alpha_c);

    LearningCurveRow rowrec;
    rowrec.iter = it;
    rowrec.steps = env_steps;
    rowrec.grad_norm = G.norm();
    rowrec.critic_loss = cstep.loss_before;
    if ((it % hyper.eval_interval) == 0 || it == iters - 1) {
      // held-out evaluation rollouts with an independent seed stream
      double ret = 0.0;
      const std::uint64_t eval_seed = derive_seed(seed, 0xe0a1 + static_cast<std::uint64_t>(it));
      bool ok = true;
      for (int e = 0; e < hyper.eval_rollouts && ok; ++e) {
        try {
          Rng init(derive_seed(eval_seed, 2 * e));
          Trajectory tr = rollout(sys, policy, chance, hyper.eval_steps,
                                  init.normal_vector(n), derive_seed(eval_seed, 2 * e + 1));
          for (const auto& st : tr.steps) ret += st.r;
        } catch (const DivergenceError&) {
          ok = false;
        }
      }
      if (ok) {
        last_avg_return = ret / (static_cast<double>(hyper.eval_rollouts) * hyper.eval_steps);
        evaluated.push_back({last_avg_return, K});
      }
      if (is_stabilizing(sys, K)) {
        LinearGaussianPolicy cur(K, policy0.SigmaSigma);
        rowrec.J_eval = cost_J(sys, cur);
        rowrec.Jc_eval = cost_Jc(sys, cur, chance);
      } else {
        rowrec.J_eval = rowrec.Jc_eval = -1.0;  // not defined off the stabilizing set
      }
    } else if (!result.curve.empty()) {
      rowrec.J_eval = result.curve.back().J_eval;
      rowrec.Jc_eval = result.curve.back().Jc_eval;
    }
    rowrec.avg_return = last_avg_return;
    result.curve.push_back(rowrec);
  }

  result.final_K = K;
  result.critic_params = critic.params();
  // average of the actor parameter over the ten best evaluated iterations
  std::sort(evaluated.begin(), evaluated.end(),
            [](const Scored& a, const Scored& b) { return a.ret > b.ret; });
  const std::size_t take = std::min<std::size_t>(10, evaluated.size());
  if (take > 0) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(p, n);
    for (std::size_t i = 0; i < take; ++i) acc += evaluated[i].K;
    result.best10_K = acc / static_cast<double>(take);
  } else {
    result.best10_K = K;
  }
  return result;
}

}  // namespace riskgrad
