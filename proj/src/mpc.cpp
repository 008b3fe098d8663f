#include "riskgrad/baselines.hpp"

#include <cmath>

#include "riskgrad/parallel.hpp"
#include "riskgrad/rng.hpp"

namespace riskgrad {

namespace {

// Scenario data: per scenario the length-T noise sequence, precomputed
// zero-input state responses c_i = A^i x_t + sum_j A^(i-j) w_j.
struct Scenarios {
  std::vector<Eigen::MatrixXd> free_resp;  // S entries, n x T: column i-1 = c_i
};

Scenarios draw_scenarios(const LtiSystem& sys, const Eigen::VectorXd& x_t, int T, int S,
                         std::uint64_t seed) {
  const Eigen::Index n = sys.state_dim();
  const Eigen::MatrixXd Lw = covariance_sqrt(sys.SigmaW);
  Scenarios sc;
  sc.free_resp.resize(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
    Eigen::MatrixXd resp(n, T);
    Eigen::VectorXd c = x_t;
    for (int i = 0; i < T; ++i) {
      c = (sys.A * c + Lw * rng.normal_vector(n)).eval();
      resp.col(i) = c;
    }
    sc.free_resp[s] = std::move(resp);
  }
  return sc;
}

// Input-to-state map: x_i += sum_{j<=i} A^(i-j) B u_j.
std::vector<Eigen::MatrixXd> input_maps(const LtiSystem& sys, int T) {
  std::vector<Eigen::MatrixXd> Apow(static_cast<std::size_t>(T));
  Apow[0] = sys.B;
  for (int k = 1; k < T; ++k) Apow[k] = sys.A * Apow[k - 1];
  return Apow;  // Apow[k] = A^k B
}

double plan_objective(const LtiSystem& sys, const ChanceSpec& chance, const Scenarios& sc,
                      const std::vector<Eigen::MatrixXd>& AkB, const Eigen::MatrixXd& U,
                      bool with_indicators) {
  const int T = static_cast<int>(U.cols());
  const int S = static_cast<int>(sc.free_resp.size());
  double total = 0.0;
  for (int s = 0; s < S; ++s) {
    for (int i = 1; i <= T; ++i) {
      Eigen::VectorXd x = sc.free_resp[s].col(i - 1);
      for (int j = 1; j <= i; ++j) x.noalias() += AkB[i - j] * U.col(j - 1);
      total += x.dot(sys.Q * x);
      if (with_indicators && chance.lambda > 0.0 && chance.q.dot(x) >= chance.eps)
        total += chance.lambda;
    }
  }
  total /= static_cast<double>(S);
  for (int i = 0; i < T; ++i) total += U.col(i).dot(sys.R * U.col(i));
  return total;
}

}  // namespace

MpcPlan mpc_plan(const LtiSystem& sys, const ChanceSpec& chance, const Eigen::VectorXd& x_t,
                 int T, int S, std::uint64_t seed, const MpcOptions& opt) {
  if (T < 1 || S < 1) throw ConfigError("mpc_plan: T and S must be >= 1");
  if (x_t.size() != sys.state_dim()) throw DimensionError("mpc_plan: x_t dimension");
  const Eigen::Index n = sys.state_dim(), p = sys.input_dim();

  const Scenarios sc = draw_scenarios(sys, x_t, T, S, derive_seed(seed, 0x5ce0));
  const auto AkB = input_maps(sys, T);

  // stage one: exact minimizer of the scenario-averaged quadratic part.
  // x_i^(s) = c_i^(s) + sum_j G_{ij} u_j with G_{ij} = A^(i-j) B; normal
  // equations over the stacked input vector.
  const Eigen::Index dim = p * T;
  Eigen::MatrixXd Hq = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd hq = Eigen::VectorXd::Zero(dim);
  for (int i = 1; i <= T; ++i) {
    // average free response over scenarios enters the linear term
    Eigen::VectorXd cbar = Eigen::VectorXd::Zero(n);
    for (const auto& fr : sc.free_resp) cbar += fr.col(i - 1);
    cbar /= static_cast<double>(sc.free_resp.size());
    for (int j = 1; j <= i; ++j) {
      const Eigen::MatrixXd& Gij = AkB[i - j];
      hq.segment((j - 1) * p, p).noalias() += 2.0 * Gij.transpose() * (sys.Q * cbar);
      for (int l = 1; l <= i; ++l) {
        Hq.block((j - 1) * p, (l - 1) * p, p, p).noalias() +=
            2.0 * Gij.transpose() * sys.Q * AkB[i - l];
      }
    }
  }
  for (int i = 0; i < T; ++i) Hq.block(i * p, i * p, p, p) += 2.0 * sys.R;
  const Eigen::VectorXd u_flat = -Hq.ldlt().solve(hq);
  Eigen::MatrixXd U_warm(p, T);
  for (int i = 0; i < T; ++i) U_warm.col(i) = u_flat.segment(i * p, p);

  MpcPlan plan;
  plan.warm_objective = plan_objective(sys, chance, sc, AkB, U_warm, false);
  double warm_full = plan_objective(sys, chance, sc, AkB, U_warm, true);
  plan.inputs = U_warm;
  plan.objective = warm_full;

  if (chance.lambda <= 0.0) return plan;  // quadratic solve is exact

  // stage two: cross-entropy refinement on the indicator-bearing objective
  Rng rng(derive_seed(seed, 0xce3));
  const int pop = opt.population, elites = opt.elites, gens = opt.generations;
  double spread = opt.init_spread > 0.0
                      ? opt.init_spread
                      : std::max(0.1, 0.5 * U_warm.cwiseAbs().maxCoeff());
  Eigen::MatrixXd mean = U_warm;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(p, T, spread);
  double best_obj = warm_full;
  Eigen::MatrixXd best_U = U_warm;

  std::vector<Eigen::MatrixXd> cand(static_cast<std::size_t>(pop));
  std::vector<double> obj(static_cast<std::size_t>(pop));
  for (int g = 0; g < gens; ++g) {
    for (int c = 0; c < pop; ++c) {
      Eigen::MatrixXd U = mean;
      if (c > 0) {  // keep the incumbent mean in the population
        for (Eigen::Index a = 0; a < p; ++a)
          for (int i = 0; i < T; ++i) U(a, i) += sigma(a, i) * rng.normal();
      }
      cand[static_cast<std::size_t>(c)] = std::move(U);
    }
    parallel_for_indexed(cand.size(), [&](std::size_t c) {
      obj[c] = plan_objective(sys, chance, sc, AkB, cand[c], true);
    });
    std::vector<int> order(static_cast<std::size_t>(pop));
    for (int c = 0; c < pop; ++c) order[static_cast<std::size_t>(c)] = c;
    std::partial_sort(order.begin(), order.begin() + elites, order.end(),
                      [&](int a, int b) { return obj[a] < obj[b]; });
    if (obj[static_cast<std::size_t>(order[0])] < best_obj) {
      best_obj = obj[static_cast<std::size_t>(order[0])];
      best_U = cand[static_cast<std::size_t>(order[0])];
    }
    Eigen::MatrixXd new_mean = Eigen::MatrixXd::Zero(p, T);
    for (int e = 0; e < elites; ++e) new_mean += cand[static_cast<std::size_t>(order[e])];
    new_mean /= static_cast<double>(elites);
    Eigen::MatrixXd var = Eigen::MatrixXd::Constant(p, T, 1e-8);
    for (int e = 0; e < elites; ++e) {
      const Eigen::MatrixXd d = cand[static_cast<std::size_t>(order[e])] - new_mean;
      var += d.cwiseProduct(d);
    }
    mean = new_mean;
    sigma = (var / static_cast<double>(elites)).cwiseSqrt();
  }

  plan.cem_stalled = !(best_obj < warm_full);
  if (best_obj <= warm_full) {
    plan.inputs = best_U;
    plan.objective = best_obj;
  }
  return plan;
}

MpcMetrics mpc_rollout(const LtiSystem& sys, const ChanceSpec& chance, int T_sim, int T, int S,
                       std::uint64_t seed, const MpcOptions& opt, Trajectory* out_traj) {
  if (T_sim < 1) throw ConfigError("mpc_rollout: T_sim must be >= 1");
  const Eigen::Index n = sys.state_dim();
  const Eigen::MatrixXd Lw = covariance_sqrt(sys.SigmaW);
  Rng rng(derive_seed(seed, 0x70));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);

  MpcMetrics met;
  if (out_traj) out_traj->steps.reserve(static_cast<std::size_t>(T_sim));
  double cost_acc = 0.0;
  long violations = 0;
  for (int t = 0; t < T_sim; ++t) {
    const MpcPlan plan =
        mpc_plan(sys, chance, x, T, S, derive_seed(seed, 1000 + static_cast<std::uint64_t>(t)),
                 opt);
    if (plan.cem_stalled) ++met.stalled_plans;
    const Eigen::VectorXd u = plan.inputs.col(0);
    Eigen::VectorXd xn = sys.A * x + sys.B * u + Lw * rng.normal_vector(n);
    if (xn.norm() > 1e12)
      throw DivergenceError("mpc_rollout: state norm exceeded 1e12 at step " + std::to_string(t),
                            t);
    cost_acc += stage_cost(x, u, sys);
    if (chance.q.dot(xn) >= chance.eps) ++violations;
    if (out_traj) out_traj->steps.push_back({x, u, reward(x, u, xn, sys, chance), xn});
    x = xn;
  }
  met.avg_stage_cost = cost_acc / static_cast<double>(T_sim);
  met.violation_rate = static_cast<double>(violations) / static_cast<double>(T_sim);
  return met;
}

}  // namespace riskgrad
