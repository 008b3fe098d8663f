#include "riskgrad/primal_dual.hpp"

#include <cmath>
#include <sstream>

namespace riskgrad {

std::string DualTrace::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "i,lambda,J,Jc,dual_grad\n";
  for (const auto& r : records)
    os << r.i << ',' << r.lambda << ',' << r.J << ',' << r.Jc << ',' << r.dual_grad << '\n';
  return os.str();
}

double dual_step(double lambda_i, double Jc_i, double delta, double alpha_lambda_i) {
  if (!(alpha_lambda_i > 0.0)) throw ConfigError("dual_step: alpha must be > 0");
  return std::max(0.0, lambda_i + alpha_lambda_i * (Jc_i - delta));
}

bool slater_holds(const LtiSystem& sys, const ChanceSpec& chance,
                  const Eigen::MatrixXd& SigmaSigma) {
  for (double c : {0.0, 1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6}) {
    Eigen::MatrixXd Qa = sys.Q + c * chance.q * chance.q.transpose();
    try {
      LtiSystem aug(sys.A, sys.B, Qa, sys.R, sys.SigmaW);
      const Eigen::MatrixXd K = lqr_gain(aug);
      LinearGaussianPolicy pol(K, SigmaSigma);
      if (cost_Jc(sys, pol, chance) < chance.delta) return true;
    } catch (const Error&) {
      continue;
    }
  }
  return false;
}

namespace {

Eigen::MatrixXd inner_solve(const LtiSystem& sys, const ChanceSpec& chance,
                            const Eigen::MatrixXd& K_init, const Eigen::MatrixXd& SigmaSigma,
                            InnerSolver inner, const PrimalDualOptions& opt,
                            std::uint64_t seed) {
  switch (inner) {
    case InnerSolver::ExactNpg: {
      DescentTrace tr = run_exact_npg(sys, chance, K_init, SigmaSigma, opt.inner);
      return tr.final_K();
    }
    case InnerSolver::SampleNpg:
    case InnerSolver::SampleGnpg: {
      LinearGaussianPolicy pol(K_init, SigmaSigma);
      TrainResult res = train(sys, chance, pol, opt.pg,
                              inner == InnerSolver::SampleNpg ? PgVariant::Npg
                                                              : PgVariant::Gnpg,
                              opt.pg_iters, seed);
      return res.best10_K;
    }
  }
  throw ConfigError("inner_solve: unknown solver");
}

}  // namespace

DualTrace run_primal_dual(const LtiSystem& sys, const ChanceSpec& chance_without_lambda,
                          const Eigen::MatrixXd& K0, const Eigen::MatrixXd& SigmaSigma,
                          InnerSolver inner, const PrimalDualOptions& opt, std::uint64_t seed) {
  if (opt.check_slater && !slater_holds(sys, chance_without_lambda, SigmaSigma))
    throw ConfigError("run_primal_dual: Slater check failed, no strictly feasible gain found "
                      "(override with check_slater=false)");
  double lambda = opt.lambda0;
  Eigen::MatrixXd K = K0;
  DualTrace trace;
  trace.records.reserve(static_cast<std::size_t>(opt.outer_iters));
  for (int i = 0; i < opt.outer_iters; ++i) {
    const ChanceSpec chance = chance_without_lambda.with_lambda(lambda);
    K = inner_solve(sys, chance, K, SigmaSigma, inner, opt,
                    derive_seed(seed, static_cast<std::uint64_t>(i)));
    LinearGaussianPolicy pol(K, SigmaSigma);
    const double J = cost_J(sys, pol);
    const double Jc = cost_Jc(sys, pol, chance);
    trace.records.push_back({i, lambda, K, J, Jc, Jc - chance.delta});
    const double alpha_i = opt.alpha_lambda0 / std::sqrt(static_cast<double>(i) + 1.0);
    lambda = dual_step(lambda, Jc, chance.delta, alpha_i);
  }
  return trace;
}

DualityGapResult duality_gap_probe(const LtiSystem& sys, const ChanceSpec& chance,
                                   const Eigen::MatrixXd& K0, const Eigen::MatrixXd& SigmaSigma,
                                   int grid_points, double lambda_min, double lambda_max) {
  ExactNpgOptions inner;
  inner.alpha_a = 0.005;
  inner.max_iter = 2000;
  inner.tol = 1e-8;

  DualityGapResult res;
  const double lmin = std::log10(lambda_min), lmax = std::log10(lambda_max);
  Eigen::MatrixXd K = K0;

  auto solve_at = [&](double lam, Eigen::MatrixXd& warm) {
    const ChanceSpec ch = chance.with_lambda(lam);
    DescentTrace tr = run_exact_npg(sys, ch, warm, SigmaSigma, inner);
    warm = tr.final_K();
    LinearGaussianPolicy pol(warm, SigmaSigma);
    const double J = cost_J(sys, pol);
    const double Jc = cost_Jc(sys, pol, ch);
    return std::make_pair(J, Jc);
  };

  auto consider = [&](double lam, double J, double Jc) {
    const double D = J + lam * (Jc - chance.delta);
    res.dual_value = std::max(res.dual_value, D);
    if (Jc <= chance.delta && (!res.feasible_found || J < res.primal_value)) {
      res.primal_value = J;
      res.feasible_found = true;
    }
  };

  res.dual_value = -std::numeric_limits<double>::infinity();
  double lo = lambda_min, hi = -1.0;  // bisection bracket on the boundary
  double prev_lambda = lambda_min;
  for (int g = 0; g < grid_points; ++g) {
    const double lam = std::pow(10.0, lmin + (lmax - lmin) * g / (grid_points - 1));
    const auto [J, Jc] = solve_at(lam, K);
    res.lambda_grid.push_back(lam);
    res.D_values.push_back(J + lam * (Jc - chance.delta));
    consider(lam, J, Jc);
    if (Jc > chance.delta) {
      lo = lam;
    } else if (hi < 0.0) {
      hi = lam;
    }
    prev_lambda = lam;
  }

  // sharpen the primal estimate: bisect on lambda for Jc(K*(lambda)) = delta
  // (monotone nonincreasing in lambda)
  if (hi > 0.0 && lo < hi) {
    Eigen::MatrixXd Kb = K0;
    for (int it = 0; it < 40 && (hi - lo) > 1e-6 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      const auto [J, Jc] = solve_at(mid, Kb);
      consider(mid, J, Jc);
      if (Jc > chance.delta)
        lo = mid;
      else
        hi = mid;
    }
  }

  if (res.feasible_found) {
    res.gap = res.primal_value - res.dual_value;
    res.gap_rel = res.gap / std::max(1e-300, std::abs(res.primal_value));
  }
  return res;
}

}  // namespace riskgrad
