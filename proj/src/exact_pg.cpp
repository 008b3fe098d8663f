#include "riskgrad/exact_pg.hpp"

#include <cmath>
#include <sstream>

#include "riskgrad/parallel.hpp"

namespace riskgrad {

std::string DescentTrace::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "iter,L,grad_norm,rho,alpha\n";
  for (const auto& r : records)
    os << r.iter << ',' << r.L_value << ',' << r.grad_norm << ',' << r.rho_closed_loop << ','
       << r.alpha_used << '\n';
  return os.str();
}

double normalized_alpha(const Eigen::MatrixXd& gradL, const Eigen::MatrixXd& Sigma_K,
                        double alpha_a) {
  const double quad = (gradL * Sigma_K.ldlt().solve(gradL.transpose())).trace();
  if (!(quad > 0.0)) return 0.0;
  return std::sqrt(alpha_a / quad);
}

namespace {

struct StepOutcome {
  Eigen::MatrixXd K;
  double alpha = 0.0;
  double L = 0.0;
  bool ok = false;
};

StepOutcome guarded_step(const LtiSystem& sys, const ChanceSpec& chance,
                         const LinearGaussianPolicy& policy, const GradientBundle& g,
                         double L0, double alpha0) {
  const Eigen::MatrixXd dir = g.gradL * g.Sigma_K.ldlt().solve(
                                  Eigen::MatrixXd::Identity(g.Sigma_K.rows(), g.Sigma_K.cols()));
  StepOutcome out;
  double alpha = alpha0;
  for (int bt = 0; bt < 30; ++bt) {
    Eigen::MatrixXd Kp = policy.K - alpha * dir;
    if (is_stabilizing(sys, Kp)) {
      LinearGaussianPolicy trial(Kp, policy.SigmaSigma);
      const double Lp = lagrangian(sys, trial, chance);
      if (Lp <= L0) {
        out.K = std::move(Kp);
        out.alpha = alpha;
        out.L = Lp;
        out.ok = true;
        return out;
      }
    }
    alpha *= 0.5;
  }
  return out;
}

}  // namespace

Eigen::MatrixXd npg_step(const LtiSystem& sys, const ChanceSpec& chance,
                         const LinearGaussianPolicy& policy, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("npg_step: alpha must be > 0");
  const GradientBundle g = grad_closed_form(sys, policy, chance);
  if (g.gradL.norm() == 0.0) return policy.K;
  const double L0 = lagrangian(sys, policy, chance);
  const StepOutcome out = guarded_step(sys, chance, policy, g, L0, alpha);
  if (!out.ok) {
    DescentTrace t;
    t.records.push_back({0, policy.K, L0, g.gradL.norm(),
                         spectral_radius(sys.A - sys.B * policy.K), alpha});
    throw StepFailure("npg_step: backtracking guard exhausted", std::move(t));
  }
  return out.K;
}

DescentTrace run_exact_npg(const LtiSystem& sys, const ChanceSpec& chance,
                           const Eigen::MatrixXd& K0, const Eigen::MatrixXd& SigmaSigma,
                           const ExactNpgOptions& opt) {
  if (!is_stabilizing(sys, K0)) throw InstabilityError("run_exact_npg: K0 is not stabilizing");
  LinearGaussianPolicy policy(K0, SigmaSigma);
  DescentTrace trace;
  trace.records.reserve(static_cast<std::size_t>(opt.max_iter) + 1);

  for (int it = 0; it <= opt.max_iter; ++it) {
    const GradientBundle g = grad_closed_form(sys, policy, chance);
    const double L = lagrangian(sys, policy, chance);
    const double gn = g.gradL.norm();
    DescentRecord rec{it, policy.K, L, gn, spectral_radius(sys.A - sys.B * policy.K), 0.0};

    if (gn <= opt.tol || it == opt.max_iter ||
        (opt.resid_stop > 0.0 && L - opt.resid_ref <= opt.resid_stop)) {
      trace.records.push_back(std::move(rec));
      trace.converged = gn <= opt.tol ||
                        (opt.resid_stop > 0.0 && L - opt.resid_ref <= opt.resid_stop);
      return trace;
    }

    const double alpha0 = opt.mode == StepMode::Normalized
                              ? normalized_alpha(g.gradL, g.Sigma_K, opt.alpha_a)
                              : opt.alpha_a;
    if (alpha0 == 0.0) {  // zero gradient, converged
      trace.records.push_back(std::move(rec));
      trace.converged = true;
      return trace;
    }
    const StepOutcome out = guarded_step(sys, chance, policy, g, L, alpha0);
    if (!out.ok) {
      trace.records.push_back(std::move(rec));
      throw StepFailure("run_exact_npg: backtracking guard exhausted at iteration " +
                            std::to_string(it),
                        std::move(trace));
    }
    rec.alpha_used = out.alpha;
    trace.records.push_back(std::move(rec));
    policy = LinearGaussianPolicy(out.K, SigmaSigma);
  }
  return trace;  // unreachable
}

RateFit fit_linear_rate(const DescentTrace& trace, double L_star, double floor_rel) {
  std::vector<double> logr;
  for (const auto& r : trace.records) {
    const double resid = r.L_value - L_star;
    if (resid > floor_rel * std::max(1.0, std::abs(L_star))) logr.push_back(std::log(resid));
  }
  RateFit fit;
  const int m = static_cast<int>(logr.size());
  const int i0 = m - (2 * m) / 3;
  const int cnt = m - i0;
  fit.points = cnt;
  if (cnt < 3) return fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = i0; i < m; ++i) {
    sx += i;
    sy += logr[i];
    sxx += double(i) * i;
    sxy += i * logr[i];
  }
  const double denom = cnt * sxx - sx * sx;
  const double slope = (cnt * sxy - sx * sy) / denom;
  const double icept = (sy - slope * sx) / cnt;
  double ss_res = 0, ss_tot = 0;
  const double ybar = sy / cnt;
  for (int i = i0; i < m; ++i) {
    const double pred = slope * i + icept;
    ss_res += (logr[i] - pred) * (logr[i] - pred);
    ss_tot += (logr[i] - ybar) * (logr[i] - ybar);
  }
  fit.beta = std::exp(slope);
  fit.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

namespace {

// Rejection-samples gains K* + radius * G (G standard normal entries) that
// stay stabilizing and inside the zeta sublevel set.
std::vector<Eigen::MatrixXd> sample_sublevel(const LtiSystem& sys, const ChanceSpec& chance,
                                             const Eigen::MatrixXd& K_star,
                                             const Eigen::MatrixXd& SigmaSigma, double zeta,
                                             int wanted, double radius, std::uint64_t seed) {
  std::vector<Eigen::MatrixXd> out;
  Rng rng(seed);
  const Eigen::Index p = K_star.rows(), n = K_star.cols();
  int attempts = 0;
  while (static_cast<int>(out.size()) < wanted && attempts < wanted * 200) {
    ++attempts;
    Eigen::MatrixXd K = K_star;
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = 0; j < n; ++j) K(i, j) += radius * rng.normal();
    if (!is_stabilizing(sys, K)) continue;
    LinearGaussianPolicy pol(K, SigmaSigma);
    if (lagrangian(sys, pol, chance) <= zeta) out.push_back(std::move(K));
  }
  if (out.empty()) throw SolverError("probe: no stabilizing samples found in sublevel set");
  return out;
}

}  // namespace

ProbeResult gradient_dominance_probe(const LtiSystem& sys, const ChanceSpec& chance,
                                     const Eigen::MatrixXd& K_star,
                                     const Eigen::MatrixXd& SigmaSigma, double zeta,
                                     int n_samples, double radius, std::uint64_t seed) {
  const LinearGaussianPolicy star(K_star, SigmaSigma);
  const double L_star = lagrangian(sys, star, chance);
  const auto samples = sample_sublevel(sys, chance, K_star, SigmaSigma, zeta, n_samples,
                                       radius, seed);
  std::vector<double> ratio(samples.size(), 0.0);
  parallel_for_indexed(samples.size(), [&](std::size_t i) {
    LinearGaussianPolicy pol(samples[i], SigmaSigma);
    const double gap = lagrangian(sys, pol, chance) - L_star;
    const double g2 = grad_closed_form(sys, pol, chance).gradL.squaredNorm();
    ratio[i] = g2 > 0 ? gap / g2 : 0.0;  // exact optimum excluded by convention
  });
  ProbeResult r;
  r.samples_used = static_cast<int>(samples.size());
  r.all_hold = true;
  for (double v : ratio) {
    if (!std::isfinite(v)) r.all_hold = false;
    r.value = std::max(r.value, v);
  }
  return r;
}

ProbeResult smoothness_probe(const LtiSystem& sys, const ChanceSpec& chance,
                             const Eigen::MatrixXd& K_star, const Eigen::MatrixXd& SigmaSigma,
                             double zeta, int n_pairs, double radius, std::uint64_t seed) {
  const auto samples = sample_sublevel(sys, chance, K_star, SigmaSigma, zeta, 2 * n_pairs,
                                       radius, seed);
  const std::size_t pairs = samples.size() / 2;
  if (pairs == 0) throw SolverError("smoothness_probe: not enough samples");
  std::vector<double> lips(pairs, 0.0);
  parallel_for_indexed(pairs, [&](std::size_t i) {
    const Eigen::MatrixXd& K1 = samples[2 * i];
    const Eigen::MatrixXd& K2 = samples[2 * i + 1];
    const double dk = (K1 - K2).norm();
    if (dk < 1e-12) return;  // identical pair, skip
    const Eigen::MatrixXd g1 = grad_closed_form(sys, {K1, SigmaSigma}, chance).gradL;
    const Eigen::MatrixXd g2 = grad_closed_form(sys, {K2, SigmaSigma}, chance).gradL;
    lips[i] = (g1 - g2).norm() / dk;
  });
  ProbeResult r;
  r.samples_used = static_cast<int>(pairs);
  for (double v : lips) r.value = std::max(r.value, v);
  const Eigen::MatrixXd SigK = stationary_covariance(sys, {K_star, SigmaSigma});
  const double tr_inv =
      SigK.ldlt().solve(Eigen::MatrixXd::Identity(SigK.rows(), SigK.cols())).trace();
  r.step_bound = r.value > 0 ? 2.0 / (r.value * tr_inv) : 0.0;
  r.all_hold = std::isfinite(r.value) && r.value > 0.0;
  return r;
}

}  // namespace riskgrad
