#include "riskgrad/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace riskgrad {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& why) {
  throw ConfigError("config: " + field + ": " + why);
}

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) fail(where + "." + key, "unknown key");
}

Eigen::MatrixXd parse_matrix(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) fail(field, "expected a matrix (array of row arrays)");
  const std::size_t rows = j.size(), cols = j[0].size();
  Eigen::MatrixXd M(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) fail(field, "ragged rows");
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) fail(field, "non-numeric entry");
      M(i, k) = j[i][k].get<double>();
    }
  }
  return M;
}

json matrix_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::VectorXd parse_vector(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) fail(field, "expected a nonempty array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(field, "non-numeric entry");
    v[i] = j[i].get<double>();
  }
  return v;
}

json vector_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

double get_num(const json& obj, const char* key, double dflt, const std::string& where,
               double lo = -1e308, double hi = 1e308, bool lo_strict = false) {
  if (!obj.contains(key)) return dflt;
  if (!obj[key].is_number()) fail(where + "." + key, "expected a number");
  const double v = obj[key].get<double>();
  if (v < lo || v > hi || (lo_strict && v <= lo))
    fail(where + "." + key, "out of range");
  return v;
}

long get_int(const json& obj, const char* key, long dflt, const std::string& where, long lo) {
  if (!obj.contains(key)) return dflt;
  if (!obj[key].is_number_integer()) fail(where + "." + key, "expected an integer");
  const long v = obj[key].get<long>();
  if (v < lo) fail(where + "." + key, "out of range");
  return v;
}

}  // namespace

LtiSystem uav_system() {
  Eigen::MatrixXd A(4, 4), B(4, 2);
  A << 1, 0.5, 0, 0,
       0, 1, 0, 0,
       0, 0, 1, 0.5,
       0, 0, 0, 1;
  B << 0.125, 0,
       0.5, 0,
       0, 0.125,
       0, 0.5;
  Eigen::MatrixXd Q = Eigen::Vector4d(1, 0.1, 2, 0.2).asDiagonal();
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd SigmaW = B * Eigen::Vector2d(80, 0.01).asDiagonal() * B.transpose();
  return LtiSystem(A, B, Q, R, SigmaW);
}

ChanceSpec uav_chance() {
  Eigen::VectorXd q(4);
  q << 1, 0.1, 2, 0.2;
  return ChanceSpec(q, 5.0, 0.1, 10.0);
}

ExperimentConfig::ExperimentConfig()
    : system(uav_system()), chance(uav_chance()) {
  method.sigma_sigma = Eigen::MatrixXd::Identity(2, 2);
  method.pg.alpha_a = 0.005;
  method.pg.alpha_c = 0.005;
  method.exact.alpha_a = 0.005;
  method.ddpg.alpha_d = 0.001;
  method.ddpg.sigma_d0 = 5.0;
  method.ddpg.sigma_df = 0.01;
}

namespace {

MethodConfig parse_method(const json& m, const LtiSystem& sys) {
  MethodConfig mc;
  mc.sigma_sigma = Eigen::MatrixXd::Identity(sys.input_dim(), sys.input_dim());
  if (m.is_null()) {
    ExperimentConfig dflt;
    MethodConfig out = dflt.method;
    out.sigma_sigma = Eigen::MatrixXd::Identity(sys.input_dim(), sys.input_dim());
    return out;
  }
  check_keys(m, "method",
             {"name", "sigma_sigma", "K0", "gamma", "eta", "alpha_a", "alpha_c", "N", "M", "T",
              "iters", "eval_interval", "eval_rollouts", "eval_steps", "max_iter", "tol",
              "step_mode", "tau", "alpha_d", "capacity", "batch", "episodes", "sigma_d0",
              "sigma_df", "anneal_fraction", "S", "T_sim", "population", "elites",
              "generations", "probe_samples", "probe_radius", "probe_zeta_margin", "K"});
  if (m.contains("name")) {
    if (!m["name"].is_string()) fail("method.name", "expected a string");
    mc.name = m["name"].get<std::string>();
  }
  static const std::set<std::string> kMethods = {"npg", "gnpg", "ddpg", "exact_npg",
                                                 "lqr",  "clqr", "mpc"};
  if (!kMethods.count(mc.name)) fail("method.name", "unknown method '" + mc.name + "'");

  if (m.contains("sigma_sigma")) {
    if (m["sigma_sigma"].is_number()) {
      mc.sigma_sigma = m["sigma_sigma"].get<double>() *
                       Eigen::MatrixXd::Identity(sys.input_dim(), sys.input_dim());
    } else {
      mc.sigma_sigma = parse_matrix(m["sigma_sigma"], "method.sigma_sigma");
    }
  }
  if (m.contains("K0")) mc.K0 = parse_matrix(m["K0"], "method.K0");
  if (m.contains("K")) mc.eval_K = parse_matrix(m["K"], "method.K");

  mc.pg.gamma = get_num(m, "gamma", 0.98, "method", 0.0, 1.0, true);
  mc.pg.eta = get_num(m, "eta", 0.96, "method", 0.0, 1.0, true);
  mc.pg.alpha_a = get_num(m, "alpha_a", 0.005, "method", 0.0);
  mc.pg.alpha_c = get_num(m, "alpha_c", 0.005, "method", 0.0);
  mc.pg.N = static_cast<int>(get_int(m, "N", 50, "method", 1));
  mc.pg.M = static_cast<int>(get_int(m, "M", 4, "method", 1));
  mc.pg.T = static_cast<int>(get_int(m, "T", 250, "method", 1));
  mc.pg.eval_interval = static_cast<int>(get_int(m, "eval_interval", 10, "method", 1));
  mc.pg.eval_rollouts = static_cast<int>(get_int(m, "eval_rollouts", 2, "method", 1));
  mc.pg.eval_steps = static_cast<int>(get_int(m, "eval_steps", 500, "method", 1));
  mc.pg_iters = static_cast<int>(get_int(m, "iters", 1000, "method", 1));

  mc.exact.alpha_a = mc.pg.alpha_a;
  mc.exact.max_iter = static_cast<int>(get_int(m, "max_iter", 1000, "method", 1));
  mc.exact.tol = get_num(m, "tol", 1e-8, "method", 0.0);
  if (m.contains("step_mode")) {
    if (!m["step_mode"].is_string()) fail("method.step_mode", "expected a string");
    mc.step_mode = m["step_mode"].get<std::string>();
    if (mc.step_mode != "normalized" && mc.step_mode != "fixed")
      fail("method.step_mode", "must be 'normalized' or 'fixed'");
  }
  mc.exact.mode = mc.step_mode == "fixed" ? StepMode::Fixed : StepMode::Normalized;

  mc.ddpg.tau = get_num(m, "tau", 0.01, "method", 0.0, 1.0, true);
  mc.ddpg.alpha_d = get_num(m, "alpha_d", 0.001, "method", 0.0);
  mc.ddpg.gamma = get_num(m, "gamma", mc.name == "ddpg" ? 0.99 : mc.pg.gamma, "method", 0.0,
                          1.0, true);
  mc.ddpg.capacity = static_cast<std::size_t>(get_int(m, "capacity", 1000000, "method", 1));
  mc.ddpg.batch = static_cast<int>(get_int(m, "batch", 64, "method", 1));
  mc.ddpg.episodes = static_cast<int>(get_int(m, "episodes", 300, "method", 1));
  mc.ddpg.T = mc.pg.T;
  mc.ddpg.sigma_d0 = get_num(m, "sigma_d0", 5.0, "method", 0.0, 1e308, true);
  mc.ddpg.sigma_df = get_num(m, "sigma_df", 0.01, "method", 0.0, 1e308, true);
  mc.ddpg.anneal_fraction = get_num(m, "anneal_fraction", 0.8, "method", 0.0, 1.0, true);

  mc.mpc_S = static_cast<int>(get_int(m, "S", 20, "method", 1));
  mc.mpc_T = mc.name == "mpc" ? static_cast<int>(get_int(m, "T", 5, "method", 1)) : 5;
  mc.mpc_T_sim = static_cast<int>(get_int(m, "T_sim", 2000, "method", 1));
  mc.mpc_opt.population = static_cast<int>(get_int(m, "population", 64, "method", 2));
  mc.mpc_opt.elites = static_cast<int>(get_int(m, "elites", 8, "method", 1));
  mc.mpc_opt.generations = static_cast<int>(get_int(m, "generations", 30, "method", 0));

  mc.probe_samples = static_cast<int>(get_int(m, "probe_samples", 200, "method", 1));
  mc.probe_radius = get_num(m, "probe_radius", 0.05, "method", 0.0, 1e308, true);
  mc.probe_zeta_margin = get_num(m, "probe_zeta_margin", 2.0, "method", 1.0);
  return mc;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: JSON parse error: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  check_keys(root, "config", {"system", "chance", "method", "evaluation"});

  // system
  LtiSystem sys = uav_system();
  if (root.contains("system")) {
    const json& s = root["system"];
    check_keys(s, "system", {"A", "B", "Q", "R", "SigmaW"});
    static const char* req[] = {"A", "B", "Q", "R", "SigmaW"};
    for (const char* k : req)
      if (!s.contains(k)) fail(std::string("system.") + k, "missing (give all five matrices)");
    try {
      sys = LtiSystem(parse_matrix(s["A"], "system.A"), parse_matrix(s["B"], "system.B"),
                      parse_matrix(s["Q"], "system.Q"), parse_matrix(s["R"], "system.R"),
                      parse_matrix(s["SigmaW"], "system.SigmaW"));
    } catch (const DimensionError& e) {
      throw ConfigError(std::string("config: system: ") + e.what());
    }
  }

  // chance
  Eigen::VectorXd q = uav_chance().q;
  double eps = 5.0, delta = 0.1, lambda = 10.0;
  std::vector<double> grid;
  if (sys.state_dim() != 4) {
    q = Eigen::VectorXd::Zero(sys.state_dim());
    q[0] = 1.0;
  }
  if (root.contains("chance")) {
    const json& c = root["chance"];
    check_keys(c, "chance", {"q", "eps", "delta", "lambda", "lambda_grid"});
    if (c.contains("q")) q = parse_vector(c["q"], "chance.q");
    eps = get_num(c, "eps", eps, "chance", 0.0, 1e308, true);
    delta = get_num(c, "delta", delta, "chance", 0.0, 1.0, true);
    if (delta >= 1.0) fail("chance.delta", "must be in (0,1)");
    lambda = get_num(c, "lambda", lambda, "chance", 0.0);
    if (c.contains("lambda_grid")) {
      const Eigen::VectorXd g = parse_vector(c["lambda_grid"], "chance.lambda_grid");
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        if (g[i] < 0) fail("chance.lambda_grid", "entries must be >= 0");
        grid.push_back(g[i]);
      }
    }
  }
  if (q.size() != sys.state_dim()) fail("chance.q", "dimension must match the system");

  ExperimentConfig cfg;
  cfg.system = sys;
  cfg.chance = ChanceSpec(q, eps, delta, lambda);
  cfg.lambda_grid = grid;
  cfg.method = parse_method(root.contains("method") ? root["method"] : json(), sys);
  if (cfg.method.sigma_sigma.rows() != sys.input_dim())
    fail("method.sigma_sigma", "dimension must match the input");

  if (root.contains("evaluation")) {
    const json& e = root["evaluation"];
    check_keys(e, "evaluation", {"eval_steps", "eval_rollouts", "burn_in", "seeds"});
    cfg.evaluation.eval_steps = get_int(e, "eval_steps", 100000, "evaluation", 1);
    cfg.evaluation.eval_rollouts =
        static_cast<int>(get_int(e, "eval_rollouts", 5, "evaluation", 1));
    cfg.evaluation.burn_in = get_int(e, "burn_in", 10000, "evaluation", 0);
    if (e.contains("seeds")) {
      if (!e["seeds"].is_array() || e["seeds"].empty())
        fail("evaluation.seeds", "expected a nonempty array");
      cfg.evaluation.seeds.clear();
      for (const auto& s : e["seeds"]) {
        if (!s.is_number_integer() || s.get<long long>() < 0)
          fail("evaluation.seeds", "entries must be nonnegative integers");
        cfg.evaluation.seeds.push_back(s.get<std::uint64_t>());
      }
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  json root;
  root["system"] = {{"A", matrix_json(cfg.system.A)},
                    {"B", matrix_json(cfg.system.B)},
                    {"Q", matrix_json(cfg.system.Q)},
                    {"R", matrix_json(cfg.system.R)},
                    {"SigmaW", matrix_json(cfg.system.SigmaW)}};
  json c;
  c["q"] = vector_json(cfg.chance.q);
  c["eps"] = cfg.chance.eps;
  c["delta"] = cfg.chance.delta;
  c["lambda"] = cfg.chance.lambda;
  if (!cfg.lambda_grid.empty()) c["lambda_grid"] = cfg.lambda_grid;
  root["chance"] = c;

  const MethodConfig& m = cfg.method;
  json mj;
  mj["name"] = m.name;
  mj["sigma_sigma"] = matrix_json(m.sigma_sigma);
  if (m.K0) mj["K0"] = matrix_json(*m.K0);
  if (m.eval_K) mj["K"] = matrix_json(*m.eval_K);
  mj["gamma"] = m.name == "ddpg" ? m.ddpg.gamma : m.pg.gamma;
  mj["eta"] = m.pg.eta;
  mj["alpha_a"] = m.pg.alpha_a;
  mj["alpha_c"] = m.pg.alpha_c;
  mj["N"] = m.pg.N;
  mj["M"] = m.pg.M;
  if (m.name == "mpc")
    mj["T"] = m.mpc_T;
  else
    mj["T"] = m.pg.T;
  mj["iters"] = m.pg_iters;
  mj["eval_interval"] = m.pg.eval_interval;
  mj["eval_rollouts"] = m.pg.eval_rollouts;
  mj["eval_steps"] = m.pg.eval_steps;
  mj["max_iter"] = m.exact.max_iter;
  mj["tol"] = m.exact.tol;
  mj["step_mode"] = m.step_mode;
  mj["tau"] = m.ddpg.tau;
  mj["alpha_d"] = m.ddpg.alpha_d;
  mj["capacity"] = static_cast<long>(m.ddpg.capacity);
  mj["batch"] = m.ddpg.batch;
  mj["episodes"] = m.ddpg.episodes;
  mj["sigma_d0"] = m.ddpg.sigma_d0;
  mj["sigma_df"] = m.ddpg.sigma_df;
  mj["anneal_fraction"] = m.ddpg.anneal_fraction;
  mj["S"] = m.mpc_S;
  mj["T_sim"] = m.mpc_T_sim;
  mj["population"] = m.mpc_opt.population;
  mj["elites"] = m.mpc_opt.elites;
  mj["generations"] = m.mpc_opt.generations;
  mj["probe_samples"] = m.probe_samples;
  mj["probe_radius"] = m.probe_radius;
  mj["probe_zeta_margin"] = m.probe_zeta_margin;
  root["method"] = mj;

  json ej;
  ej["eval_steps"] = cfg.evaluation.eval_steps;
  ej["eval_rollouts"] = cfg.evaluation.eval_rollouts;
  ej["burn_in"] = cfg.evaluation.burn_in;
  ej["seeds"] = cfg.evaluation.seeds;
  root["evaluation"] = ej;
  return root.dump(2);
}

std::string serialize_system(const LtiSystem& sys) {
  json j = {{"A", matrix_json(sys.A)},
            {"B", matrix_json(sys.B)},
            {"Q", matrix_json(sys.Q)},
            {"R", matrix_json(sys.R)},
            {"SigmaW", matrix_json(sys.SigmaW)}};
  return j.dump(2);
}

LtiSystem parse_system(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("system: JSON parse error: ") + e.what());
  }
  check_keys(j, "system", {"A", "B", "Q", "R", "SigmaW"});
  for (const char* k : {"A", "B", "Q", "R", "SigmaW"})
    if (!j.contains(k)) fail(std::string("system.") + k, "missing");
  return LtiSystem(parse_matrix(j["A"], "system.A"), parse_matrix(j["B"], "system.B"),
                   parse_matrix(j["Q"], "system.Q"), parse_matrix(j["R"], "system.R"),
                   parse_matrix(j["SigmaW"], "system.SigmaW"));
}

}  // namespace riskgrad
