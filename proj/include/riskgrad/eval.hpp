#pragma once

#include <optional>
#include <string>
#include <vector>

#include "riskgrad/config.hpp"

namespace riskgrad {

struct MetricsRecord {
  std::string method;
  std::optional<double> lambda;  // set for lambda-parameterized runs
  std::optional<double> delta;   // set for delta-parameterized runs
  double J = 0.0;
  double Jc = 0.0;
  double J_stderr = 0.0;
  double Jc_stderr = 0.0;
  double wallclock = 0.0;  // seconds; 0 unless timing was requested
  std::uint64_t seed = 0;

  bool operator==(const MetricsRecord&) const = default;
};

// Ergodic J and J_c of a fixed policy: time averages over eval_steps after
// burn_in, replicated over the evaluation seeds for standard errors. When
// cross_check is set the averages are compared against the closed forms and
// a discrepancy beyond 4 standard errors raises NumericalError.
MetricsRecord evaluate_policy(const LtiSystem& sys, const ChanceSpec& chance,
                              const LinearGaussianPolicy& policy, const EvaluationConfig& eval,
                              bool cross_check = true);

struct SweepFailure {
  double lambda = 0.0;
  std::string message;
};

struct SweepResult {
  std::vector<MetricsRecord> records;
  std::vector<SweepFailure> failures;
};

// Runs the configured method once per lambda_grid entry (policy-gradient
// methods warm-start from the previous grid point) and evaluates each result.
SweepResult sweep_lambda(const ExperimentConfig& cfg, std::uint64_t seed);

enum class EmitFormat { Csv, Json };

// method,lambda,delta,J,Jc,J_stderr,Jc_stderr,wallclock,seed; '.' decimals,
// ',' separator, header row; empty cells for unset lambda/delta.
std::string metrics_csv(const std::vector<MetricsRecord>& records);
std::string metrics_json(const std::vector<MetricsRecord>& records);
void emit(const std::vector<MetricsRecord>& records, EmitFormat format,
          const std::string& path);

// Inverse of metrics_csv, for round-trip checks and downstream tooling.
std::vector<MetricsRecord> parse_metrics_csv(const std::string& text);

}  // namespace riskgrad
