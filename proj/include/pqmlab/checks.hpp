#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pqmlab/config.hpp"
#include "pqmlab/losses.hpp"
#include "pqmlab/scorer.hpp"

namespace pqm {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// exact_q_table against brute_force_q for random (alpha, beta) and
/// horizons 1..max_horizon, at every state.
CheckResult check_oracle_equivalence(int n_pairs, int max_horizon, double tolerance, std::uint64_t seed);

/// Ranking chain on exact Q-values over random assumption-satisfying regimes
/// and label patterns.
CheckResult check_theorem_suite(int n_regimes, int n_patterns, std::uint64_t seed);

/// Ranking chain for one explicit regime. Fails (with the refusal reason) when
/// the regime violates the assumption.
CheckResult check_theorem_regime(double alpha, double beta, int horizon, int n_patterns, std::uint64_t seed);

/// Near-deterministic limit: every correct-state Q above 0.99 and every
/// wrong-state Q below 0.01.
CheckResult check_limit(double alpha, double beta, int horizon);

/// Monte-Carlo estimate of correct-state dominance.
CheckResult check_assumption(double alpha, double beta, int horizon, std::size_t n_states,
                             std::size_t n_rollouts, std::uint64_t seed);

/// Random layered MDPs under random potentials and under the optimal value.
CheckResult check_shaping(int n_mdps, std::uint64_t seed);

/// grad_check for one family at random score vectors.
CheckResult check_loss_gradients(const LossSpec& spec, int n_points, double tolerance, std::uint64_t seed);

/// parameter_grad against central finite differences of batch_loss over the
/// parameters of a random model.
CheckResult check_scorer_gradients(const LossSpec& spec, ScorerKind kind, int n_points,
                                   double tolerance, std::uint64_t seed);

/// Max relative error of parameter_grad at one random (model, batch) point.
double scorer_grad_error(const LossSpec& spec, ScorerKind kind, std::uint64_t seed);

/// The whole battery behind the validate subcommand.
std::vector<CheckResult> run_validation(const ValidateSettings& settings, std::uint64_t seed, int threads = 1);

}  // namespace pqm
