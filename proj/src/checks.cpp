#include "pqmlab/checks.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "pqmlab/error.hpp"
#include "pqmlab/parallel.hpp"
#include "pqmlab/rng.hpp"
#include "pqmlab/shaping.hpp"
#include "pqmlab/synth_mdp.hpp"
#include "pqmlab/train.hpp"

namespace pqm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<bool> random_pattern(Rng& rng, int horizon) {
  std::vector<bool> out(static_cast<std::size_t>(horizon));
  for (auto&& b : out) b = rng.bernoulli(0.5);
  return out;
}

/// Labels suited to the family: tree-shaped for inter_*, arbitrary otherwise.
StepLabels random_labels(LossFamily family, Rng& rng) {
  if (family == LossFamily::inter_pair) return tree_labels(static_cast<int>(rng.below(4)), 1);
  if (family == LossFamily::inter_tree) {
    return tree_labels(static_cast<int>(rng.below(4)), 1 + static_cast<int>(rng.below(3)));
  }
  return StepLabels(random_pattern(rng, 1 + static_cast<int>(rng.below(8))));
}

std::vector<double> random_soft(Rng& rng, std::size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) v = rng.uniform();
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

}  // namespace

CheckResult check_oracle_equivalence(int n_pairs, int max_horizon, double tolerance, std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < n_pairs; ++i) {
    PolicyParams p;
    p.alpha = rng.uniform();
    p.beta = rng.uniform();
    p.horizon = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_horizon)));
    const QOracleTable table = exact_q_table(p);
    worst = std::max(worst, std::abs(table.v_root - brute_force_q(p, 0, true)));
    for (int t = 1; t <= p.horizon; ++t) {
      worst = std::max(worst, std::abs(table.at(t, true) - brute_force_q(p, t, true)));
      worst = std::max(worst, std::abs(table.at(t, false) - brute_force_q(p, t, false)));
    }
  }
  return {"oracle_equivalence", worst <= tolerance,
          std::to_string(n_pairs) + " pairs, max abs diff " + format_double(worst), seconds_since(start)};
}

CheckResult check_theorem_suite(int n_regimes, int n_patterns, std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng(seed);
  std::size_t violations = 0;
  std::string first;
  for (int r = 0; r < n_regimes; ++r) {
    PolicyParams p;
    p.alpha = rng.uniform(0.7, 0.99);
    p.beta = rng.uniform(0.01, 0.3);
    p.horizon = 1 + static_cast<int>(rng.below(8));
    for (int k = 0; k < n_patterns; ++k) {
      const auto found = validate_theorem_ranking(p, StepLabels(random_pattern(rng, p.horizon)));
      if (!found.empty() && first.empty()) {
        first = "; first: " + found.front().lower + " >= " + found.front().upper;
      }
      violations += found.size();
    }
  }
  return {"theorem_ranking_suite", violations == 0,
          std::to_string(n_regimes) + " regimes x " + std::to_string(n_patterns) + " patterns, " +
              std::to_string(violations) + " violations" + first,
          seconds_since(start)};
}

CheckResult check_theorem_regime(double alpha, double beta, int horizon, int n_patterns, std::uint64_t seed) {
  const auto start = Clock::now();
  PolicyParams p;
  p.alpha = alpha;
  p.beta = beta;
  p.horizon = horizon;
  Rng rng(seed);
  std::size_t violations = 0;
  try {
    for (int k = 0; k < n_patterns; ++k) {
      violations += validate_theorem_ranking(p, StepLabels(random_pattern(rng, horizon))).size();
    }
  } catch (const PreconditionError& e) {
    return {"theorem_ranking_configured", false, std::string("refused: ") + e.what(), seconds_since(start)};
  }
  return {"theorem_ranking_configured", violations == 0,
          "alpha " + format_double(alpha) + ", beta " + format_double(beta) + ", " +
              std::to_string(violations) + " violations",
          seconds_since(start)};
}

CheckResult check_limit(double alpha, double beta, int horizon) {
  const auto start = Clock::now();
  PolicyParams p;
  p.alpha = alpha;
  p.beta = beta;
  p.horizon = horizon;
  const QOracleTable table = exact_q_table(p);
  double min_correct = 1.0, max_wrong = 0.0;
  for (int t = 1; t <= horizon; ++t) {
    min_correct = std::min(min_correct, table.at(t, true));
    max_wrong = std::max(max_wrong, table.at(t, false));
  }
  return {"near_deterministic_limit", min_correct > 0.99 && max_wrong < 0.01,
          "min q_correct " + format_double(min_correct) + ", max q_wrong " + format_double(max_wrong),
          seconds_since(start)};
}

CheckResult check_assumption(double alpha, double beta, int horizon, std::size_t n_states,
                             std::size_t n_rollouts, std::uint64_t seed) {
  const auto start = Clock::now();
  PolicyParams p;
  p.alpha = alpha;
  p.beta = beta;
  p.horizon = horizon;
  const AssumptionReport r = validate_assumption(p, n_states, n_rollouts, seed);
  // Two standard errors of separation on both halves of the assumption.
  const double se_gap = std::hypot(r.success_given_correct.standard_error, r.success_given_wrong.standard_error);
  const bool dominance = r.success_given_correct.mean - r.success_given_wrong.mean > 2.0 * se_gap;
  const bool stays = r.next_correct_given_correct.mean - 0.5 > 2.0 * r.next_correct_given_correct.standard_error;
  return {"assumption_monte_carlo", dominance && stays,
          "P(next ok|ok) " + format_double(r.next_correct_given_correct.mean) + ", P(success|ok) " +
              format_double(r.success_given_correct.mean) + ", P(success|wrong) " +
              format_double(r.success_given_wrong.mean),
          seconds_since(start)};
}

CheckResult check_shaping(int n_mdps, std::uint64_t seed) {
  const auto start = Clock::now();
  const TabularMdpSize size;
  int agree = 0;
  for (int i = 0; i < n_mdps; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    std::vector<double> potential(static_cast<std::size_t>(size.max_states));
    for (auto& v : potential) v = rng.uniform(-5.0, 5.0);
    if (shaping_equivalence_check(size, potential, rng.next_u64())) ++agree;
  }
  return {"shaping_equivalence", agree == n_mdps,
          std::to_string(agree) + "/" + std::to_string(n_mdps) + " MDPs keep their optimal actions",
          seconds_since(start)};
}

CheckResult check_loss_gradients(const LossSpec& spec, int n_points, double tolerance, std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < n_points; ++i) {
    const StepLabels labels = random_labels(spec.family, rng);
    std::vector<double> point(static_cast<std::size_t>(labels.size()));
    for (auto& v : point) v = 2.0 * rng.normal();
    const auto soft = random_soft(rng, point.size());
    worst = std::max(worst, grad_check(spec, labels, point, 1e-5, soft));
  }
  std::string name = "grad_loss_";
  name += to_string(spec.family);
  return {name, worst < tolerance,
          std::to_string(n_points) + " points, max rel err " + format_double(worst), seconds_since(start)};
}

double scorer_grad_error(const LossSpec& spec, ScorerKind kind, std::uint64_t seed) {
  constexpr int kDim = 5;
  Rng rng(seed);
  ScorerModel model = kind == ScorerKind::linear ? ScorerModel::make_linear(kDim)
                                                 : ScorerModel::make_mlp1(kDim, 4, rng.next_u64());
  for (auto& v : model.params) v = 0.5 * rng.normal();

  std::vector<TrainExample> batch(3);
  for (auto& ex : batch) {
    ex.labels = random_labels(spec.family, rng);
    ex.features.resize(static_cast<std::size_t>(ex.labels.size()));
    for (auto& f : ex.features) {
      f.resize(kDim);
      for (auto& v : f) v = rng.normal();
    }
    ex.soft_targets = random_soft(rng, ex.features.size());
  }

  const std::vector<double> analytic = parameter_grad(model, batch, spec);
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const double saved = model.params[i];
    model.params[i] = saved + h;
    const double up = batch_loss(model, batch, spec);
    model.params[i] = saved - h;
    const double down = batch_loss(model, batch, spec);
    model.params[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - analytic[i]) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

CheckResult check_scorer_gradients(const LossSpec& spec, ScorerKind kind, int n_points,
                                   double tolerance, std::uint64_t seed) {
  const auto start = Clock::now();
  double worst = 0.0;
  for (int i = 0; i < n_points; ++i) {
    worst = std::max(worst, scorer_grad_error(spec, kind, derive_seed(seed, static_cast<std::uint64_t>(i))));
  }
  std::string name = "grad_scorer_";
  name += to_string(kind);
  name += "_";
  name += to_string(spec.family);
  return {name, worst < tolerance,
          std::to_string(n_points) + " points, max rel err " + format_double(worst), seconds_since(start)};
}

std::vector<CheckResult> run_validation(const ValidateSettings& s, std::uint64_t seed, int threads) {
  std::vector<std::function<CheckResult()>> jobs;
  jobs.push_back([&] { return check_oracle_equivalence(s.n_oracle_pairs, 12, 1e-12, derive_seed(seed, "oracle")); });
  jobs.push_back([&] { return check_theorem_suite(s.n_regimes, s.n_patterns, derive_seed(seed, "theorem")); });
  jobs.push_back([&] {
    return check_theorem_regime(s.alpha, s.beta, s.horizon, s.n_patterns, derive_seed(seed, "regime"));
  });
  jobs.push_back([&] {
    PolicyParams p;
    p.alpha = s.alpha;
    p.beta = s.beta;
    p.horizon = s.horizon;
    if (p.horizon < 2) {
      return CheckResult{"assumption_monte_carlo", false, "horizon must be at least 2", 0.0};
    }
    return check_assumption(s.alpha, s.beta, s.horizon, s.assumption_states, s.assumption_rollouts,
                            derive_seed(seed, "assumption"));
  });
  jobs.push_back([] { return check_limit(1.0 - 1e-3, 1e-3, 5); });
  jobs.push_back([&] { return check_shaping(s.n_mdps, derive_seed(seed, "shaping")); });
  for (LossFamily family : all_loss_families()) {
    LossSpec spec;
    spec.family = family;
    jobs.push_back([&s, spec, seed] {
      return check_loss_gradients(spec, s.n_grad_points, s.grad_tolerance,
                                  derive_seed(seed, "grad", static_cast<std::uint64_t>(spec.family)));
    });
    for (ScorerKind kind : {ScorerKind::linear, ScorerKind::mlp1}) {
      jobs.push_back([&s, spec, kind, seed] {
        return check_scorer_gradients(
            spec, kind, s.n_grad_points, s.scorer_grad_tolerance,
            derive_seed(seed, "scorer-grad", static_cast<std::uint64_t>(spec.family),
                        static_cast<std::uint64_t>(kind)));
      });
    }
  }
  std::vector<CheckResult> results(jobs.size());
  parallel_for(jobs.size(), threads, [&](std::size_t i) {
    try {
      results[i] = jobs[i]();
    } catch (const std::exception& e) {
      results[i] = {"check_" + std::to_string(i), false, std::string("error: ") + e.what(), 0.0};
    }
  });
  return results;
}

}  // namespace pqm
