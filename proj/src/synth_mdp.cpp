#include "pqmlab/synth_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pqmlab/error.hpp"

namespace pqm {

void PolicyParams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha", "must lie in [0, 1]");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("beta", "must lie in [0, 1]");
  if (horizon < 1) throw ValidationError("horizon", "must be positive");
  if (!(feature_noise >= 0.0)) throw ValidationError("feature_noise", "must be nonnegative");
  if (distractor_count < 1) throw ValidationError("distractor_count", "must be positive");
}

bool PolicyParams::assumption_satisfied() const {
  // f_k - g_k = (alpha - beta)^k, so success dominance at every horizon is
  // exactly alpha > beta.
  return alpha > 1.0 - alpha && alpha > beta;
}

QOracleTable exact_q_table(const PolicyParams& params) {
  params.validate();
  const int horizon = params.horizon;
  // f_k / g_k: success probability with k steps remaining from a correct /
  // wrong state.
  std::vector<double> f(static_cast<std::size_t>(horizon) + 1);
  std::vector<double> g(static_cast<std::size_t>(horizon) + 1);
  f[0] = 1.0;
  g[0] = 0.0;
  for (int k = 1; k <= horizon; ++k) {
    f[k] = params.alpha * f[k - 1] + (1.0 - params.alpha) * g[k - 1];
    g[k] = params.beta * f[k - 1] + (1.0 - params.beta) * g[k - 1];
  }
  QOracleTable table;
  table.q_correct.resize(static_cast<std::size_t>(horizon));
  table.q_wrong.resize(static_cast<std::size_t>(horizon));
  for (int t = 1; t <= horizon; ++t) {
    table.q_correct[t - 1] = f[horizon - t];
    table.q_wrong[t - 1] = g[horizon - t];
  }
  table.v_root = f[horizon];
  return table;
}

double brute_force_q(const PolicyParams& params, int t, bool correct) {
  params.validate();
  if (params.horizon > kBruteForceMaxHorizon) {
    throw PreconditionError("brute_force_q: horizon " + std::to_string(params.horizon) +
                            " exceeds enumeration guard of " +
                            std::to_string(kBruteForceMaxHorizon));
  }
  if (t < 0 || t > params.horizon) throw ValidationError("t", "must lie in [0, H]");
  if (t == 0 && !correct) throw ValidationError("correct", "the question is a correct state");
  const int remaining = params.horizon - t;
  const std::uint64_t n_paths = std::uint64_t{1} << remaining;
  double total = 0.0;
  for (std::uint64_t mask = 0; mask < n_paths; ++mask) {
    double prob = 1.0;
    bool state = correct;
    for (int k = 0; k < remaining; ++k) {
      const bool next = (mask >> k) & 1U;
      const double p_correct = state ? params.alpha : params.beta;
      prob *= next ? p_correct : 1.0 - p_correct;
      state = next;
    }
    if (state) total += prob;
  }
  return total;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return std::log(p) - std::log1p(-p);
}

std::vector<bool> roll_latent_chain(double alpha, double beta, int horizon, int start,
                                    bool start_correct, Rng& rng) {
  std::vector<bool> out;
  out.reserve(static_cast<std::size_t>(std::max(0, horizon - start)));
  bool state = start_correct;
  for (int t = start + 1; t <= horizon; ++t) {
    state = rng.bernoulli(state ? alpha : beta);
    out.push_back(state);
  }
  return out;
}

std::pair<Trajectory, StepLabels> sample_trajectory(const PolicyParams& params,
                                                    const FeatureLayout& layout,
                                                    const std::string& question_id,
                                                    std::uint64_t seed) {
  params.validate();
  if (layout.base_dim < 1) throw ValidationError("base_dim", "must be positive");
  Rng rng(derive_seed(seed, question_id));
  const std::vector<bool> latent =
      roll_latent_chain(params.alpha, params.beta, params.horizon, 0, true, rng);

  const auto dim = static_cast<std::size_t>(layout.base_dim);
  // Class means are +-u/2 with u the normalized all-ones direction, so the two
  // means sit at unit distance.
  const double half_sep = 0.5 / std::sqrt(static_cast<double>(dim));

  Trajectory traj;
  traj.question_id = question_id;
  traj.gold_answer = 0;
  traj.policy = PolicyTag{params.alpha, params.beta};
  std::vector<double> running_sum(dim, 0.0);
  double running_min = std::numeric_limits<double>::infinity();
  for (int t = 1; t <= params.horizon; ++t) {
    const bool correct = latent[static_cast<std::size_t>(t - 1)];
    Step step;
    step.index = t;
    step.latent_correct = correct;
    std::vector<double> obs(dim);
    double projection = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      obs[d] = (correct ? half_sep : -half_sep) + params.feature_noise * rng.normal();
      running_sum[d] += obs[d];
      projection += obs[d];
    }
    projection /= std::sqrt(static_cast<double>(dim));
    running_min = std::min(running_min, projection);

    step.features = obs;
    if (layout.prefix_mean) {
      for (std::size_t d = 0; d < dim; ++d) step.features.push_back(running_sum[d] / t);
    }
    if (layout.prefix_min) step.features.push_back(running_min);
    if (layout.position) step.features.push_back(static_cast<double>(t) / params.horizon);
    traj.steps.push_back(std::move(step));
  }
  traj.final_answer =
      latent.back() ? traj.gold_answer
                    : static_cast<AnswerToken>(
                          1 + rng.below(static_cast<std::uint64_t>(params.distractor_count)));
  return {std::move(traj), StepLabels(latent)};
}

namespace {

Estimate bernoulli_estimate(std::size_t hits, std::size_t n) {
  Estimate e;
  e.n = n;
  if (n == 0) return e;
  e.mean = static_cast<double>(hits) / static_cast<double>(n);
  e.standard_error = std::sqrt(e.mean * (1.0 - e.mean) / static_cast<double>(n));
  return e;
}

}  // namespace

AssumptionReport validate_assumption(const PolicyParams& params, std::size_t n_states,
                                     std::size_t n_rollouts, std::uint64_t seed) {
  params.validate();
  if (n_states == 0 || n_rollouts == 0) {
    throw ValidationError("budget", "n_states and n_rollouts must be positive");
  }
  if (params.horizon < 2) throw ValidationError("horizon", "needs at least two steps");
  const int positions = params.horizon - 1;

  struct Counts {
    std::size_t next_hits = 0, success_hits = 0, n = 0;
  };
  std::vector<Counts> correct_counts(static_cast<std::size_t>(positions));
  std::vector<Counts> wrong_counts(static_cast<std::size_t>(positions));

  for (std::size_t i = 0; i < n_states; ++i) {
    const bool state_correct = (i % 2) == 0;
    const int t = 1 + static_cast<int>((i / 2) % static_cast<std::size_t>(positions));
    Counts& c = (state_correct ? correct_counts : wrong_counts)[static_cast<std::size_t>(t - 1)];
    for (std::size_t r = 0; r < n_rollouts; ++r) {
      Rng rng(derive_seed(seed, i, r));
      const auto chain =
          roll_latent_chain(params.alpha, params.beta, params.horizon, t, state_correct, rng);
      ++c.n;
      c.next_hits += chain.front() ? 1 : 0;
      c.success_hits += chain.back() ? 1 : 0;
    }
  }

  AssumptionReport report;
  Counts pooled_c, pooled_w;
  for (int t = 1; t <= positions; ++t) {
    const Counts& c = correct_counts[static_cast<std::size_t>(t - 1)];
    const Counts& w = wrong_counts[static_cast<std::size_t>(t - 1)];
    report.by_position.push_back({t, bernoulli_estimate(c.success_hits, c.n),
                                  bernoulli_estimate(w.success_hits, w.n)});
    pooled_c.next_hits += c.next_hits;
    pooled_c.success_hits += c.success_hits;
    pooled_c.n += c.n;
    pooled_w.next_hits += w.next_hits;
    pooled_w.success_hits += w.success_hits;
    pooled_w.n += w.n;
  }
  report.next_correct_given_correct = bernoulli_estimate(pooled_c.next_hits, pooled_c.n);
  report.next_correct_given_wrong = bernoulli_estimate(pooled_w.next_hits, pooled_w.n);
  report.success_given_correct = bernoulli_estimate(pooled_c.success_hits, pooled_c.n);
  report.success_given_wrong = bernoulli_estimate(pooled_w.success_hits, pooled_w.n);
  return report;
}

std::vector<RankingViolation> validate_theorem_ranking(const PolicyParams& params,
                                                       const StepLabels& labels) {
  params.validate();
  if (!params.assumption_satisfied()) {
    throw PreconditionError(
        "ranking theorem requires alpha > 1 - alpha and alpha > beta (got alpha=" +
        std::to_string(params.alpha) + ", beta=" + std::to_string(params.beta) + ")");
  }
  if (labels.size() != params.horizon) {
    throw ValidationError("labels", "length must equal the horizon");
  }
  const QOracleTable table = exact_q_table(params);
  const LabelSplit split = split_labels(labels);

  // Chain in ascending order: w_|W|, ..., w_1, Q0, c_1, ..., c_|C|.
  std::vector<std::pair<std::string, double>> chain;
  for (auto it = split.wrong.rbegin(); it != split.wrong.rend(); ++it) {
    chain.emplace_back("w" + std::to_string(*it), table.at(*it, false));
  }
  chain.emplace_back("Q0", table.v_root);
  for (int c : split.correct) chain.emplace_back("c" + std::to_string(c), table.at(c, true));

  std::vector<RankingViolation> violations;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    for (std::size_t j = i + 1; j < chain.size(); ++j) {
      if (!(chain[i].second < chain[j].second)) {
        violations.push_back({chain[i].first, chain[j].first, chain[i].second, chain[j].second});
      }
    }
  }
  return violations;
}

const std::vector<PolicyPreset>& policy_presets() {
  static const std::vector<PolicyPreset> presets = {
      {"weak", 0.70, 0.80, 0.05, 0.15},
      {"medium", 0.76, 0.84, 0.05, 0.15},
      {"strong", 0.82, 0.88, 0.05, 0.15},
  };
  return presets;
}

const PolicyPreset& find_policy_preset(const std::string& name) {
  for (const auto& p : policy_presets()) {
    if (p.name == name) return p;
  }
  std::string names;
  for (const auto& p : policy_presets()) names += (names.empty() ? "" : ", ") + p.name;
  throw ConfigError("unknown policy preset '" + name + "' (valid: " + names + ")");
}

}  // namespace pqm
