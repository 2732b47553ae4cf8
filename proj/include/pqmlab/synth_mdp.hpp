#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pqmlab/rng.hpp"
#include "pqmlab/trajectory.hpp"

namespace pqm {

/// Latent correctness dynamics of a synthetic reasoning policy.
///
/// The latent state after step t is either correct or wrong. From a correct
/// state the next step is correct with probability `alpha`; from a wrong state
/// with probability `beta` (recovery). The bare question counts as a correct
/// state. The trajectory succeeds iff the state after step H is correct.
struct PolicyParams {
  double alpha = 0.9;
  double beta = 0.1;
  int horizon = 6;
  double feature_noise = 1.0;
  int distractor_count = 4;

  /// Throws ValidationError on out-of-range fields.
  void validate() const;
  /// alpha > 1 - alpha and correct states dominate wrong ones in success
  /// probability (equivalent to alpha > beta for this chain).
  bool assumption_satisfied() const;
};

/// Exact success probabilities (sigma-domain Q-values). Vectors are indexed
/// by step position t - 1.
struct QOracleTable {
  std::vector<double> q_correct;
  std::vector<double> q_wrong;
  double v_root = 0.0;

  double at(int t, bool correct) const {
    return (correct ? q_correct : q_wrong)[static_cast<std::size_t>(t - 1)];
  }
};

QOracleTable exact_q_table(const PolicyParams& params);

inline constexpr int kBruteForceMaxHorizon = 20;

/// Success probability from the state after step t (t = 0 is the question),
/// by enumerating every latent continuation. Independent of exact_q_table.
double brute_force_q(const PolicyParams& params, int t, bool correct);

double sigmoid(double x);
/// Inverse sigmoid; returns -inf at 0 and +inf at 1.
double logit(double p);

/// Memoryless-feature layout emitted by the simulator for each step.
struct FeatureLayout {
  int base_dim = 4;           ///< noisy observation of the latent class
  bool prefix_mean = false;   ///< running mean of observations over steps 1..t
  bool prefix_min = false;    ///< running min of the class-separating projection
  bool position = false;      ///< t / H

  int dim() const {
    return base_dim * (prefix_mean ? 2 : 1) + (prefix_min ? 1 : 0) + (position ? 1 : 0);
  }
};

/// Draws a trajectory and its ground-truth labels. Deterministic in
/// (params, layout, question_id, seed).
std::pair<Trajectory, StepLabels> sample_trajectory(const PolicyParams& params,
                                                    const FeatureLayout& layout,
                                                    const std::string& question_id,
                                                    std::uint64_t seed);

/// Latent chain only, shared by the sampler and Monte-Carlo completions.
/// Returns the latent correctness of steps start+1..H given the state after
/// step `start`.
std::vector<bool> roll_latent_chain(double alpha, double beta, int horizon, int start,
                                    bool start_correct, Rng& rng);

struct Estimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t n = 0;
};

struct AssumptionReport {
  Estimate next_correct_given_correct;
  Estimate next_correct_given_wrong;
  Estimate success_given_correct;
  Estimate success_given_wrong;

  struct Position {
    int t = 0;
    Estimate success_given_correct;
    Estimate success_given_wrong;
  };
  std::vector<Position> by_position;
};

/// Monte-Carlo check of the correct-state dominance assumption. `n_states`
/// reasoning states are visited, alternating correct and wrong and cycling
/// over positions 1..H-1; from each one `n_rollouts` completions are drawn
/// and the next-step correctness and final success are recorded.
AssumptionReport validate_assumption(const PolicyParams& params, std::size_t n_states,
                                     std::size_t n_rollouts, std::uint64_t seed);

struct RankingViolation {
  std::string lower;  ///< element expected to be smaller, e.g. "w2", "Q0", "c1"
  std::string upper;
  double lower_value = 0.0;
  double upper_value = 0.0;
};

/// Checks every pairwise inequality of the chain
///   Q_{w_|W|} < ... < Q_{w_1} < Q_0 < Q_{c_1} < ... < Q_{c_|C|}
/// on exact success probabilities. Throws PreconditionError outside the
/// assumption regime.
std::vector<RankingViolation> validate_theorem_ranking(const PolicyParams& params,
                                                       const StepLabels& labels);

/// Named (alpha, beta) ranges of increasing policy quality.
struct PolicyPreset {
  std::string name;
  double alpha_lo, alpha_hi;
  double beta_lo, beta_hi;
};

const std::vector<PolicyPreset>& policy_presets();
const PolicyPreset& find_policy_preset(const std::string& name);

}  // namespace pqm
