#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pqmlab/annotate.hpp"
#include "pqmlab/eval.hpp"
#include "pqmlab/synth_mdp.hpp"
#include "pqmlab/train.hpp"

namespace pqm {

struct ProbabilityRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Environment spec file. Per-question (alpha, beta) come from, in order of
/// precedence, the fixed value, the range, or the named preset ("mixed"
/// cycles through all presets by question index).
struct EnvironmentSpec {
  std::optional<double> alpha;
  std::optional<ProbabilityRange> alpha_range;
  std::optional<double> beta;
  std::optional<ProbabilityRange> beta_range;
  std::string policy_preset = "medium";
  int horizon = 6;
  double feature_noise = 1.0;
  int distractor_count = 4;
  int n_questions = 200;  ///< evaluation questions, one candidate pool each
  int pool_size = 128;
  int n_train = 2000;  ///< training trajectories, one question each
  FeatureLayout layout = {4, false, false, true};  ///< step position on by default

  /// Parameters of question `index`, drawn from `seed`.
  PolicyParams question_params(std::size_t index, std::uint64_t seed) const;
};

EnvironmentSpec environment_from_json(const nlohmann::json& j, const std::string& path = "environment");
nlohmann::ordered_json environment_to_json(const EnvironmentSpec& spec);

struct SimulatedData {
  Corpus train;
  Corpus pools;  ///< pool_size records per evaluation question, grouped
};

/// Deterministic in (spec, seed) regardless of `threads`.
SimulatedData simulate_environment(const EnvironmentSpec& spec, std::uint64_t seed, int threads = 1);

struct ValidateSettings {
  double alpha = 0.9;
  double beta = 0.1;
  int horizon = 6;
  double grad_tolerance = 1e-6;
  double scorer_grad_tolerance = 1e-5;
  int n_oracle_pairs = 200;
  int n_regimes = 100;
  int n_patterns = 1000;
  int n_mdps = 20;
  int n_grad_points = 20;
  std::size_t assumption_states = 2000;
  std::size_t assumption_rollouts = 32;
};

struct ScorerSettings {
  ScorerKind kind = ScorerKind::linear;
  int hidden = 16;
};

struct ExperimentConfig {
  std::filesystem::path source_dir;  ///< relative paths resolve against this
  std::optional<std::uint64_t> seed;
  std::filesystem::path output_dir = "out";
  EnvironmentSpec environment;
  AnnotationConfig annotation;  ///< completer horizon follows the environment
  std::string annotation_preset = "strong";  ///< "custom" for explicit (alpha, beta)
  TrainConfig train;
  bool train_seed_set = false;
  ScorerSettings scorer;
  std::vector<std::size_t> ladder = {1, 8, 16, 32, 64, 128};
  Aggregation aggregation = Aggregation::min;
  WeightMode sc_weight_mode = WeightMode::score_sum;
  ValidateSettings validate;
  std::string digest;  ///< SHA-256 of the canonicalized config
};

/// Throws ConfigError with a dotted field path on any invalid entry.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& source_dir);

}  // namespace pqm
