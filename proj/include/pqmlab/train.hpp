#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pqmlab/losses.hpp"
#include "pqmlab/scorer.hpp"
#include "pqmlab/synth_mdp.hpp"
#include "pqmlab/trajectory.hpp"

namespace pqm {

enum class OptimizerKind { sgd_momentum, adaptive_moment };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  LossSpec loss;
  double learning_rate = 2e-3;
  int steps = 500;
  int batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::adaptive_moment;
  std::uint64_t seed = 0;
  int eval_every = 50;
  /// Linear warmup over this fraction of steps, then cosine decay to zero.
  double warmup_fraction = 0.1;
  int threads = 1;

  void validate() const;
  /// SHA-256 of the canonical JSON form (thread count excluded).
  std::string digest() const;
};

/// One training unit: a scored sequence of step features and its labels.
/// For the inter-solution families the sequence is a flattened step tree
/// (see tree_labels).
struct TrainExample {
  std::vector<std::vector<double>> features;
  StepLabels labels;
  std::vector<double> soft_targets;  ///< empty when unavailable
  std::vector<bool> latent;          ///< ground truth, empty when unavailable
};

/// Converts corpus records; throws ValidationError when the family needs
/// data the corpus lacks (soft labels for mse_soft, sibling trees for
/// inter_*).
std::vector<TrainExample> examples_from_corpus(const Corpus& corpus, const LossSpec& loss);

/// Sibling-step tree drawn from the simulator: `prefix` latently correct
/// steps, then `n_pairs` depths each with a correct and a wrong sibling.
TrainExample sample_tree_example(const PolicyParams& params, const FeatureLayout& layout,
                                 int prefix, int n_pairs, std::uint64_t seed);

/// Mean loss over `batch`.
double batch_loss(const ScorerModel& model, std::span<const TrainExample> batch, const LossSpec& loss);

/// Gradient of batch_loss with respect to the model parameters. Per-example
/// gradients are reduced in index order, so the result does not depend on
/// `threads`.
std::vector<double> parameter_grad(const ScorerModel& model, std::span<const TrainExample> batch,
                                   const LossSpec& loss, int threads = 1,
                                   double* loss_value = nullptr);

/// Fraction of (latently correct, latently wrong) step pairs within an
/// example that the model orders correctly. Empty when no example carries
/// ground truth.
std::optional<double> rank_agreement(const ScorerModel& model, std::span<const TrainExample> examples);

struct TraceRow {
  int step = 0;
  double loss = 0.0;
  std::optional<double> rank_agreement;

  bool operator==(const TraceRow&) const = default;
};

struct TrainResult {
  ScorerModel model;
  std::vector<TraceRow> trace;
};

/// Minibatch first-order training. Batches come from per-epoch permutations
/// derived from cfg.seed; the trace holds the full-corpus loss at step 0,
/// every eval_every steps and at the end.
TrainResult train(ScorerModel model, std::span<const TrainExample> examples, const TrainConfig& cfg);

}  // namespace pqm
