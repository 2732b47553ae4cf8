#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pqmlab/synth_mdp.hpp"
#include "pqmlab/trajectory.hpp"

namespace pqm {

struct AnnotationConfig {
  PolicyParams completer;  ///< policy that rolls out the completions
  int k_completions = 8;
  bool mark_after_first_error = true;
  /// Keep sampling completions after the first error (soft labels for every
  /// step). Labels are still forced false when mark_after_first_error is set.
  bool full_sampling = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AnnotatedStep {
  bool hard_label = false;  ///< n_success >= 1
  double soft_label = 0.0;  ///< n_success / k
  int n_success = 0;

  bool operator==(const AnnotatedStep&) const = default;
};

struct AnnotationResult {
  StepLabels labels;
  std::vector<AnnotatedStep> steps;

  AnnotationExtension extension(int k) const;
};

/// Monte-Carlo step labelling: a step is correct iff any of k completions
/// from its latent state reaches the gold answer. Requires ground-truth
/// latent states and a matching horizon.
AnnotationResult annotate_trajectory(const Trajectory& traj, const AnnotationConfig& cfg);

/// Applies annotate_trajectory to every record, replacing labels and
/// attaching the soft-label extension. Parallel across records.
Corpus annotate_corpus(const Corpus& corpus, const AnnotationConfig& cfg, int threads = 1);

struct NoiseReport {
  struct Position {
    int t = 0;
    std::size_t true_positive = 0, false_positive = 0, false_negative = 0, true_negative = 0;
    double precision = 1.0;
    double recall = 1.0;
  };
  std::vector<Position> by_position;
  std::size_t true_positive = 0, false_positive = 0, false_negative = 0, true_negative = 0;
  /// Vacuous ratios (no predicted / no actual positives) are reported as 1.
  double precision = 1.0;
  double recall = 1.0;
  /// Mean over trajectories of the fraction of steps whose label matches the
  /// ground truth, and its standard error.
  double agreement = 0.0;
  double agreement_standard_error = 0.0;
  double first_error_accuracy = 0.0;
  /// Labels forced false because they follow the first annotated error.
  std::size_t forced_false = 0;
  /// Forced-false labels whose step is latently correct.
  std::size_t forced_false_negatives = 0;
  double forced_contradiction_rate = 0.0;
  std::size_t n_trajectories = 0;
};

/// Annotates `corpus` with `cfg` and compares against ground truth. Throws
/// ValidationError on an empty corpus or one without latent labels.
NoiseReport annotation_noise_report(std::span<const CorpusRecord> corpus,
                                    const AnnotationConfig& cfg, int threads = 1);

}  // namespace pqm
