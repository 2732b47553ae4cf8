#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pqm {

/// Discrete answer token. The simulator uses 0 for the gold answer and
/// 1..K for distractors, but nothing here depends on that convention.
using AnswerToken = std::int32_t;

/// One reasoning step. `features` stand in for the step text.
struct Step {
  int index = 1;  ///< 1-based position t
  std::vector<double> features;
  std::optional<bool> latent_correct;  ///< ground truth, simulator-born data only

  bool operator==(const Step&) const = default;
};

/// Latent policy parameters a simulated trajectory was drawn from. Present
/// only for simulator-born data; lets oracle scorers recover exact Q-values.
struct PolicyTag {
  double alpha = 0.0;
  double beta = 0.0;
  bool operator==(const PolicyTag&) const = default;
};

struct Trajectory {
  std::string question_id;
  std::vector<Step> steps;
  AnswerToken final_answer = 0;
  AnswerToken gold_answer = 0;
  std::optional<PolicyTag> policy;

  int horizon() const { return static_cast<int>(steps.size()); }
  bool success() const { return final_answer == gold_answer; }
  std::size_t feature_dim() const { return steps.empty() ? 0 : steps.front().features.size(); }
  bool has_ground_truth() const;

  /// Throws ValidationError on H < 1, non-contiguous indices or ragged features.
  void validate() const;

  bool operator==(const Trajectory&) const = default;
};

/// Per-step correctness labels (true = correct).
class StepLabels {
 public:
  StepLabels() = default;
  explicit StepLabels(std::vector<bool> labels);

  /// Build from stored fields, checking that `first_error` agrees with `labels`.
  static StepLabels from_stored(std::vector<bool> labels, std::optional<int> first_error);

  const std::vector<bool>& labels() const { return labels_; }
  /// Smallest 1-based index with a false label.
  std::optional<int> first_error() const { return first_error_; }
  int size() const { return static_cast<int>(labels_.size()); }
  bool operator[](int one_based) const { return labels_[static_cast<std::size_t>(one_based - 1)]; }

  bool operator==(const StepLabels&) const = default;

 private:
  std::vector<bool> labels_;
  std::optional<int> first_error_;
};

/// Index lists of correct (C) and wrong (W) steps, both ascending and 1-based.
struct LabelSplit {
  std::vector<int> correct;
  std::vector<int> wrong;
};

LabelSplit split_labels(const StepLabels& labels);

/// Ground-truth labels from the latent correctness of each step.
StepLabels latent_labels(const Trajectory& traj);

struct ScoredTrajectory {
  std::string trajectory_ref;
  std::vector<double> step_scores;  ///< raw Q estimates
  double trajectory_score = 0.0;    ///< aggregated, min by default

  bool operator==(const ScoredTrajectory&) const = default;
};

/// Monte-Carlo annotation payload carried alongside labels.
struct AnnotationExtension {
  std::vector<double> soft_labels;
  std::vector<int> n_success;
  int k = 1;
  bool operator==(const AnnotationExtension&) const = default;
};

/// One line of a corpus file.
struct CorpusRecord {
  Trajectory trajectory;
  StepLabels labels;
  std::optional<ScoredTrajectory> scored;
  std::optional<AnnotationExtension> annotation;

  bool operator==(const CorpusRecord&) const = default;
};

using Corpus = std::vector<CorpusRecord>;

}  // namespace pqm
