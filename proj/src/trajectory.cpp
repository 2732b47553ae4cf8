#include "pqmlab/trajectory.hpp"

#include <algorithm>

#include "pqmlab/error.hpp"

namespace pqm {

namespace {

std::optional<int> find_first_error(const std::vector<bool>& labels) {
  const auto it = std::find(labels.begin(), labels.end(), false);
  if (it == labels.end()) return std::nullopt;
  return static_cast<int>(it - labels.begin()) + 1;
}

}  // namespace

bool Trajectory::has_ground_truth() const {
  return !steps.empty() && std::all_of(steps.begin(), steps.end(),
                                       [](const Step& s) { return s.latent_correct.has_value(); });
}

void Trajectory::validate() const {
  if (steps.empty()) throw ValidationError("steps", "trajectory " + question_id + " has no steps");
  const std::size_t dim = steps.front().features.size();
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i].index != static_cast<int>(i) + 1) {
      throw ValidationError("steps[" + std::to_string(i) + "].index",
                            "expected " + std::to_string(i + 1) + ", got " +
                                std::to_string(steps[i].index));
    }
    if (steps[i].features.size() != dim) {
      throw ValidationError("steps[" + std::to_string(i) + "].features",
                            "feature length differs within trajectory " + question_id);
    }
  }
}

StepLabels::StepLabels(std::vector<bool> labels)
    : labels_(std::move(labels)), first_error_(find_first_error(labels_)) {}

StepLabels StepLabels::from_stored(std::vector<bool> labels, std::optional<int> first_error) {
  StepLabels out(std::move(labels));
  if (first_error != out.first_error_) {
    throw ValidationError("first_error", "inconsistent with labels (expected " +
                                             (out.first_error_ ? std::to_string(*out.first_error_)
                                                               : std::string("none")) +
                                             ")");
  }
  return out;
}

LabelSplit split_labels(const StepLabels& labels) {
  LabelSplit split;
  for (int t = 1; t <= labels.size(); ++t) {
    (labels[t] ? split.correct : split.wrong).push_back(t);
  }
  return split;
}

StepLabels latent_labels(const Trajectory& traj) {
  std::vector<bool> out;
  out.reserve(traj.steps.size());
  for (const auto& s : traj.steps) {
    if (!s.latent_correct) {
      throw ValidationError("latent_correct", "trajectory " + traj.question_id +
                                                  " carries no ground truth");
    }
    out.push_back(*s.latent_correct);
  }
  return StepLabels(std::move(out));
}

}  // namespace pqm
