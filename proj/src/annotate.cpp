#include "pqmlab/annotate.hpp"

#include <cmath>

#include "pqmlab/error.hpp"
#include "pqmlab/parallel.hpp"
#include "pqmlab/rng.hpp"

namespace pqm {

void AnnotationConfig::validate() const {
  completer.validate();
  if (k_completions < 1) throw ValidationError("k_completions", "must be positive");
}

AnnotationExtension AnnotationResult::extension(int k) const {
  AnnotationExtension ext;
  ext.k = k;
  for (const auto& s : steps) {
    ext.soft_labels.push_back(s.soft_label);
    ext.n_success.push_back(s.n_success);
  }
  return ext;
}

AnnotationResult annotate_trajectory(const Trajectory& traj, const AnnotationConfig& cfg) {
  cfg.validate();
  if (traj.horizon() != cfg.completer.horizon) {
    throw ValidationError("horizon", "trajectory " + traj.question_id + " has " +
                                         std::to_string(traj.horizon()) +
                                         " steps, completer expects " +
                                         std::to_string(cfg.completer.horizon));
  }
  const std::uint64_t traj_seed = derive_seed(cfg.seed, traj.question_id);
  const int horizon = traj.horizon();

  AnnotationResult result;
  std::vector<bool> labels;
  bool failed = false;
  for (int t = 1; t <= horizon; ++t) {
    const Step& step = traj.steps[static_cast<std::size_t>(t - 1)];
    if (!step.latent_correct) {
      throw ValidationError("latent_correct", "trajectory " + traj.question_id +
                                                  " has no latent state at step " +
                                                  std::to_string(t));
    }
    AnnotatedStep annotated;
    const bool forced = cfg.mark_after_first_error && failed;
    if (!forced || cfg.full_sampling) {
      for (int j = 0; j < cfg.k_completions; ++j) {
        Rng rng(derive_seed(traj_seed, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(j)));
        const auto chain = roll_latent_chain(cfg.completer.alpha, cfg.completer.beta, horizon, t,
                                             *step.latent_correct, rng);
        const bool success = chain.empty() ? *step.latent_correct : chain.back();
        annotated.n_success += success ? 1 : 0;
      }
    }
    annotated.soft_label = static_cast<double>(annotated.n_success) / cfg.k_completions;
    annotated.hard_label = annotated.n_success >= 1;
    const bool label = !forced && annotated.hard_label;
    if (!label) failed = true;
    labels.push_back(label);
    result.steps.push_back(annotated);
  }
  result.labels = StepLabels(std::move(labels));
  return result;
}

Corpus annotate_corpus(const Corpus& corpus, const AnnotationConfig& cfg, int threads) {
  Corpus out(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t i) {
    CorpusRecord rec = corpus[i];
    AnnotationResult ann = annotate_trajectory(rec.trajectory, cfg);
    rec.annotation = ann.extension(cfg.k_completions);
    rec.labels = std::move(ann.labels);
    out[i] = std::move(rec);
  });
  return out;
}

namespace {

double ratio_or_one(std::size_t num, std::size_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

NoiseReport annotation_noise_report(std::span<const CorpusRecord> corpus,
                                    const AnnotationConfig& cfg, int threads) {
  if (corpus.empty()) throw ValidationError("corpus", "empty corpus");
  for (const auto& rec : corpus) {
    if (!rec.trajectory.has_ground_truth()) {
      throw ValidationError("latent_correct", "trajectory " + rec.trajectory.question_id +
                                                  " carries no ground truth");
    }
  }
  std::vector<AnnotationResult> annotated(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t i) {
    annotated[i] = annotate_trajectory(corpus[i].trajectory, cfg);
  });

  NoiseReport report;
  report.n_trajectories = corpus.size();
  report.by_position.resize(static_cast<std::size_t>(cfg.completer.horizon));
  double agreement_sum = 0.0, agreement_sq = 0.0;
  std::size_t first_error_hits = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const StepLabels truth = latent_labels(corpus[i].trajectory);
    const StepLabels& got = annotated[i].labels;
    std::size_t agree = 0;
    for (int t = 1; t <= got.size(); ++t) {
      auto& pos = report.by_position[static_cast<std::size_t>(t - 1)];
      pos.t = t;
      const bool pred = got[t], actual = truth[t];
      if (pred && actual) ++pos.true_positive;
      if (pred && !actual) ++pos.false_positive;
      if (!pred && actual) ++pos.false_negative;
      if (!pred && !actual) ++pos.true_negative;
      agree += pred == actual ? 1 : 0;
      const bool forced = cfg.mark_after_first_error && got.first_error() && t > *got.first_error();
      if (forced) {
        ++report.forced_false;
        if (actual) ++report.forced_false_negatives;
      }
    }
    const double a = static_cast<double>(agree) / got.size();
    agreement_sum += a;
    agreement_sq += a * a;
    first_error_hits += got.first_error() == truth.first_error() ? 1 : 0;
  }
  for (auto& pos : report.by_position) {
    pos.precision = ratio_or_one(pos.true_positive, pos.true_positive + pos.false_positive);
    pos.recall = ratio_or_one(pos.true_positive, pos.true_positive + pos.false_negative);
    report.true_positive += pos.true_positive;
    report.false_positive += pos.false_positive;
    report.false_negative += pos.false_negative;
    report.true_negative += pos.true_negative;
  }
  const double n = static_cast<double>(corpus.size());
  report.precision = ratio_or_one(report.true_positive, report.true_positive + report.false_positive);
  report.recall = ratio_or_one(report.true_positive, report.true_positive + report.false_negative);
  report.agreement = agreement_sum / n;
  const double variance = n > 1 ? (agreement_sq - n * report.agreement * report.agreement) / (n - 1) : 0.0;
  report.agreement_standard_error = std::sqrt(std::max(0.0, variance) / n);
  report.first_error_accuracy = static_cast<double>(first_error_hits) / n;
  report.forced_contradiction_rate = ratio_or_one(report.forced_false_negatives, report.forced_false);
  if (report.forced_false == 0) report.forced_contradiction_rate = 0.0;
  return report;
}

}  // namespace pqm
