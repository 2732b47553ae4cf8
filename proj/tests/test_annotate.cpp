#include <cmath>
#include <string>

#include "doctest.h"
#include "pqmlab/annotate.hpp"
#include "pqmlab/error.hpp"

using namespace pqm;

namespace {

Corpus simulated_corpus(const PolicyParams& policy, std::size_t n, std::uint64_t seed) {
  Corpus corpus;
  for (std::size_t i = 0; i < n; ++i) {
    auto [traj, labels] = sample_trajectory(policy, FeatureLayout{}, "q" + std::to_string(i), seed + i);
    corpus.push_back(CorpusRecord{std::move(traj), std::move(labels), std::nullopt, std::nullopt});
  }
  return corpus;
}

AnnotationConfig config_for(const PolicyParams& policy, double alpha, double beta, int k, bool mark) {
  AnnotationConfig cfg;
  cfg.completer = policy;
  cfg.completer.alpha = alpha;
  cfg.completer.beta = beta;
  cfg.k_completions = k;
  cfg.mark_after_first_error = mark;
  cfg.seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("a deterministic completer recovers the latent labels") {
  PolicyParams policy{0.8, 0.2, 7, 1.0, 2};
  const auto corpus = simulated_corpus(policy, 200, 1);
  const auto plain = config_for(policy, 1.0, 0.0, 3, false);
  const auto marked = config_for(policy, 1.0, 0.0, 3, true);
  for (const auto& rec : corpus) {
    const auto truth = latent_labels(rec.trajectory);
    CHECK(annotate_trajectory(rec.trajectory, plain).labels == truth);
    // Marking keeps the prefix up to the first error and zeros the rest.
    const auto got = annotate_trajectory(rec.trajectory, marked).labels;
    const int fe = truth.first_error().value_or(truth.size() + 1);
    for (int t = 1; t <= truth.size(); ++t) CHECK(got[t] == (t < fe ? truth[t] : false));
  }
}

TEST_CASE("without recovery no wrong step is ever labelled correct") {
  PolicyParams policy{0.75, 0.3, 6, 1.0, 2};
  const auto corpus = simulated_corpus(policy, 300, 2);
  for (int k : {1, 4, 32}) {
    for (bool mark : {false, true}) {
      const auto cfg = config_for(policy, 0.9, 0.0, k, mark);
      const auto report = annotation_noise_report(corpus, cfg);
      CHECK(report.false_positive == 0);
      CHECK(report.precision == 1.0);
    }
  }
}

TEST_CASE("more completions do not reduce agreement") {
  PolicyParams policy{0.8, 0.1, 6, 1.0, 2};
  const auto corpus = simulated_corpus(policy, 500, 3);
  const auto one = annotation_noise_report(corpus, config_for(policy, 0.8, 0.1, 1, true));
  const auto many = annotation_noise_report(corpus, config_for(policy, 0.8, 0.1, 16, true));
  CHECK(many.agreement >= one.agreement - 2.0 * one.agreement_standard_error);
  CHECK(many.recall >= one.recall);
}

TEST_CASE("noise report for a perfect annotator") {
  PolicyParams policy{0.8, 0.0, 6, 1.0, 2};
  const auto corpus = simulated_corpus(policy, 200, 4);
  const auto report = annotation_noise_report(corpus, config_for(policy, 1.0, 0.0, 2, true));
  CHECK(report.precision == 1.0);
  CHECK(report.recall == 1.0);
  CHECK(report.agreement == 1.0);
  CHECK(report.agreement_standard_error == 0.0);
  CHECK(report.first_error_accuracy == 1.0);
  CHECK(report.forced_false_negatives == 0);
  CHECK(report.n_trajectories == 200);
  REQUIRE(report.by_position.size() == 6);
  std::size_t total = 0;
  for (const auto& pos : report.by_position) {
    total += pos.true_positive + pos.false_positive + pos.false_negative + pos.true_negative;
  }
  CHECK(total == 200 * 6);
}

TEST_CASE("forced labels contradict recovered states") {
  // Recovery makes latently correct steps appear after the first error, and
  // marking labels them false anyway.
  PolicyParams policy{0.8, 0.3, 8, 1.0, 2};
  const auto corpus = simulated_corpus(policy, 400, 5);
  const auto marked = annotation_noise_report(corpus, config_for(policy, 1.0, 0.0, 4, true));
  const auto plain = annotation_noise_report(corpus, config_for(policy, 1.0, 0.0, 4, false));
  CHECK(marked.forced_false > 0);
  CHECK(marked.forced_false_negatives > 0);
  CHECK(marked.forced_contradiction_rate > 0.0);
  CHECK(marked.false_negative > plain.false_negative);
  CHECK(plain.forced_false == 0);
  CHECK(plain.false_negative == 0);
}

TEST_CASE("soft labels estimate the completer's success probability") {
  PolicyParams policy{0.8, 0.2, 6, 1.0, 2};
  const auto corpus = simulated_corpus(policy, 2000, 6);
  auto cfg = config_for(policy, 0.85, 0.15, 8, false);
  const auto table = exact_q_table(cfg.completer);
  const auto annotated = annotate_corpus(corpus, cfg);
  for (bool state : {true, false}) {
    for (int t = 1; t < policy.horizon; ++t) {
      double sum = 0.0, sq = 0.0;
      std::size_t n = 0;
      for (const auto& rec : annotated) {
        if (*rec.trajectory.steps[static_cast<std::size_t>(t - 1)].latent_correct != state) continue;
        const double s = rec.annotation->soft_labels[static_cast<std::size_t>(t - 1)];
        sum += s;
        sq += s * s;
        ++n;
      }
      if (n < 30) continue;
      const double mean = sum / n;
      const double se = std::sqrt(std::max(1e-12, (sq / n - mean * mean) / n));
      CHECK(std::abs(mean - table.at(t, state)) < 4.0 * se + 1e-9);
    }
  }
}

TEST_CASE("annotation invariants") {
  PolicyParams policy{0.7, 0.25, 6, 1.0, 2};
  const auto corpus = simulated_corpus(policy, 200, 7);
  for (bool mark : {false, true}) {
    for (bool full : {false, true}) {
      auto cfg = config_for(policy, 0.75, 0.2, 5, mark);
      cfg.full_sampling = full;
      const auto out = annotate_corpus(corpus, cfg);
      REQUIRE(out.size() == corpus.size());
      for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& rec = out[i];
        CHECK(rec.trajectory == corpus[i].trajectory);
        REQUIRE(rec.annotation);
        CHECK(rec.annotation->k == 5);
        bool seen_false = false;
        for (int t = 1; t <= rec.labels.size(); ++t) {
          const auto idx = static_cast<std::size_t>(t - 1);
          const int n = rec.annotation->n_success[idx];
          CHECK(n >= 0);
          CHECK(n <= 5);
          CHECK(rec.annotation->soft_labels[idx] == static_cast<double>(n) / 5.0);
          if (mark && seen_false) CHECK_FALSE(rec.labels[t]);
          if (!mark || !seen_false) CHECK(rec.labels[t] == (n >= 1));
          if (mark && seen_false && !full) CHECK(n == 0);
          if (!rec.labels[t]) seen_false = true;
        }
      }
    }
  }
}

TEST_CASE("annotation is deterministic and independent of thread count") {
  PolicyParams policy{0.8, 0.1, 6, 1.0, 2};
  const auto corpus = simulated_corpus(policy, 120, 8);
  const auto cfg = config_for(policy, 0.8, 0.1, 8, true);
  const auto a = annotate_corpus(corpus, cfg, 1);
  CHECK(annotate_corpus(corpus, cfg, 1) == a);
  CHECK(annotate_corpus(corpus, cfg, 4) == a);
  auto other = cfg;
  other.seed = 100;
  CHECK(annotate_corpus(corpus, other, 1) != a);
}

TEST_CASE("annotation input validation") {
  PolicyParams policy{0.8, 0.1, 6, 1.0, 2};
  const auto cfg = config_for(policy, 0.8, 0.1, 8, true);
  CHECK_THROWS_AS(annotation_noise_report(Corpus{}, cfg), ValidationError);

  auto corpus = simulated_corpus(policy, 3, 9);
  auto bad_k = cfg;
  bad_k.k_completions = 0;
  CHECK_THROWS_AS(annotate_trajectory(corpus[0].trajectory, bad_k), ValidationError);

  auto short_cfg = cfg;
  short_cfg.completer.horizon = 5;
  CHECK_THROWS_AS(annotate_trajectory(corpus[0].trajectory, short_cfg), ValidationError);

  corpus[1].trajectory.steps[2].latent_correct.reset();
  CHECK_THROWS_AS(annotate_trajectory(corpus[1].trajectory, cfg), ValidationError);
  CHECK_THROWS_AS(annotation_noise_report(corpus, cfg), ValidationError);
}
