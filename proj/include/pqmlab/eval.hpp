#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pqmlab/scorer.hpp"
#include "pqmlab/trajectory.hpp"

namespace pqm {

enum class Aggregation { min, last, mean };

std::string_view to_string(Aggregation mode);
Aggregation parse_aggregation(std::string_view name);

/// min is the reference mode; last stands in for an outcome reward model.
double aggregate_trajectory_score(std::span<const double> step_scores,
                                  Aggregation mode = Aggregation::min);

struct Candidate {
  Trajectory trajectory;
  ScoredTrajectory scored;
};

struct CandidatePool {
  std::string question_id;
  AnswerToken gold_answer = 0;
  std::vector<Candidate> candidates;

  std::size_t size() const { return candidates.size(); }
  /// All candidates share question_id and gold answer; N >= 1.
  void validate() const;
};

/// Seeded permutation of the pool; the first n entries are the size-n
/// subsample, so subsamples for increasing n are nested.
std::vector<std::size_t> subsample_order(std::size_t pool_size, std::uint64_t seed);

struct Selection {
  std::size_t index = 0;  ///< into pool.candidates
  bool correct = false;
};

/// Argmax of trajectory_score over the size-n subsample; ties go to the
/// candidate that comes first in the seeded permutation.
Selection best_of_n(const CandidatePool& pool, std::size_t n, std::uint64_t seed);

/// True iff any candidate in the size-n subsample is successful.
bool pass_at_n(const CandidatePool& pool, std::size_t n, std::uint64_t seed);

struct VoteResult {
  AnswerToken answer = 0;
  bool correct = false;
};

/// Majority vote over final answers; ties go to the answer seen first in the
/// seeded permutation.
VoteResult self_consistency(const CandidatePool& pool, std::size_t n, std::uint64_t seed);

enum class WeightMode { score_sum, count_then_score };

std::string_view to_string(WeightMode mode);

/// Answer groups weighted by the sum of sigmoid(trajectory_score)
/// (score_sum), or by vote count with the group's best score as tie-break
/// (count_then_score). Remaining ties follow the permutation order.
VoteResult sc_with_prm(const CandidatePool& pool, std::size_t n, std::uint64_t seed,
                       WeightMode mode = WeightMode::score_sum);

using StepScorer = std::function<std::vector<double>(const Trajectory&)>;

StepScorer model_scorer(const ScorerModel& model);
/// logit of the exact success probability of each step's latent state.
/// Needs the trajectory's policy tag and ground truth.
StepScorer oracle_scorer();
/// Uniform(-1, 1) scores seeded by (seed, question id, final answer, features).
StepScorer random_scorer(std::uint64_t seed);

/// Groups records by question_id in order of first appearance.
std::vector<CandidatePool> pools_from_corpus(const Corpus& corpus);

/// Fills scored fields of every candidate. Parallel across pools.
void score_pools(std::vector<CandidatePool>& pools, const StepScorer& scorer,
                 Aggregation mode = Aggregation::min, int threads = 1);

struct MetricRow {
  std::string method;
  std::size_t n = 0;
  double accuracy = 0.0;
  std::size_t n_questions = 0;

  bool operator==(const MetricRow&) const = default;
};

/// BON@n (under the pools' current scores) for every n in `ladder`, mean over
/// pools. Throws ValidationError when n exceeds a pool.
std::vector<MetricRow> bon_ladder(std::span<const CandidatePool> pools,
                                  std::span<const std::size_t> ladder, std::uint64_t seed,
                                  const std::string& method, int threads = 1);
std::vector<MetricRow> pass_ladder(std::span<const CandidatePool> pools,
                                   std::span<const std::size_t> ladder, std::uint64_t seed);
std::vector<MetricRow> sc_ladder(std::span<const CandidatePool> pools,
                                 std::span<const std::size_t> ladder, std::uint64_t seed);
std::vector<MetricRow> sc_prm_ladder(std::span<const CandidatePool> pools,
                                     std::span<const std::size_t> ladder, std::uint64_t seed,
                                     WeightMode mode, const std::string& method);

struct StepScoreRow {
  std::string question_id;
  int step = 0;
  double raw_q = 0.0;
  double sigma_q = 0.0;
};

std::vector<StepScoreRow> dump_step_scores(const ScorerModel& model, const Trajectory& traj);
std::vector<StepScoreRow> dump_step_scores(const StepScorer& scorer, const Trajectory& traj);

std::string metric_rows_to_csv(std::span<const MetricRow> rows);
std::string step_rows_to_csv(std::span<const StepScoreRow> rows);

}  // namespace pqm
