#include "pqmlab/eval.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <map>
#include <numeric>

#include "pqmlab/error.hpp"
#include "pqmlab/parallel.hpp"
#include "pqmlab/rng.hpp"
#include "pqmlab/synth_mdp.hpp"

namespace pqm {

std::string_view to_string(Aggregation mode) {
  switch (mode) {
    case Aggregation::min: return "min";
    case Aggregation::last: return "last";
    case Aggregation::mean: return "mean";
  }
  return "unknown";
}

Aggregation parse_aggregation(std::string_view name) {
  if (name == "min") return Aggregation::min;
  if (name == "last") return Aggregation::last;
  if (name == "mean") return Aggregation::mean;
  throw ConfigError("unknown aggregation '" + std::string(name) + "' (valid: min, last, mean)");
}

std::string_view to_string(WeightMode mode) {
  return mode == WeightMode::score_sum ? "score_sum" : "count_then_score";
}

double aggregate_trajectory_score(std::span<const double> step_scores, Aggregation mode) {
  if (step_scores.empty()) throw ValidationError("step_scores", "cannot aggregate an empty list");
  switch (mode) {
    case Aggregation::min:
      return *std::min_element(step_scores.begin(), step_scores.end());
    case Aggregation::last:
      return step_scores.back();
    case Aggregation::mean:
      return std::accumulate(step_scores.begin(), step_scores.end(), 0.0) /
             static_cast<double>(step_scores.size());
  }
  return 0.0;
}

void CandidatePool::validate() const {
  if (candidates.empty()) throw ValidationError("candidates", "pool " + question_id + " is empty");
  for (const auto& c : candidates) {
    if (c.trajectory.question_id != question_id || c.trajectory.gold_answer != gold_answer) {
      throw ValidationError("candidates", "pool " + question_id + " mixes questions");
    }
  }
}

std::vector<std::size_t> subsample_order(std::size_t pool_size, std::uint64_t seed) {
  return Rng(seed).permutation(pool_size);
}

namespace {

std::vector<std::size_t> subsample(const CandidatePool& pool, std::size_t n, std::uint64_t seed) {
  if (n < 1 || n > pool.size()) {
    throw ValidationError("n", "n = " + std::to_string(n) + " outside [1, " +
                                   std::to_string(pool.size()) + "] for pool " + pool.question_id);
  }
  std::vector<std::size_t> order = subsample_order(pool.size(), seed);
  order.resize(n);
  return order;
}

}  // namespace

Selection best_of_n(const CandidatePool& pool, std::size_t n, std::uint64_t seed) {
  const auto order = subsample(pool, n, seed);
  std::size_t best = order.front();
  for (std::size_t idx : order) {
    if (pool.candidates[idx].scored.trajectory_score > pool.candidates[best].scored.trajectory_score) {
      best = idx;
    }
  }
  return {best, pool.candidates[best].trajectory.success()};
}

bool pass_at_n(const CandidatePool& pool, std::size_t n, std::uint64_t seed) {
  const auto order = subsample(pool, n, seed);
  return std::any_of(order.begin(), order.end(),
                     [&](std::size_t i) { return pool.candidates[i].trajectory.success(); });
}

namespace {

struct AnswerGroup {
  AnswerToken answer = 0;
  std::size_t first_seen = 0;  ///< rank in permutation order
  std::size_t count = 0;
  double weight = 0.0;
  double best_score = -std::numeric_limits<double>::infinity();
};

std::vector<AnswerGroup> group_answers(const CandidatePool& pool, const std::vector<std::size_t>& order) {
  std::vector<AnswerGroup> groups;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const Candidate& c = pool.candidates[order[rank]];
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const AnswerGroup& g) { return g.answer == c.trajectory.final_answer; });
    if (it == groups.end()) {
      groups.push_back({c.trajectory.final_answer, rank, 0, 0.0,
                        -std::numeric_limits<double>::infinity()});
      it = groups.end() - 1;
    }
    ++it->count;
    it->weight += sigmoid(c.scored.trajectory_score);
    it->best_score = std::max(it->best_score, c.scored.trajectory_score);
  }
  return groups;
}

// Groups are in first-seen order, so taking the first strict maximum breaks
// remaining ties by permutation order.
template <typename Better>
VoteResult pick_group(const CandidatePool& pool, const std::vector<AnswerGroup>& groups, Better better) {
  std::size_t best = 0;
  for (std::size_t g = 1; g < groups.size(); ++g) {
    if (better(groups[g], groups[best])) best = g;
  }
  return {groups[best].answer, groups[best].answer == pool.gold_answer};
}

}  // namespace

VoteResult self_consistency(const CandidatePool& pool, std::size_t n, std::uint64_t seed) {
  const auto groups = group_answers(pool, subsample(pool, n, seed));
  return pick_group(pool, groups, [](const AnswerGroup& a, const AnswerGroup& b) { return a.count > b.count; });
}

VoteResult sc_with_prm(const CandidatePool& pool, std::size_t n, std::uint64_t seed, WeightMode mode) {
  const auto order = subsample(pool, n, seed);
  for (std::size_t idx : order) {
    if (pool.candidates[idx].scored.step_scores.empty()) {
      throw ValidationError("scored", "candidate " + std::to_string(idx) + " of pool " + pool.question_id +
                                          " has no step scores");
    }
  }
  const auto groups = group_answers(pool, order);
  if (mode == WeightMode::score_sum) {
    return pick_group(pool, groups, [](const AnswerGroup& a, const AnswerGroup& b) { return a.weight > b.weight; });
  }
  return pick_group(pool, groups, [](const AnswerGroup& a, const AnswerGroup& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.best_score > b.best_score;
  });
}

StepScorer model_scorer(const ScorerModel& model) {
  return [model](const Trajectory& traj) { return score_steps(model, traj); };
}

StepScorer oracle_scorer() {
  return [](const Trajectory& traj) {
    if (!traj.policy || !traj.has_ground_truth()) {
      throw ValidationError("policy", "oracle scoring needs the policy tag and latent states of " +
                                          traj.question_id);
    }
    PolicyParams params;
    params.alpha = traj.policy->alpha;
    params.beta = traj.policy->beta;
    params.horizon = traj.horizon();
    const QOracleTable table = exact_q_table(params);
    std::vector<double> out;
    for (const Step& s : traj.steps) out.push_back(logit(table.at(s.index, *s.latent_correct)));
    return out;
  };
}

StepScorer random_scorer(std::uint64_t seed) {
  return [seed](const Trajectory& traj) {
    std::uint64_t h = derive_seed(seed, traj.question_id);
    h = derive_seed(h, static_cast<std::uint64_t>(traj.final_answer));
    for (const Step& s : traj.steps) {
      for (double f : s.features) h = derive_seed(h, std::bit_cast<std::uint64_t>(f));
    }
    Rng rng(h);
    std::vector<double> out;
    for (std::size_t i = 0; i < traj.steps.size(); ++i) out.push_back(rng.uniform(-1.0, 1.0));
    return out;
  };
}

std::vector<CandidatePool> pools_from_corpus(const Corpus& corpus) {
  std::vector<CandidatePool> pools;
  std::map<std::string, std::size_t> index;
  for (const auto& rec : corpus) {
    const auto& qid = rec.trajectory.question_id;
    auto [it, inserted] = index.try_emplace(qid, pools.size());
    if (inserted) pools.push_back({qid, rec.trajectory.gold_answer, {}});
    Candidate c{rec.trajectory, rec.scored.value_or(ScoredTrajectory{})};
    pools[it->second].candidates.push_back(std::move(c));
  }
  for (const auto& p : pools) p.validate();
  return pools;
}

void score_pools(std::vector<CandidatePool>& pools, const StepScorer& scorer, Aggregation mode,
                 int threads) {
  parallel_for(pools.size(), threads, [&](std::size_t p) {
    auto& pool = pools[p];
    for (std::size_t i = 0; i < pool.candidates.size(); ++i) {
      Candidate& c = pool.candidates[i];
      c.scored.trajectory_ref = pool.question_id + "#" + std::to_string(i);
      c.scored.step_scores = scorer(c.trajectory);
      c.scored.trajectory_score = aggregate_trajectory_score(c.scored.step_scores, mode);
    }
  });
}

namespace {

template <typename Metric>
std::vector<MetricRow> ladder_rows(std::span<const CandidatePool> pools, std::span<const std::size_t> ladder,
                                   std::uint64_t seed, const std::string& method, int threads,
                                   Metric metric) {
  if (pools.empty()) throw ValidationError("pools", "no candidate pools");
  std::vector<MetricRow> rows;
  for (std::size_t n : ladder) {
    std::vector<char> hits(pools.size(), 0);
    parallel_for(pools.size(), threads, [&](std::size_t p) {
      hits[p] = metric(pools[p], n, derive_seed(seed, pools[p].question_id)) ? 1 : 0;
    });
    const auto total = static_cast<std::size_t>(std::count(hits.begin(), hits.end(), 1));
    rows.push_back({method, n, static_cast<double>(total) / static_cast<double>(pools.size()), pools.size()});
  }
  return rows;
}

}  // namespace

std::vector<MetricRow> bon_ladder(std::span<const CandidatePool> pools, std::span<const std::size_t> ladder,
                                  std::uint64_t seed, const std::string& method, int threads) {
  return ladder_rows(pools, ladder, seed, method, threads,
                     [](const CandidatePool& p, std::size_t n, std::uint64_t s) { return best_of_n(p, n, s).correct; });
}

std::vector<MetricRow> pass_ladder(std::span<const CandidatePool> pools, std::span<const std::size_t> ladder,
                                   std::uint64_t seed) {
  return ladder_rows(pools, ladder, seed, "pass", 1,
                     [](const CandidatePool& p, std::size_t n, std::uint64_t s) { return pass_at_n(p, n, s); });
}

std::vector<MetricRow> sc_ladder(std::span<const CandidatePool> pools, std::span<const std::size_t> ladder,
                                 std::uint64_t seed) {
  return ladder_rows(pools, ladder, seed, "self_consistency", 1,
                     [](const CandidatePool& p, std::size_t n, std::uint64_t s) {
                       return self_consistency(p, n, s).correct;
                     });
}

std::vector<MetricRow> sc_prm_ladder(std::span<const CandidatePool> pools, std::span<const std::size_t> ladder,
                                     std::uint64_t seed, WeightMode mode, const std::string& method) {
  return ladder_rows(pools, ladder, seed, method, 1,
                     [mode](const CandidatePool& p, std::size_t n, std::uint64_t s) {
                       return sc_with_prm(p, n, s, mode).correct;
                     });
}

std::vector<StepScoreRow> dump_step_scores(const StepScorer& scorer, const Trajectory& traj) {
  const std::vector<double> scores = scorer(traj);
  std::vector<StepScoreRow> rows;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    rows.push_back({traj.question_id, static_cast<int>(i) + 1, scores[i], sigmoid(scores[i])});
  }
  return rows;
}

std::vector<StepScoreRow> dump_step_scores(const ScorerModel& model, const Trajectory& traj) {
  return dump_step_scores(model_scorer(model), traj);
}

namespace {

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string metric_rows_to_csv(std::span<const MetricRow> rows) {
  std::string out = "method,n,accuracy,n_questions\n";
  for (const auto& r : rows) {
    out += r.method + "," + std::to_string(r.n) + "," + format_real(r.accuracy) + "," +
           std::to_string(r.n_questions) + "\n";
  }
  return out;
}

std::string step_rows_to_csv(std::span<const StepScoreRow> rows) {
  std::string out = "question_id,step,raw_q,sigma_q\n";
  for (const auto& r : rows) {
    out += r.question_id + "," + std::to_string(r.step) + "," + format_real(r.raw_q) + "," +
           format_real(r.sigma_q) + "\n";
  }
  return out;
}

}  // namespace pqm
