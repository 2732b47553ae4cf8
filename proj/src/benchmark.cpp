#include "pqmlab/benchmark.hpp"

#include "pqmlab/error.hpp"
#include "pqmlab/eval.hpp"
#include "pqmlab/parallel.hpp"
#include "pqmlab/rng.hpp"

namespace pqm {

double BenchmarkSummary::mean_bon(const std::string& arm) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : cells) {
    if (c.arm == arm) {
      sum += c.bon;
      ++n;
    }
  }
  if (n == 0) throw ValidationError("arm", "no benchmark cells for '" + arm + "'");
  return sum / static_cast<double>(n);
}

double BenchmarkSummary::mean_bon1() const {
  if (cells.empty()) throw ValidationError("cells", "empty benchmark");
  double sum = 0.0;
  for (const auto& c : cells) sum += c.bon1;
  return sum / static_cast<double>(cells.size());
}

BenchmarkSummary run_benchmark(const BenchmarkConfig& cfg) {
  BenchmarkSummary summary;
  const std::size_t ladder_one[] = {1};
  for (const std::string& preset : cfg.presets) {
    for (std::uint64_t seed : cfg.seeds) {
      EnvironmentSpec env = cfg.environment;
      env.policy_preset = preset;
      const std::uint64_t cell_seed = derive_seed(seed, preset);
      const SimulatedData data = simulate_environment(env, derive_seed(cell_seed, "simulate"), cfg.threads);

      AnnotationConfig ann = cfg.annotation;
      ann.completer.horizon = env.horizon;
      ann.seed = derive_seed(cell_seed, "annotate");
      const Corpus annotated = annotate_corpus(data.train, ann, cfg.threads);

      const std::vector<CandidatePool> base_pools = pools_from_corpus(data.pools);
      const std::uint64_t eval_seed = derive_seed(cell_seed, "eval");
      const std::size_t ladder[] = {cfg.bon_n};

      std::vector<BenchmarkCell> cells(cfg.arms.size());
      // Arms run concurrently; each arm's own work is single-threaded so
      // results do not depend on cfg.threads.
      parallel_for(cfg.arms.size(), cfg.threads, [&](std::size_t a) {
        const BenchmarkArm& arm = cfg.arms[a];
        StepScorer scorer;
        if (arm.kind == BenchmarkArm::Kind::random) {
          scorer = random_scorer(derive_seed(cell_seed, "random"));
        } else if (arm.kind == BenchmarkArm::Kind::oracle) {
          scorer = oracle_scorer();
        } else {
          TrainConfig tc = cfg.train;
          tc.loss = arm.loss;
          tc.threads = 1;
          tc.seed = derive_seed(cell_seed, "train");
          const auto examples = examples_from_corpus(annotated, tc.loss);
          const int dim = env.layout.dim();
          ScorerModel init = cfg.scorer.kind == ScorerKind::linear
                                 ? ScorerModel::make_linear(dim)
                                 : ScorerModel::make_mlp1(dim, cfg.scorer.hidden, derive_seed(cell_seed, "init"));
          scorer = model_scorer(train(std::move(init), examples, tc).model);
        }
        std::vector<CandidatePool> pools = base_pools;
        score_pools(pools, scorer, Aggregation::min, 1);
        BenchmarkCell& cell = cells[a];
        cell.arm = arm.name;
        cell.preset = preset;
        cell.seed = seed;
        cell.bon1 = bon_ladder(pools, ladder_one, eval_seed, arm.name, 1).front().accuracy;
        cell.bon = bon_ladder(pools, ladder, eval_seed, arm.name, 1).front().accuracy;
      });
      summary.cells.insert(summary.cells.end(), cells.begin(), cells.end());
    }
  }
  return summary;
}

}  // namespace pqm
