#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pqmlab/annotate.hpp"
#include "pqmlab/config.hpp"
#include "pqmlab/losses.hpp"
#include "pqmlab/train.hpp"

namespace pqm {

/// A scorer recipe compared on the benchmark. Reference arms (random,
/// oracle) ignore the training fields.
struct BenchmarkArm {
  std::string name;
  enum class Kind { trained, random, oracle } kind = Kind::trained;
  LossSpec loss;
};

/// Fixed synthetic selection benchmark: for every (preset, seed) cell a
/// fresh environment is simulated, its training corpus annotated by Monte
/// Carlo, one scorer per arm trained, and BON@n measured on the pools.
struct BenchmarkConfig {
  std::vector<std::string> presets = {"weak", "medium", "strong"};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  EnvironmentSpec environment;
  AnnotationConfig annotation;
  TrainConfig train;
  ScorerSettings scorer;
  std::size_t bon_n = 64;
  std::vector<BenchmarkArm> arms;
  int threads = 1;
};

struct BenchmarkCell {
  std::string arm;
  std::string preset;
  std::uint64_t seed = 0;
  double bon1 = 0.0;
  double bon = 0.0;
};

struct BenchmarkSummary {
  std::vector<BenchmarkCell> cells;
  /// Mean BON@n of an arm over all (preset, seed) cells.
  double mean_bon(const std::string& arm) const;
  double mean_bon1() const;
};

BenchmarkSummary run_benchmark(const BenchmarkConfig& cfg);

}  // namespace pqm
