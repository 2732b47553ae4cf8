// Acceptance run: one PASS/FAIL line per headline criterion. Exits nonzero
// if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "pqmlab/annotate.hpp"
#include "pqmlab/benchmark.hpp"
#include "pqmlab/checks.hpp"
#include "pqmlab/eval.hpp"
#include "pqmlab/losses.hpp"
#include "pqmlab/rng.hpp"

using namespace pqm;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& name, bool passed, const std::string& detail) {
  std::printf("%s %-28s %s\n", passed ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!passed) ++failures;
}

std::string fmt(const char* format, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void oracle_equivalence() {
  Stopwatch sw;
  const auto r = check_oracle_equivalence(200, 12, 1e-12, 1001);
  const double t = sw.seconds();
  report("oracle_equivalence", r.passed && t < 10.0, r.detail + fmt(", %.2fs (limit 10s)", t));
}

void theorem_suite() {
  Stopwatch sw;
  const auto r = check_theorem_suite(100, 1000, 1002);
  const double t = sw.seconds();
  report("theorem_ranking", r.passed && t < 30.0, r.detail + fmt(", %.2fs (limit 30s)", t));
}

void limit_case() {
  const auto r = check_limit(1.0 - 1e-3, 1e-3, 5);
  report("classification_limit", r.passed, r.detail);
}

void shaping() {
  const auto r = check_shaping(20, 1003);
  report("shaping_equivalence", r.passed, r.detail);
}

void gradient_battery() {
  Stopwatch sw;
  bool ok = true;
  std::string failed;
  int checks = 0;
  for (LossFamily family : all_loss_families()) {
    LossSpec spec;
    spec.family = family;
    spec.zeta = 2.0;
    std::vector<CheckResult> rs = {check_loss_gradients(spec, 20, 1e-6, derive_seed(1004, checks++))};
    for (auto kind : {ScorerKind::linear, ScorerKind::mlp1}) {
      rs.push_back(check_scorer_gradients(spec, kind, 20, 1e-5, derive_seed(1004, checks++)));
    }
    for (const auto& r : rs) {
      if (!r.passed) {
        ok = false;
        failed += " " + r.name + "(" + r.detail + ")";
      }
    }
  }
  const double t = sw.seconds();
  report("gradient_battery", ok && t < 10.0,
         fmt("%.0f checks x 20 points, loss tol 1e-6, scorer tol 1e-5, %.2fs (limit 10s)", static_cast<double>(checks), t) + failed);
}

void hand_values() {
  const double e = std::exp(1.0);
  // Closed form of the practical example: log(1 + e) + log(1 + 2e) - 1.
  const double practical_exact = std::log(1.0 + e) + std::log(1.0 + 2.0 * e) - 1.0;
  const double s1[] = {1.0, -1.0};
  const double practical = practical_loss(s1, StepLabels({true, false}), 2.0).value;
  const double z3[] = {0.0, 0.0, 0.0};
  const double theorem = theorem_loss(z3, StepLabels({true, false, false}), 0.0).value;
  const double p2[] = {0.5, 0.5};
  const double bce = bce_loss(p2, StepLabels({true, false})).value;
  const bool ok = std::abs(practical - practical_exact) < 1e-9 && std::abs(theorem - 1.059351) < 1e-6 &&
                  std::abs(theorem - std::log(24.0) / 3.0) < 1e-9 && std::abs(bce - std::log(2.0)) < 1e-12;
  report("hand_loss_values", ok,
         fmt("practical %.9f (closed form %.9f; the quoted 2.175357 differs from the closed form by %.1e), ",
             practical, practical_exact, std::abs(2.175357 - practical_exact)) +
             fmt("theorem %.9f (ln 24 / 3), bce %.12f (ln 2)", theorem, bce));
}

void benchmark() {
  Stopwatch sw;
  BenchmarkConfig cfg;
  cfg.environment.n_questions = 200;
  cfg.environment.pool_size = 128;
  cfg.environment.n_train = 2000;
  cfg.annotation.completer.alpha = 0.93;
  cfg.annotation.completer.beta = 0.1;
  cfg.annotation.k_completions = 8;
  cfg.annotation.full_sampling = true;
  cfg.bon_n = 64;
  cfg.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  auto trained = [](std::string name, LossFamily f, double zeta) {
    BenchmarkArm a;
    a.name = std::move(name);
    a.loss.family = f;
    a.loss.zeta = zeta;
    return a;
  };
  BenchmarkArm random_arm;
  random_arm.name = "random";
  random_arm.kind = BenchmarkArm::Kind::random;
  cfg.arms = {random_arm,
              trained("bce", LossFamily::bce, 0.0),
              trained("practical_z0", LossFamily::practical, 0.0),
              trained("practical_z2", LossFamily::practical, 2.0),
              trained("practical_z4", LossFamily::practical, 4.0),
              trained("practical_z8", LossFamily::practical, 8.0)};
  const auto summary = run_benchmark(cfg);
  const double t = sw.seconds();

  const double rnd = summary.mean_bon("random"), bce = summary.mean_bon("bce");
  const double z0 = summary.mean_bon("practical_z0"), z2 = summary.mean_bon("practical_z2");
  const double z4 = summary.mean_bon("practical_z4"), z8 = summary.mean_bon("practical_z8");
  const double best_margin = std::max({z2, z4, z8});
  const bool directional = z2 >= bce - 0.01 && z4 >= bce - 0.01 && z2 > bce && z4 > bce &&
                           z2 >= rnd + 0.05 && z4 >= rnd + 0.05 && bce >= rnd + 0.05 && t < 600.0;
  report("directional_benchmark", directional,
         fmt("BON@64 practical z2 %.4f, z4 %.4f vs bce %.4f, random %.4f", z2, z4, bce, rnd) +
             fmt("; BON@1 %.4f; 3 presets x 5 seeds, 200 questions, pool 128; %.1fs (limit 600s)",
                 summary.mean_bon1(), t));
  report("zeta_ablation", z0 < best_margin,
         fmt("BON@64 z0 %.4f vs z2 %.4f, z4 %.4f, z8 %.4f", z0, z2, z4, z8));
}

Candidate random_candidate(Rng& rng, const std::string& qid) {
  Candidate c;
  c.trajectory.question_id = qid;
  c.trajectory.gold_answer = 0;
  c.trajectory.final_answer = rng.bernoulli(0.3) ? 0 : 1 + static_cast<AnswerToken>(rng.below(3));
  const int h = 1 + static_cast<int>(rng.below(6));
  for (int t = 1; t <= h; ++t) {
    Step s;
    s.index = t;
    s.features = {0.0};
    c.trajectory.steps.push_back(s);
    // Coarse values produce frequent ties.
    c.scored.step_scores.push_back(rng.bernoulli(0.3) ? std::round(rng.normal()) : rng.normal());
  }
  c.scored.trajectory_score = aggregate_trajectory_score(c.scored.step_scores);
  return c;
}

void evaluation_invariants() {
  Rng rng(1005);
  std::size_t dominance = 0, monotone = 0, invariance = 0, comparisons = 0;
  const std::size_t n_pools = 10000;
  for (std::size_t p = 0; p < n_pools; ++p) {
    CandidatePool pool;
    pool.question_id = "q" + std::to_string(p);
    const std::size_t size = 1 + rng.below(32);
    for (std::size_t i = 0; i < size; ++i) pool.candidates.push_back(random_candidate(rng, pool.question_id));
    CandidatePool mapped = pool;
    for (auto& c : mapped.candidates) {
      for (auto& v : c.scored.step_scores) v = std::exp(v) + v * v * v;
      c.scored.trajectory_score = aggregate_trajectory_score(c.scored.step_scores);
    }
    const std::uint64_t seed = rng.next_u64();
    bool prev_pass = false;
    for (std::size_t n = 1; n <= size; ++n) {
      ++comparisons;
      const auto sel = best_of_n(pool, n, seed);
      const bool pass = pass_at_n(pool, n, seed);
      if (sel.correct && !pass) ++dominance;
      if (prev_pass && !pass) ++monotone;
      if (best_of_n(mapped, n, seed).index != sel.index) ++invariance;
      prev_pass = pass;
    }
  }
  report("evaluation_invariants", dominance + monotone + invariance == 0,
         fmt("%.0f pools, %.0f (pool, n) cases; violations: ceiling %.0f, monotone %.0f, ", n_pools, comparisons,
             dominance, monotone) +
             fmt("transform invariance %.0f", invariance));
}

void annotation_convergence() {
  PolicyParams policy{0.8, 0.15, 6, 1.0, 4};
  Corpus corpus;
  for (std::size_t i = 0; i < 500; ++i) {
    auto [traj, labels] = sample_trajectory(policy, FeatureLayout{}, "a" + std::to_string(i), derive_seed(1006, i));
    corpus.push_back(CorpusRecord{std::move(traj), std::move(labels), std::nullopt, std::nullopt});
  }
  AnnotationConfig cfg;
  cfg.completer = policy;
  cfg.seed = 1007;
  cfg.k_completions = 1;
  const auto k1 = annotation_noise_report(corpus, cfg);
  cfg.k_completions = 16;
  const auto k16 = annotation_noise_report(corpus, cfg);
  const double se = std::hypot(k1.agreement_standard_error, k16.agreement_standard_error);
  AnnotationConfig no_recovery = cfg;
  no_recovery.completer.beta = 0.0;
  std::size_t false_positives = 0;
  for (int k : {1, 4, 16}) {
    no_recovery.k_completions = k;
    for (bool mark : {true, false}) {
      no_recovery.mark_after_first_error = mark;
      false_positives += annotation_noise_report(corpus, no_recovery).false_positive;
    }
  }
  report("annotation_convergence", k16.agreement >= k1.agreement - 2.0 * se && false_positives == 0,
         fmt("agreement k=16 %.4f vs k=1 %.4f (2 SE = %.4f); beta=0 false positives %.0f", k16.agreement,
             k1.agreement, 2.0 * se, static_cast<double>(false_positives)));
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void determinism() {
#ifdef PQMLAB_CLI_PATH
  const std::string cli = PQMLAB_CLI_PATH;
#else
  const char* env = std::getenv("PQMLAB_CLI_PATH");
  const std::string cli = env ? env : "";
#endif
  if (cli.empty() || !fs::exists(cli)) {
    report("determinism", false, "cli binary not found");
    return;
  }
  const fs::path root = fs::temp_directory_path() / "pqmlab_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const nlohmann::json config = {
      {"seed", 2024},
      {"environment", {{"n_questions", 24}, {"pool_size", 16}, {"n_train", 300}, {"policy_preset", "mixed"}}},
      {"annotation", {{"k", 8}, {"full_sampling", true}}},
      {"train", {{"steps", 150}, {"batch_size", 16}, {"loss", {{"family", "practical"}, {"zeta", 4.0}}}}},
      {"eval", {{"ladder", {1, 4, 16}}}}};
  std::ofstream(root / "config.json") << config.dump(2);

  struct Run {
    std::string name;
    int threads;
  };
  const std::vector<Run> runs = {{"t1", 1}, {"t1_again", 1}, {"t4", 4}, {"t0", 0}};
  for (const auto& run : runs) {
    for (const char* cmd : {"simulate", "annotate", "train", "eval"}) {
      const std::string line = "\"" + cli + "\" " + cmd + " --quiet --config \"" + (root / "config.json").string() +
                               "\" --out \"" + (root / run.name).string() + "\" --threads " +
                               std::to_string(run.threads);
      if (std::system(line.c_str()) != 0) {
        report("determinism", false, std::string("command failed: ") + line);
        return;
      }
    }
  }
  std::size_t files = 0, mismatches = 0;
  std::string first_mismatch;
  for (const auto& entry : fs::directory_iterator(root / "t1")) {
    ++files;
    const std::string ref = slurp(entry.path());
    for (std::size_t r = 1; r < runs.size(); ++r) {
      if (slurp(root / runs[r].name / entry.path().filename()) != ref) {
        ++mismatches;
        if (first_mismatch.empty()) first_mismatch = " first: " + runs[r].name + "/" + entry.path().filename().string();
      }
    }
  }
  report("determinism", files >= 10 && mismatches == 0,
         fmt("%.0f artifacts compared across 4 runs (threads 1, 1, 4, all cores), %.0f mismatches",
             static_cast<double>(files), static_cast<double>(mismatches)) +
             first_mismatch);
  fs::remove_all(root);
}

}  // namespace

int main() {
  oracle_equivalence();
  theorem_suite();
  limit_case();
  shaping();
  gradient_battery();
  hand_values();
  benchmark();
  evaluation_invariants();
  annotation_convergence();
  determinism();
  std::printf("%s: %d failed\n", failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED", failures);
  return failures == 0 ? 0 : 1;
}
