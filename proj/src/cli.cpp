#include "pqmlab/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "pqmlab/annotate.hpp"
#include "pqmlab/checks.hpp"
#include "pqmlab/config.hpp"
#include "pqmlab/corpus_io.hpp"
#include "pqmlab/digest.hpp"
#include "pqmlab/error.hpp"
#include "pqmlab/eval.hpp"
#include "pqmlab/rng.hpp"
#include "pqmlab/scorer.hpp"
#include "pqmlab/train.hpp"

namespace pqm {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
  bool quiet = false;
  std::string corpus;
  std::string checkpoint;
  std::string pools;
};

struct Context {
  ExperimentConfig cfg;
  std::uint64_t seed = 0;
  std::string seed_source;
  fs::path out;
  int threads = 1;
  bool quiet = false;
  Options opts;

  void log(const std::string& msg) const {
    if (!quiet) std::cerr << msg << '\n';
  }
};

std::uint64_t parse_seed_text(const std::string& text, const std::string& source) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used, 10);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || text.front() == '-') {
    throw ConfigError(source + ": expected an unsigned 64-bit integer, got '" + text + "'");
  }
  return v;
}

Context make_context(const Options& opts) {
  Context ctx;
  ctx.opts = opts;
  if (!opts.config.empty()) {
    ctx.cfg = load_experiment_config(opts.config);
  } else {
    ctx.cfg = experiment_config_from_json(nlohmann::json::object(), fs::current_path());
  }
  // Precedence: flag, then environment, then config file.
  if (opts.seed) {
    ctx.seed = *opts.seed;
    ctx.seed_source = "flag";
  } else if (const char* env = std::getenv("PQMLAB_SEED"); env && *env) {
    ctx.seed = parse_seed_text(env, "PQMLAB_SEED");
    ctx.seed_source = "environment";
  } else if (ctx.cfg.seed) {
    ctx.seed = *ctx.cfg.seed;
    ctx.seed_source = "config";
  } else {
    ctx.seed = 0;
    ctx.seed_source = "default";
  }
  if (!opts.out.empty()) {
    ctx.out = opts.out;
  } else if (ctx.cfg.output_dir.is_absolute() || opts.config.empty()) {
    ctx.out = ctx.cfg.output_dir;
  } else {
    ctx.out = ctx.cfg.source_dir / ctx.cfg.output_dir;
  }
  if (opts.threads < 0) throw ConfigError("--threads: must be nonnegative");
  ctx.threads = opts.threads == 0 ? static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))
                                  : opts.threads;
  ctx.quiet = opts.quiet;
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec || !fs::is_directory(ctx.out)) {
    throw ConfigError("output_dir: cannot create " + ctx.out.string());
  }
  return ctx;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << content;
  if (!f) throw IoError("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path input_path(const std::string& flag, const fs::path& fallback) {
  return flag.empty() ? fallback : fs::path(flag);
}

/// Paths in the manifest are relative to the manifest's directory.
std::string manifest_path(const Context& ctx, const fs::path& p) {
  return fs::absolute(p).lexically_normal().lexically_proximate(fs::absolute(ctx.out).lexically_normal()).generic_string();
}

ojson file_entry(const Context& ctx, const fs::path& p) {
  return ojson{{"path", manifest_path(ctx, p)}, {"sha256", sha256_file(p)}};
}

void record_stage(const Context& ctx, const std::string& stage, ojson entry) {
  const fs::path path = ctx.out / "manifest.json";
  ojson manifest;
  if (fs::exists(path)) {
    try {
      manifest = ojson::parse(read_file(path));
    } catch (const ojson::parse_error&) {
      manifest = ojson();
    }
  }
  if (!manifest.is_object() || !manifest.contains("stages")) {
    manifest = ojson{{"schema_version", 1}, {"stages", ojson::object()}};
  }
  manifest["stages"][stage] = std::move(entry);
  write_file(path, manifest.dump(2) + "\n");
}

ojson stage_header(const Context& ctx) {
  return ojson{{"seed", ctx.seed}, {"seed_source", ctx.seed_source}, {"config_digest", ctx.cfg.digest}};
}

std::string csv_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ojson estimate_json(double mean, double se) { return ojson{{"mean", mean}, {"standard_error", se}}; }

// ---------------------------------------------------------------- simulate

int cmd_simulate(const Context& ctx) {
  const EnvironmentSpec& env = ctx.cfg.environment;
  ctx.log("simulating " + std::to_string(env.n_train) + " training trajectories and " +
          std::to_string(env.n_questions) + " pools of " + std::to_string(env.pool_size));
  const SimulatedData data = simulate_environment(env, derive_seed(ctx.seed, "simulate"), ctx.threads);
  const fs::path train_path = ctx.out / "train.jsonl";
  const fs::path pools_path = ctx.out / "pools.jsonl";
  const fs::path env_path = ctx.out / "environment.json";
  const std::size_t n_train = serialize_corpus(data.train, train_path);
  const std::size_t n_pool = serialize_corpus(data.pools, pools_path);
  write_file(env_path, environment_to_json(env).dump(2) + "\n");

  ojson stage = stage_header(ctx);
  stage["records"] = {{"train", n_train}, {"pools", n_pool}};
  stage["inputs"] = ojson::array();
  stage["outputs"] = {file_entry(ctx, env_path), file_entry(ctx, train_path), file_entry(ctx, pools_path)};
  record_stage(ctx, "simulate", std::move(stage));
  ctx.log("wrote " + train_path.string() + " and " + pools_path.string());
  return kExitOk;
}

// ---------------------------------------------------------------- annotate

int cmd_annotate(const Context& ctx) {
  const fs::path corpus_path = input_path(ctx.opts.corpus, ctx.out / "train.jsonl");
  if (!fs::exists(corpus_path)) throw IoError("corpus file " + corpus_path.string() + " does not exist");
  const Corpus corpus = parse_corpus(corpus_path);
  AnnotationConfig ann = ctx.cfg.annotation;
  ann.seed = derive_seed(ctx.seed, "annotate");
  ctx.log("annotating " + std::to_string(corpus.size()) + " trajectories with k=" +
          std::to_string(ann.k_completions));
  const Corpus annotated = annotate_corpus(corpus, ann, ctx.threads);
  const fs::path out_path = ctx.out / "annotated.jsonl";
  serialize_corpus(annotated, out_path);

  ojson report;
  report["k"] = ann.k_completions;
  report["completer_preset"] = ctx.cfg.annotation_preset;
  report["completer"] = {{"alpha", ann.completer.alpha}, {"beta", ann.completer.beta}};
  report["mark_after_first_error"] = ann.mark_after_first_error;
  report["full_sampling"] = ann.full_sampling;
  const bool ground_truth =
      !corpus.empty() && std::all_of(corpus.begin(), corpus.end(),
                                     [](const CorpusRecord& r) { return r.trajectory.has_ground_truth(); });
  if (ground_truth) {
    const NoiseReport noise = annotation_noise_report(corpus, ann, ctx.threads);
    ojson agreement;
    agreement["agreement"] = estimate_json(noise.agreement, noise.agreement_standard_error);
    agreement["precision"] = noise.precision;
    agreement["recall"] = noise.recall;
    agreement["true_positive"] = noise.true_positive;
    agreement["false_positive"] = noise.false_positive;
    agreement["false_negative"] = noise.false_negative;
    agreement["true_negative"] = noise.true_negative;
    agreement["first_error_accuracy"] = noise.first_error_accuracy;
    agreement["forced_false"] = noise.forced_false;
    agreement["forced_false_negatives"] = noise.forced_false_negatives;
    agreement["forced_contradiction_rate"] = noise.forced_contradiction_rate;
    ojson positions = ojson::array();
    for (const auto& p : noise.by_position) {
      positions.push_back({{"t", p.t}, {"precision", p.precision}, {"recall", p.recall},
                           {"true_positive", p.true_positive}, {"false_positive", p.false_positive},
                           {"false_negative", p.false_negative}, {"true_negative", p.true_negative}});
    }
    agreement["by_position"] = std::move(positions);
    report["ground_truth"] = std::move(agreement);
    ctx.log("label agreement with ground truth: " + csv_number(noise.agreement));
  }
  const fs::path report_path = ctx.out / "annotation_report.json";
  write_file(report_path, report.dump(2) + "\n");

  ojson stage = stage_header(ctx);
  stage["inputs"] = {file_entry(ctx, corpus_path)};
  stage["outputs"] = {file_entry(ctx, out_path), file_entry(ctx, report_path)};
  record_stage(ctx, "annotate", std::move(stage));
  return kExitOk;
}

// ------------------------------------------------------------------- train

bool is_inter(LossFamily f) { return f == LossFamily::inter_pair || f == LossFamily::inter_tree; }

/// Sibling-step trees for the inter-solution families, which cannot be
/// recovered from single-trajectory corpora.
std::vector<TrainExample> simulated_trees(const Context& ctx, LossFamily family) {
  const EnvironmentSpec& env = ctx.cfg.environment;
  const std::uint64_t params_seed = derive_seed(ctx.seed, "tree-params");
  const std::uint64_t tree_seed = derive_seed(ctx.seed, "trees");
  std::vector<TrainExample> out;
  for (int i = 0; i < env.n_train; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const PolicyParams params = env.question_params(idx, params_seed);
    const int prefix = i % std::max(1, env.horizon - 1);
    const int pairs = family == LossFamily::inter_pair ? 1 : 1 + i % 3;
    out.push_back(sample_tree_example(params, env.layout, prefix, pairs, derive_seed(tree_seed, idx)));
  }
  return out;
}

int cmd_train(const Context& ctx) {
  TrainConfig tc = ctx.cfg.train;
  tc.seed = ctx.cfg.train_seed_set ? ctx.cfg.train.seed : derive_seed(ctx.seed, "train");
  tc.threads = ctx.threads;
  tc.validate();

  ojson stage = stage_header(ctx);
  std::vector<TrainExample> examples;
  if (is_inter(tc.loss.family)) {
    examples = simulated_trees(ctx, tc.loss.family);
    stage["inputs"] = ojson::array();
    stage["examples"] = "simulated sibling trees";
  } else {
    const fs::path corpus_path = input_path(ctx.opts.corpus, ctx.out / "annotated.jsonl");
    if (!fs::exists(corpus_path)) throw IoError("corpus file " + corpus_path.string() + " does not exist");
    examples = examples_from_corpus(parse_corpus(corpus_path), tc.loss);
    stage["inputs"] = {file_entry(ctx, corpus_path)};
    stage["examples"] = "corpus";
  }
  if (examples.empty()) throw ValidationError("corpus", "training needs at least one trajectory");

  const int dim = static_cast<int>(examples.front().features.front().size());
  ScorerModel init = ctx.cfg.scorer.kind == ScorerKind::linear
                         ? ScorerModel::make_linear(dim)
                         : ScorerModel::make_mlp1(dim, ctx.cfg.scorer.hidden, derive_seed(ctx.seed, "init"));
  ctx.log(std::string("training ") + std::string(to_string(init.kind)) + " scorer with " +
          std::string(to_string(tc.loss.family)) + " on " + std::to_string(examples.size()) + " examples");
  const TrainResult result = train(std::move(init), examples, tc);

  const fs::path ckpt_path = ctx.out / "checkpoint.json";
  const fs::path trace_path = ctx.out / "trace.csv";
  save_checkpoint(result.model, ckpt_path, tc.digest());
  std::string trace = "step,loss,rank_agreement\n";
  for (const TraceRow& row : result.trace) {
    trace += std::to_string(row.step) + "," + csv_number(row.loss) + "," +
             (row.rank_agreement ? csv_number(*row.rank_agreement) : std::string()) + "\n";
  }
  write_file(trace_path, trace);
  if (!result.trace.empty()) ctx.log("final train loss " + csv_number(result.trace.back().loss));

  stage["train_config_digest"] = tc.digest();
  stage["outputs"] = {file_entry(ctx, ckpt_path), file_entry(ctx, trace_path)};
  record_stage(ctx, "train", std::move(stage));
  return kExitOk;
}

// -------------------------------------------------------------------- eval

int cmd_eval(const Context& ctx) {
  const fs::path ckpt_path = input_path(ctx.opts.checkpoint, ctx.out / "checkpoint.json");
  const fs::path pools_path = input_path(ctx.opts.pools, ctx.out / "pools.jsonl");
  if (!fs::exists(ckpt_path)) throw IoError("checkpoint file " + ckpt_path.string() + " does not exist");
  if (!fs::exists(pools_path)) throw IoError("pools file " + pools_path.string() + " does not exist");
  const ScorerModel model = load_checkpoint(ckpt_path);
  const std::vector<CandidatePool> base = pools_from_corpus(parse_corpus(pools_path));
  const std::vector<std::size_t>& ladder = ctx.cfg.ladder;
  for (const CandidatePool& pool : base) {
    if (ladder.back() > pool.size()) {
      throw ValidationError("eval.ladder", "n = " + std::to_string(ladder.back()) + " exceeds the pool size " +
                                               std::to_string(pool.size()) + " of " + pool.question_id);
    }
  }
  const std::uint64_t eval_seed = derive_seed(ctx.seed, "eval");
  ctx.log("evaluating " + std::to_string(base.size()) + " pools");

  std::vector<MetricRow> rows;
  auto append = [&rows](std::vector<MetricRow> more) { rows.insert(rows.end(), more.begin(), more.end()); };

  std::vector<CandidatePool> prm = base;
  score_pools(prm, model_scorer(model), ctx.cfg.aggregation, ctx.threads);
  append(bon_ladder(prm, ladder, eval_seed, "bon_prm", ctx.threads));

  std::vector<CandidatePool> orm = base;
  score_pools(orm, model_scorer(model), Aggregation::last, ctx.threads);
  append(bon_ladder(orm, ladder, eval_seed, "bon_orm_last", ctx.threads));

  const bool oracle_ok = std::all_of(base.begin(), base.end(), [](const CandidatePool& p) {
    return std::all_of(p.candidates.begin(), p.candidates.end(), [](const Candidate& c) {
      return c.trajectory.policy && c.trajectory.has_ground_truth();
    });
  });
  if (oracle_ok) {
    std::vector<CandidatePool> oracle = base;
    score_pools(oracle, oracle_scorer(), ctx.cfg.aggregation, ctx.threads);
    append(bon_ladder(oracle, ladder, eval_seed, "bon_oracle", ctx.threads));
  }

  std::vector<CandidatePool> random = base;
  score_pools(random, random_scorer(derive_seed(ctx.seed, "random-scorer")), ctx.cfg.aggregation, ctx.threads);
  append(bon_ladder(random, ladder, eval_seed, "bon_random", ctx.threads));

  append(pass_ladder(base, ladder, eval_seed));
  append(sc_ladder(base, ladder, eval_seed));
  append(sc_prm_ladder(prm, ladder, eval_seed, ctx.cfg.sc_weight_mode, "sc_prm"));

  const fs::path metrics_path = ctx.out / "metrics.csv";
  const fs::path steps_path = ctx.out / "step_scores.csv";
  const fs::path summary_path = ctx.out / "summary.json";
  write_file(metrics_path, metric_rows_to_csv(rows));

  std::vector<StepScoreRow> step_rows;
  for (const CandidatePool& pool : base) {
    const auto more = dump_step_scores(model, pool.candidates.front().trajectory);
    step_rows.insert(step_rows.end(), more.begin(), more.end());
  }
  write_file(steps_path, step_rows_to_csv(step_rows));

  ojson summary;
  summary["checkpoint_sha256"] = sha256_file(ckpt_path);
  summary["pools_sha256"] = sha256_file(pools_path);
  summary["n_questions"] = base.size();
  summary["aggregation"] = to_string(ctx.cfg.aggregation);
  summary["orm_stand_in"] = "bon_orm_last: the trained scorer applied to the final step only";
  summary["sc_weight_mode"] = to_string(ctx.cfg.sc_weight_mode);
  summary["oracle_available"] = oracle_ok;
  ojson table = ojson::array();
  for (const MetricRow& r : rows) {
    table.push_back({{"method", r.method}, {"n", r.n}, {"accuracy", r.accuracy}, {"n_questions", r.n_questions}});
  }
  summary["metrics"] = std::move(table);
  write_file(summary_path, summary.dump(2) + "\n");

  ojson stage = stage_header(ctx);
  stage["inputs"] = {file_entry(ctx, ckpt_path), file_entry(ctx, pools_path)};
  stage["outputs"] = {file_entry(ctx, metrics_path), file_entry(ctx, steps_path), file_entry(ctx, summary_path)};
  record_stage(ctx, "eval", std::move(stage));
  return kExitOk;
}

// ---------------------------------------------------------------- validate

int cmd_validate(const Context& ctx) {
  const std::vector<CheckResult> results =
      run_validation(ctx.cfg.validate, derive_seed(ctx.seed, "validate"), ctx.threads);
  bool all = true;
  ojson report = ojson::array();
  for (const CheckResult& r : results) {
    all = all && r.passed;
    if (!ctx.quiet || !r.passed) {
      std::printf("%s %-40s %s (%.2fs)\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str(), r.seconds);
    }
    report.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
  }
  write_file(ctx.out / "validate_report.json", report.dump(2) + "\n");
  std::printf("%s: %zu checks\n", all ? "all checks passed" : "validation failed", results.size());
  return all ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------- verify-manifest

int cmd_verify_manifest(const Context& ctx) {
  const fs::path path = ctx.out / "manifest.json";
  if (!fs::exists(path)) throw IoError("manifest " + path.string() + " does not exist");
  ojson manifest;
  try {
    manifest = ojson::parse(read_file(path));
  } catch (const ojson::parse_error& e) {
    throw ParseError(path.string(), 0, e.byte, e.what());
  }
  if (!manifest.contains("stages") || !manifest["stages"].is_object()) {
    throw ValidationError("stages", "manifest has no stages");
  }
  std::size_t checked = 0, bad = 0;
  for (const auto& [stage, entry] : manifest["stages"].items()) {
    for (const char* key : {"inputs", "outputs"}) {
      if (!entry.contains(key)) continue;
      for (const auto& file : entry[key]) {
        const fs::path p = ctx.out / file.at("path").get<std::string>();
        ++checked;
        std::string actual;
        try {
          actual = sha256_file(p);
        } catch (const Error&) {
          actual = "<missing>";
        }
        if (actual != file.at("sha256").get<std::string>()) {
          ++bad;
          std::printf("MISMATCH %s %s\n", stage.c_str(), p.string().c_str());
        }
      }
    }
  }
  std::printf("%zu files checked, %zu mismatched\n", checked, bad);
  return bad == 0 ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"pqmlab: process reward modelling as Q-value ranking on synthetic reasoning chains", "pqmlab"};
  app.require_subcommand(1);
  Options opts;
  std::string seed_text;
  app.add_option("--config", opts.config, "experiment config file (JSON)");
  app.add_option("--seed", seed_text, "master seed; overrides PQMLAB_SEED and the config");
  app.add_option("--out", opts.out, "output directory");
  app.add_option("--threads", opts.threads, "worker threads (0 = all cores)");
  app.add_flag("--quiet", opts.quiet, "suppress progress output");

  auto* simulate = app.add_subcommand("simulate", "write training corpus and candidate pools");
  auto* annotate = app.add_subcommand("annotate", "label a corpus with Monte-Carlo completions");
  annotate->add_option("--corpus", opts.corpus, "input corpus (default <out>/train.jsonl)");
  auto* train_cmd = app.add_subcommand("train", "train a step scorer");
  train_cmd->add_option("--corpus", opts.corpus, "labelled corpus (default <out>/annotated.jsonl)");
  auto* eval = app.add_subcommand("eval", "best-of-n and voting metrics");
  eval->add_option("--checkpoint", opts.checkpoint, "scorer checkpoint (default <out>/checkpoint.json)");
  eval->add_option("--pools", opts.pools, "candidate pools (default <out>/pools.jsonl)");
  auto* validate = app.add_subcommand("validate", "run the property battery");
  auto* verify = app.add_subcommand("verify-manifest", "recheck the digests recorded in the manifest");
  for (auto* sub : {simulate, annotate, train_cmd, eval, validate, verify}) sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfigError;
  }

  try {
    if (!seed_text.empty()) opts.seed = parse_seed_text(seed_text, "--seed");
    const Context ctx = make_context(opts);
    if (*simulate) return cmd_simulate(ctx);
    if (*annotate) return cmd_annotate(ctx);
    if (*train_cmd) return cmd_train(ctx);
    if (*eval) return cmd_eval(ctx);
    if (*validate) return cmd_validate(ctx);
    return cmd_verify_manifest(ctx);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace pqm
