#include "pqmlab/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "pqmlab/digest.hpp"
#include "pqmlab/error.hpp"
#include "pqmlab/parallel.hpp"
#include "pqmlab/rng.hpp"

namespace pqm {

namespace {

using json = nlohmann::json;

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void check_object(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(join(path, key) + ": unknown key");
  }
}

template <typename T>
T read(const json& j, const std::string& key, const std::string& path, T fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(join(path, key) + ": wrong type");
  }
}

double read_probability(const json& j, const std::string& key, const std::string& path) {
  const double v = read<double>(j, key, path, -1.0);
  if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(join(path, key) + ": must lie in [0, 1]");
  return v;
}

ProbabilityRange read_range(const json& j, const std::string& key, const std::string& path) {
  const auto v = read<std::vector<double>>(j, key, path, {});
  if (v.size() != 2 || !(0.0 <= v[0] && v[0] <= v[1] && v[1] <= 1.0)) {
    throw ConfigError(join(path, key) + ": expected [lo, hi] with 0 <= lo <= hi <= 1");
  }
  return {v[0], v[1]};
}

int read_positive(const json& j, const std::string& key, const std::string& path, int fallback,
                  bool allow_zero = false) {
  const int v = read<int>(j, key, path, fallback);
  if (v < (allow_zero ? 0 : 1)) {
    throw ConfigError(join(path, key) + (allow_zero ? ": must be nonnegative" : ": must be positive"));
  }
  return v;
}

std::string preset_for(const EnvironmentSpec& spec, std::size_t index) {
  if (spec.policy_preset == "mixed") return policy_presets()[index % policy_presets().size()].name;
  return spec.policy_preset;
}

}  // namespace

PolicyParams EnvironmentSpec::question_params(std::size_t index, std::uint64_t seed) const {
  Rng rng(derive_seed(seed, index));
  const PolicyPreset& preset = find_policy_preset(preset_for(*this, index));
  PolicyParams p;
  p.horizon = horizon;
  p.feature_noise = feature_noise;
  p.distractor_count = distractor_count;
  const double a_draw = rng.uniform();
  const double b_draw = rng.uniform();
  if (alpha) {
    p.alpha = *alpha;
  } else if (alpha_range) {
    p.alpha = alpha_range->lo + (alpha_range->hi - alpha_range->lo) * a_draw;
  } else {
    p.alpha = preset.alpha_lo + (preset.alpha_hi - preset.alpha_lo) * a_draw;
  }
  if (beta) {
    p.beta = *beta;
  } else if (beta_range) {
    p.beta = beta_range->lo + (beta_range->hi - beta_range->lo) * b_draw;
  } else {
    p.beta = preset.beta_lo + (preset.beta_hi - preset.beta_lo) * b_draw;
  }
  return p;
}

EnvironmentSpec environment_from_json(const json& j, const std::string& path) {
  check_object(j, path,
               {"alpha", "alpha_range", "beta", "beta_range", "horizon", "feature_noise",
                "distractor_count", "n_questions", "policy_preset", "pool_size", "n_train",
                "features"});
  EnvironmentSpec spec;
  if (j.contains("alpha")) spec.alpha = read_probability(j, "alpha", path);
  if (j.contains("alpha_range")) spec.alpha_range = read_range(j, "alpha_range", path);
  if (j.contains("beta")) spec.beta = read_probability(j, "beta", path);
  if (j.contains("beta_range")) spec.beta_range = read_range(j, "beta_range", path);
  spec.policy_preset = read<std::string>(j, "policy_preset", path, spec.policy_preset);
  if (spec.policy_preset != "mixed") {
    try {
      find_policy_preset(spec.policy_preset);
    } catch (const ConfigError& e) {
      throw ConfigError(join(path, "policy_preset") + ": " + e.what());
    }
  }
  spec.horizon = read_positive(j, "horizon", path, spec.horizon);
  spec.feature_noise = read<double>(j, "feature_noise", path, spec.feature_noise);
  if (!(spec.feature_noise >= 0.0)) throw ConfigError(join(path, "feature_noise") + ": must be nonnegative");
  spec.distractor_count = read_positive(j, "distractor_count", path, spec.distractor_count);
  spec.n_questions = read_positive(j, "n_questions", path, spec.n_questions, true);
  spec.pool_size = read_positive(j, "pool_size", path, spec.pool_size);
  spec.n_train = read_positive(j, "n_train", path, spec.n_train, true);
  if (const auto it = j.find("features"); it != j.end()) {
    const std::string fpath = join(path, "features");
    check_object(*it, fpath, {"base_dim", "prefix_mean", "prefix_min", "position"});
    spec.layout.base_dim = read_positive(*it, "base_dim", fpath, spec.layout.base_dim);
    spec.layout.prefix_mean = read<bool>(*it, "prefix_mean", fpath, spec.layout.prefix_mean);
    spec.layout.prefix_min = read<bool>(*it, "prefix_min", fpath, spec.layout.prefix_min);
    spec.layout.position = read<bool>(*it, "position", fpath, spec.layout.position);
  }
  return spec;
}

nlohmann::ordered_json environment_to_json(const EnvironmentSpec& spec) {
  nlohmann::ordered_json j;
  if (spec.alpha) j["alpha"] = *spec.alpha;
  if (spec.alpha_range) j["alpha_range"] = {spec.alpha_range->lo, spec.alpha_range->hi};
  if (spec.beta) j["beta"] = *spec.beta;
  if (spec.beta_range) j["beta_range"] = {spec.beta_range->lo, spec.beta_range->hi};
  j["policy_preset"] = spec.policy_preset;
  j["horizon"] = spec.horizon;
  j["feature_noise"] = spec.feature_noise;
  j["distractor_count"] = spec.distractor_count;
  j["n_questions"] = spec.n_questions;
  j["pool_size"] = spec.pool_size;
  j["n_train"] = spec.n_train;
  j["features"] = {{"base_dim", spec.layout.base_dim},
                   {"prefix_mean", spec.layout.prefix_mean},
                   {"prefix_min", spec.layout.prefix_min},
                   {"position", spec.layout.position}};
  return j;
}

namespace {

std::string numbered(const char* prefix, std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s-%06zu", prefix, i);
  return buf;
}

}  // namespace

SimulatedData simulate_environment(const EnvironmentSpec& spec, std::uint64_t seed, int threads) {
  SimulatedData data;
  const std::uint64_t train_params_seed = derive_seed(seed, "train-params");
  const std::uint64_t train_seed = derive_seed(seed, "train");
  data.train.resize(static_cast<std::size_t>(spec.n_train));
  parallel_for(data.train.size(), threads, [&](std::size_t i) {
    const PolicyParams params = spec.question_params(i, train_params_seed);
    auto [traj, labels] = sample_trajectory(params, spec.layout, numbered("train", i), derive_seed(train_seed, i));
    data.train[i] = CorpusRecord{std::move(traj), std::move(labels), std::nullopt, std::nullopt};
  });

  const std::uint64_t pool_params_seed = derive_seed(seed, "pool-params");
  const std::uint64_t pool_seed = derive_seed(seed, "pool");
  const auto pool_size = static_cast<std::size_t>(spec.pool_size);
  data.pools.resize(static_cast<std::size_t>(spec.n_questions) * pool_size);
  parallel_for(static_cast<std::size_t>(spec.n_questions), threads, [&](std::size_t q) {
    const PolicyParams params = spec.question_params(q, pool_params_seed);
    const std::string qid = numbered("test", q);
    for (std::size_t c = 0; c < pool_size; ++c) {
      auto [traj, labels] = sample_trajectory(params, spec.layout, qid, derive_seed(pool_seed, q, c));
      data.pools[q * pool_size + c] =
          CorpusRecord{std::move(traj), std::move(labels), std::nullopt, std::nullopt};
    }
  });
  return data;
}

namespace {

LossSpec loss_from_json(const json& j, const std::string& path) {
  check_object(j, path, {"family", "zeta", "wrong_order"});
  LossSpec loss;
  try {
    loss.family = parse_loss_family(read<std::string>(j, "family", path, "practical"));
  } catch (const ConfigError& e) {
    throw ConfigError(join(path, "family") + ": " + e.what());
  }
  loss.zeta = read<double>(j, "zeta", path, loss.zeta);
  if (!(loss.zeta >= 0.0)) throw ConfigError(join(path, "zeta") + ": must be nonnegative");
  try {
    loss.wrong_order = parse_wrong_order(read<std::string>(j, "wrong_order", path, "as_written"));
  } catch (const ConfigError& e) {
    throw ConfigError(join(path, "wrong_order") + ": " + e.what());
  }
  return loss;
}

PolicyParams preset_midpoint(const std::string& name) {
  const PolicyPreset& p = find_policy_preset(name);
  PolicyParams out;
  out.alpha = 0.5 * (p.alpha_lo + p.alpha_hi);
  out.beta = 0.5 * (p.beta_lo + p.beta_hi);
  return out;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& j, const std::filesystem::path& source_dir) {
  check_object(j, "", {"seed", "output_dir", "environment", "annotation", "train", "eval", "validate"});
  ExperimentConfig cfg;
  cfg.source_dir = source_dir;
  if (j.contains("seed")) cfg.seed = read<std::uint64_t>(j, "seed", "", 0);
  cfg.output_dir = read<std::string>(j, "output_dir", "", cfg.output_dir.string());

  if (const auto it = j.find("environment"); it != j.end()) {
    if (it->is_string()) {
      std::filesystem::path env_path = it->get<std::string>();
      if (env_path.is_relative()) env_path = source_dir / env_path;
      std::ifstream f(env_path);
      if (!f) throw ConfigError("environment: referenced file " + env_path.string() + " does not exist");
      json env;
      try {
        env = json::parse(f);
      } catch (const json::parse_error& e) {
        throw ConfigError("environment: " + env_path.string() + ": " + e.what());
      }
      cfg.environment = environment_from_json(env, "environment");
    } else {
      cfg.environment = environment_from_json(*it, "environment");
    }
  }

  cfg.annotation.completer = preset_midpoint("strong");
  if (const auto it = j.find("annotation"); it != j.end()) {
    const std::string path = "annotation";
    check_object(*it, path, {"completer_preset", "completer", "k", "mark_after_first_error", "full_sampling"});
    if (it->contains("completer_preset")) {
      try {
        cfg.annotation_preset = read<std::string>(*it, "completer_preset", path, "");
        cfg.annotation.completer = preset_midpoint(cfg.annotation_preset);
      } catch (const ConfigError& e) {
        throw ConfigError(join(path, "completer_preset") + ": " + e.what());
      }
    }
    if (const auto c = it->find("completer"); c != it->end()) {
      const std::string cpath = join(path, "completer");
      check_object(*c, cpath, {"alpha", "beta"});
      cfg.annotation_preset = "custom";
      cfg.annotation.completer.alpha = read_probability(*c, "alpha", cpath);
      cfg.annotation.completer.beta = read_probability(*c, "beta", cpath);
    }
    cfg.annotation.k_completions = read_positive(*it, "k", path, cfg.annotation.k_completions);
    cfg.annotation.mark_after_first_error =
        read<bool>(*it, "mark_after_first_error", path, cfg.annotation.mark_after_first_error);
    cfg.annotation.full_sampling = read<bool>(*it, "full_sampling", path, cfg.annotation.full_sampling);
  }
  cfg.annotation.completer.horizon = cfg.environment.horizon;
  cfg.annotation.completer.feature_noise = cfg.environment.feature_noise;
  cfg.annotation.completer.distractor_count = cfg.environment.distractor_count;

  if (const auto it = j.find("train"); it != j.end()) {
    const std::string path = "train";
    check_object(*it, path, {"loss", "learning_rate", "steps", "batch_size", "optimizer", "seed",
                             "eval_every", "warmup_fraction", "scorer"});
    if (const auto l = it->find("loss"); l != it->end()) cfg.train.loss = loss_from_json(*l, join(path, "loss"));
    cfg.train.learning_rate = read<double>(*it, "learning_rate", path, cfg.train.learning_rate);
    if (!(cfg.train.learning_rate >= 0.0)) throw ConfigError("train.learning_rate: must be nonnegative");
    cfg.train.steps = read_positive(*it, "steps", path, cfg.train.steps, true);
    cfg.train.batch_size = read_positive(*it, "batch_size", path, cfg.train.batch_size);
    try {
      cfg.train.optimizer = parse_optimizer(read<std::string>(*it, "optimizer", path, "adaptive_moment"));
    } catch (const ConfigError& e) {
      throw ConfigError("train.optimizer: " + std::string(e.what()));
    }
    if (it->contains("seed")) {
      cfg.train.seed = read<std::uint64_t>(*it, "seed", path, 0);
      cfg.train_seed_set = true;
    }
    cfg.train.eval_every = read_positive(*it, "eval_every", path, cfg.train.eval_every);
    cfg.train.warmup_fraction = read<double>(*it, "warmup_fraction", path, cfg.train.warmup_fraction);
    if (!(cfg.train.warmup_fraction >= 0.0 && cfg.train.warmup_fraction < 1.0)) {
      throw ConfigError("train.warmup_fraction: must lie in [0, 1)");
    }
    if (const auto s = it->find("scorer"); s != it->end()) {
      const std::string spath = join(path, "scorer");
      check_object(*s, spath, {"kind", "hidden"});
      try {
        cfg.scorer.kind = parse_scorer_kind(read<std::string>(*s, "kind", spath, "linear"));
      } catch (const ConfigError& e) {
        throw ConfigError(join(spath, "kind") + ": " + e.what());
      }
      cfg.scorer.hidden = read_positive(*s, "hidden", spath, cfg.scorer.hidden);
    }
  }

  if (const auto it = j.find("eval"); it != j.end()) {
    const std::string path = "eval";
    check_object(*it, path, {"ladder", "aggregation", "sc_weight_mode"});
    cfg.ladder = read<std::vector<std::size_t>>(*it, "ladder", path, cfg.ladder);
    if (cfg.ladder.empty()) throw ConfigError("eval.ladder: must not be empty");
    for (std::size_t i = 0; i < cfg.ladder.size(); ++i) {
      if (cfg.ladder[i] < 1 || (i > 0 && cfg.ladder[i] <= cfg.ladder[i - 1])) {
        throw ConfigError("eval.ladder[" + std::to_string(i) + "]: ladder must be strictly ascending and positive");
      }
    }
    try {
      cfg.aggregation = parse_aggregation(read<std::string>(*it, "aggregation", path, "min"));
    } catch (const ConfigError& e) {
      throw ConfigError("eval.aggregation: " + std::string(e.what()));
    }
    const std::string mode = read<std::string>(*it, "sc_weight_mode", path, "score_sum");
    if (mode == "score_sum") {
      cfg.sc_weight_mode = WeightMode::score_sum;
    } else if (mode == "count_then_score") {
      cfg.sc_weight_mode = WeightMode::count_then_score;
    } else {
      throw ConfigError("eval.sc_weight_mode: unknown mode '" + mode + "' (valid: score_sum, count_then_score)");
    }
  }

  if (const auto it = j.find("validate"); it != j.end()) {
    const std::string path = "validate";
    check_object(*it, path, {"alpha", "beta", "horizon", "grad_tolerance", "scorer_grad_tolerance",
                             "n_oracle_pairs", "n_regimes", "n_patterns", "n_mdps", "n_grad_points",
                             "assumption_states", "assumption_rollouts"});
    auto& v = cfg.validate;
    if (it->contains("alpha")) v.alpha = read_probability(*it, "alpha", path);
    if (it->contains("beta")) v.beta = read_probability(*it, "beta", path);
    v.horizon = read_positive(*it, "horizon", path, v.horizon);
    v.grad_tolerance = read<double>(*it, "grad_tolerance", path, v.grad_tolerance);
    v.scorer_grad_tolerance = read<double>(*it, "scorer_grad_tolerance", path, v.scorer_grad_tolerance);
    if (v.grad_tolerance < 0 || v.scorer_grad_tolerance < 0) {
      throw ConfigError("validate.grad_tolerance: must be nonnegative");
    }
    v.n_oracle_pairs = read_positive(*it, "n_oracle_pairs", path, v.n_oracle_pairs);
    v.n_regimes = read_positive(*it, "n_regimes", path, v.n_regimes);
    v.n_patterns = read_positive(*it, "n_patterns", path, v.n_patterns);
    v.n_mdps = read_positive(*it, "n_mdps", path, v.n_mdps);
    v.n_grad_points = read_positive(*it, "n_grad_points", path, v.n_grad_points);
    v.assumption_states = static_cast<std::size_t>(
        read_positive(*it, "assumption_states", path, static_cast<int>(v.assumption_states)));
    v.assumption_rollouts = static_cast<std::size_t>(
        read_positive(*it, "assumption_rollouts", path, static_cast<int>(v.assumption_rollouts)));
  }

  // Canonical form: the parsed JSON re-dumped with sorted keys.
  cfg.digest = sha256_hex(j.dump());
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config file " + path.string() + " does not exist");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

}  // namespace pqm
