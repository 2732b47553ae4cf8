#include "pqmlab/train.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "json.hpp"
#include "pqmlab/digest.hpp"
#include "pqmlab/error.hpp"
#include "pqmlab/parallel.hpp"
#include "pqmlab/rng.hpp"

namespace pqm {

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::sgd_momentum ? "sgd_momentum" : "adaptive_moment";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd_momentum") return OptimizerKind::sgd_momentum;
  if (name == "adaptive_moment") return OptimizerKind::adaptive_moment;
  throw ConfigError("unknown optimizer '" + std::string(name) +
                    "' (valid: sgd_momentum, adaptive_moment)");
}

void TrainConfig::validate() const {
  loss.validate();
  if (!(learning_rate >= 0.0)) throw ValidationError("learning_rate", "must be nonnegative");
  if (steps < 0) throw ValidationError("steps", "must be nonnegative");
  if (batch_size < 1) throw ValidationError("batch_size", "must be positive");
  if (eval_every < 1) throw ValidationError("eval_every", "must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw ValidationError("warmup_fraction", "must lie in [0, 1)");
  }
}

std::string TrainConfig::digest() const {
  nlohmann::ordered_json j;
  j["loss"] = {{"family", to_string(loss.family)},
               {"zeta", loss.zeta},
               {"wrong_order", to_string(loss.wrong_order)}};
  j["learning_rate"] = learning_rate;
  j["steps"] = steps;
  j["batch_size"] = batch_size;
  j["optimizer"] = to_string(optimizer);
  j["seed"] = seed;
  j["eval_every"] = eval_every;
  j["warmup_fraction"] = warmup_fraction;
  return sha256_hex(j.dump());
}

std::vector<TrainExample> examples_from_corpus(const Corpus& corpus, const LossSpec& loss) {
  if (loss.family == LossFamily::inter_pair || loss.family == LossFamily::inter_tree) {
    throw ValidationError("loss.family", std::string(to_string(loss.family)) +
                                             " needs sibling-step trees; trajectory corpora "
                                             "carry none");
  }
  std::vector<TrainExample> out;
  out.reserve(corpus.size());
  for (const auto& rec : corpus) {
    TrainExample ex;
    for (const Step& s : rec.trajectory.steps) ex.features.push_back(s.features);
    ex.labels = rec.labels;
    if (rec.annotation) ex.soft_targets = rec.annotation->soft_labels;
    if (loss.family == LossFamily::mse_soft && ex.soft_targets.empty()) {
      throw ValidationError("soft_labels", "mse_soft needs soft labels; trajectory " +
                                               rec.trajectory.question_id + " has none");
    }
    if (rec.trajectory.has_ground_truth()) ex.latent = latent_labels(rec.trajectory).labels();
    out.push_back(std::move(ex));
  }
  return out;
}

TrainExample sample_tree_example(const PolicyParams& params, const FeatureLayout& layout,
                                 int prefix, int n_pairs, std::uint64_t seed) {
  params.validate();
  if (prefix < 0 || n_pairs < 1) throw ValidationError("tree", "need prefix >= 0 and n_pairs >= 1");
  Rng rng(seed);
  const auto dim = static_cast<std::size_t>(layout.base_dim);
  const double half_sep = 0.5 / std::sqrt(static_cast<double>(dim));
  const int depth = prefix + n_pairs;
  std::vector<double> running_sum(dim, 0.0);
  double running_min = std::numeric_limits<double>::infinity();

  // Features of a step at depth t extending the correct chain so far.
  auto make_step = [&](int t, bool correct, bool extend_chain) {
    std::vector<double> obs(dim);
    double projection = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      obs[d] = (correct ? half_sep : -half_sep) + params.feature_noise * rng.normal();
      projection += obs[d];
    }
    projection /= std::sqrt(static_cast<double>(dim));
    std::vector<double> sum = running_sum;
    for (std::size_t d = 0; d < dim; ++d) sum[d] += obs[d];
    const double mn = std::min(running_min, projection);
    std::vector<double> f = obs;
    if (layout.prefix_mean) {
      for (std::size_t d = 0; d < dim; ++d) f.push_back(sum[d] / t);
    }
    if (layout.prefix_min) f.push_back(mn);
    if (layout.position) f.push_back(static_cast<double>(t) / depth);
    if (extend_chain) {
      running_sum = std::move(sum);
      running_min = mn;
    }
    return f;
  };

  TrainExample ex;
  for (int t = 1; t <= prefix; ++t) {
    ex.features.push_back(make_step(t, true, true));
    ex.latent.push_back(true);
  }
  for (int p = 0; p < n_pairs; ++p) {
    const int t = prefix + p + 1;
    auto wrong = make_step(t, false, false);
    ex.features.push_back(make_step(t, true, true));
    ex.features.push_back(std::move(wrong));
    ex.latent.push_back(true);
    ex.latent.push_back(false);
  }
  ex.labels = tree_labels(prefix, n_pairs);
  return ex;
}

namespace {

std::vector<double> example_scores(const ScorerModel& model, const TrainExample& ex) {
  std::vector<double> scores;
  scores.reserve(ex.features.size());
  for (const auto& f : ex.features) {
    if (static_cast<int>(f.size()) != model.feature_dim) {
      throw ValidationError("features", "dimension does not match the scorer");
    }
    scores.push_back(model.score(f));
  }
  return scores;
}

}  // namespace

double batch_loss(const ScorerModel& model, std::span<const TrainExample> batch, const LossSpec& loss) {
  if (batch.empty()) throw ValidationError("batch", "empty batch");
  double total = 0.0;
  for (const auto& ex : batch) {
    total += evaluate_loss(loss, example_scores(model, ex), ex.labels, ex.soft_targets).value;
  }
  return total / static_cast<double>(batch.size());
}

std::vector<double> parameter_grad(const ScorerModel& model, std::span<const TrainExample> batch,
                                   const LossSpec& loss, int threads, double* loss_value) {
  if (batch.empty()) throw ValidationError("batch", "empty batch");
  const std::size_t n_params = model.n_params();
  std::vector<std::vector<double>> per_example(batch.size());
  std::vector<double> values(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    const TrainExample& ex = batch[i];
    const std::vector<double> scores = example_scores(model, ex);
    const LossOutput out = evaluate_loss(loss, scores, ex.labels, ex.soft_targets);
    std::vector<double> g(n_params, 0.0);
    for (std::size_t t = 0; t < scores.size(); ++t) {
      if (out.grad[t] != 0.0) model.score_backward(ex.features[t], out.grad[t], g);
    }
    per_example[i] = std::move(g);
    values[i] = out.value;
  });
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<double> grad(n_params, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t p = 0; p < n_params; ++p) grad[p] += per_example[i][p];
    total += values[i];
  }
  for (double& g : grad) g *= inv;
  if (loss_value) *loss_value = total * inv;
  return grad;
}

std::optional<double> rank_agreement(const ScorerModel& model, std::span<const TrainExample> examples) {
  std::size_t ordered = 0, pairs = 0;
  for (const auto& ex : examples) {
    if (ex.latent.size() != ex.features.size()) continue;
    const std::vector<double> scores = example_scores(model, ex);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (!ex.latent[i]) continue;
      for (std::size_t j = 0; j < scores.size(); ++j) {
        if (ex.latent[j]) continue;
        ++pairs;
        ordered += scores[i] > scores[j] ? 1 : 0;
      }
    }
  }
  if (pairs == 0) return std::nullopt;
  return static_cast<double>(ordered) / static_cast<double>(pairs);
}

namespace {

double scheduled_rate(const TrainConfig& cfg, int step) {
  const int warmup = static_cast<int>(std::floor(cfg.warmup_fraction * cfg.steps));
  if (step < warmup) return cfg.learning_rate * static_cast<double>(step + 1) / warmup;
  const int decay_steps = cfg.steps - warmup;
  if (decay_steps <= 0) return cfg.learning_rate;
  const double progress = static_cast<double>(step - warmup) / decay_steps;
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace

TrainResult train(ScorerModel model, std::span<const TrainExample> examples, const TrainConfig& cfg) {
  cfg.validate();
  if (examples.empty()) throw ValidationError("corpus", "no training examples");
  const std::size_t n_params = model.n_params();
  std::vector<double> first_moment(n_params, 0.0), second_moment(n_params, 0.0);
  constexpr double kMomentum = 0.9, kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  TrainResult result;
  auto record = [&](int step) {
    result.trace.push_back({step, batch_loss(model, examples, cfg.loss), rank_agreement(model, examples)});
  };
  record(0);

  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), examples.size());
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  std::uint64_t epoch = 0;
  std::vector<TrainExample> minibatch;
  for (int step = 0; step < cfg.steps; ++step) {
    minibatch.clear();
    while (minibatch.size() < batch) {
      if (cursor == order.size()) {
        order = Rng(derive_seed(cfg.seed, epoch++)).permutation(examples.size());
        cursor = 0;
      }
      minibatch.push_back(examples[order[cursor++]]);
    }
    const std::vector<double> grad = parameter_grad(model, minibatch, cfg.loss, cfg.threads);
    const double rate = scheduled_rate(cfg, step);
    for (std::size_t p = 0; p < n_params; ++p) {
      if (cfg.optimizer == OptimizerKind::sgd_momentum) {
        first_moment[p] = kMomentum * first_moment[p] + grad[p];
        model.params[p] -= rate * first_moment[p];
      } else {
        first_moment[p] = kBeta1 * first_moment[p] + (1.0 - kBeta1) * grad[p];
        second_moment[p] = kBeta2 * second_moment[p] + (1.0 - kBeta2) * grad[p] * grad[p];
        const double m_hat = first_moment[p] / (1.0 - std::pow(kBeta1, step + 1));
        const double v_hat = second_moment[p] / (1.0 - std::pow(kBeta2, step + 1));
        model.params[p] -= rate * m_hat / (std::sqrt(v_hat) + kEps);
      }
    }
    const int done = step + 1;
    if (done % cfg.eval_every == 0 || done == cfg.steps) record(done);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace pqm
