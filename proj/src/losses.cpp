#include "pqmlab/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pqmlab/error.hpp"
#include "pqmlab/synth_mdp.hpp"

namespace pqm {

namespace {

constexpr std::array<std::pair<LossFamily, std::string_view>, 9> kFamilyNames = {{
    {LossFamily::bce, "bce"},
    {LossFamily::mse_hard, "mse_hard"},
    {LossFamily::mse_soft, "mse_soft"},
    {LossFamily::pl_vanilla, "pl_vanilla"},
    {LossFamily::theorem, "theorem"},
    {LossFamily::practical, "practical"},
    {LossFamily::ablate, "ablate"},
    {LossFamily::inter_pair, "inter_pair"},
    {LossFamily::inter_tree, "inter_tree"},
}};

// Index of a score in the listwise terms; kAnchor is the fixed Q_0 = 0.
constexpr int kAnchor = -1;

struct Entry {
  int index;
  double shift;
};

double score_of(std::span<const double> scores, int index) {
  return index == kAnchor ? 0.0 : scores[static_cast<std::size_t>(index)];
}

// Adds weight * log(exp(s_num) / sum_j exp(s_j + shift_j)) to *value and its
// gradient to grad. Log-sum-exp with max subtraction.
void add_choice_term(std::span<const double> scores, int numerator, std::span<const Entry> denominator,
                     double weight, double* value, std::span<double> grad) {
  double max_term = -std::numeric_limits<double>::infinity();
  for (const Entry& e : denominator) max_term = std::max(max_term, score_of(scores, e.index) + e.shift);
  double sum = 0.0;
  for (const Entry& e : denominator) sum += std::exp(score_of(scores, e.index) + e.shift - max_term);
  const double log_denominator = max_term + std::log(sum);
  *value += weight * (score_of(scores, numerator) - log_denominator);
  if (numerator != kAnchor) grad[static_cast<std::size_t>(numerator)] += weight;
  for (const Entry& e : denominator) {
    if (e.index == kAnchor) continue;
    const double softmax = std::exp(score_of(scores, e.index) + e.shift - log_denominator);
    grad[static_cast<std::size_t>(e.index)] -= weight * softmax;
  }
}

std::vector<int> zero_based(const std::vector<int>& one_based) {
  std::vector<int> out;
  out.reserve(one_based.size());
  for (int i : one_based) out.push_back(i - 1);
  return out;
}

void check_lengths(std::span<const double> scores, const StepLabels& labels) {
  if (scores.empty()) throw ValidationError("scores", "at least one step score required");
  if (static_cast<int>(scores.size()) != labels.size()) {
    throw ValidationError("labels", "length " + std::to_string(labels.size()) +
                                        " does not match " + std::to_string(scores.size()) +
                                        " scores");
  }
}

// Sum over t = 0..|C| of the log-probability that c_t is chosen among the
// anchor, c_1..c_t and the margin-shifted `wrong_in_denominator`, scaled by
// `weight`.
void add_correct_chain(std::span<const double> scores, const std::vector<int>& correct,
                       const std::vector<int>& wrong_in_denominator, double zeta, double weight,
                       double* value, std::span<double> grad) {
  std::vector<Entry> denominator;
  denominator.reserve(correct.size() + wrong_in_denominator.size() + 1);
  for (int w : wrong_in_denominator) denominator.push_back({w, zeta});
  denominator.push_back({kAnchor, 0.0});
  add_choice_term(scores, kAnchor, denominator, weight, value, grad);
  for (int c : correct) {
    denominator.push_back({c, 0.0});
    add_choice_term(scores, c, denominator, weight, value, grad);
  }
}

void check_finite_inputs(std::span<const double> scores) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("scores", "must be finite");
  }
}

}  // namespace

std::string_view to_string(LossFamily family) {
  for (const auto& [f, name] : kFamilyNames) {
    if (f == family) return name;
  }
  return "unknown";
}

std::string_view to_string(WrongOrder order) {
  return order == WrongOrder::as_written ? "as_written" : "reversed";
}

LossFamily parse_loss_family(std::string_view name) {
  for (const auto& [f, n] : kFamilyNames) {
    if (n == name) return f;
  }
  std::string valid;
  for (const auto& [f, n] : kFamilyNames) valid += (valid.empty() ? "" : ", ") + std::string(n);
  throw ConfigError("unknown loss family '" + std::string(name) + "' (valid: " + valid + ")");
}

WrongOrder parse_wrong_order(std::string_view name) {
  if (name == "as_written") return WrongOrder::as_written;
  if (name == "reversed") return WrongOrder::reversed;
  throw ConfigError("unknown wrong_order '" + std::string(name) +
                    "' (valid: as_written, reversed)");
}

const std::vector<LossFamily>& all_loss_families() {
  static const std::vector<LossFamily> families = [] {
    std::vector<LossFamily> out;
    for (const auto& [f, n] : kFamilyNames) out.push_back(f);
    return out;
  }();
  return families;
}

void LossSpec::validate() const {
  if (!(zeta >= 0.0) || !std::isfinite(zeta)) throw ValidationError("zeta", "must be finite and >= 0");
}

LossOutput bce_loss(std::span<const double> probs, const StepLabels& labels) {
  check_lengths(probs, labels);
  const double h = static_cast<double>(probs.size());
  LossOutput out;
  out.grad.resize(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("bce_loss: probability outside (0, 1)");
    const bool c = labels.labels()[i];
    out.value -= (c ? std::log(p) : std::log1p(-p)) / h;
    out.grad[i] = (p - (c ? 1.0 : 0.0)) / h;
  }
  return out;
}

LossOutput bce_loss_from_scores(std::span<const double> scores, const StepLabels& labels) {
  check_lengths(scores, labels);
  check_finite_inputs(scores);
  const double h = static_cast<double>(scores.size());
  LossOutput out;
  out.grad.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    const bool c = labels.labels()[i];
    // -log sigma(s) = softplus(-s); -log(1 - sigma(s)) = softplus(s).
    const double z = c ? -s : s;
    const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    out.value += softplus / h;
    out.grad[i] = (sigmoid(s) - (c ? 1.0 : 0.0)) / h;
  }
  return out;
}

LossOutput mse_loss(std::span<const double> scores_sigma, std::span<const double> targets) {
  if (scores_sigma.size() != targets.size()) {
    throw ValidationError("targets", "length " + std::to_string(targets.size()) +
                                         " does not match " + std::to_string(scores_sigma.size()) +
                                         " scores");
  }
  if (scores_sigma.empty()) throw ValidationError("scores", "at least one step score required");
  const double h = static_cast<double>(scores_sigma.size());
  LossOutput out;
  out.grad.resize(scores_sigma.size());
  for (std::size_t i = 0; i < scores_sigma.size(); ++i) {
    const double d = scores_sigma[i] - targets[i];
    out.value += d * d / h;
    out.grad[i] = 2.0 * d / h;
  }
  return out;
}

LossOutput practical_loss(std::span<const double> scores, const StepLabels& labels, double zeta) {
  check_lengths(scores, labels);
  check_finite_inputs(scores);
  const LabelSplit split = split_labels(labels);
  const auto correct = zero_based(split.correct);
  const auto wrong = zero_based(split.wrong);
  const double weight = -1.0 / static_cast<double>(std::max<std::size_t>(correct.size(), 1));
  double ll = 0.0;
  std::vector<double> grad(scores.size(), 0.0);
  add_correct_chain(scores, correct, wrong, zeta, weight, &ll, grad);
  return LossOutput{ll, std::move(grad)};
}

LossOutput ablate_loss(std::span<const double> scores, const StepLabels& labels, double zeta) {
  check_lengths(scores, labels);
  check_finite_inputs(scores);
  const LabelSplit split = split_labels(labels);
  const auto correct = zero_based(split.correct);
  std::vector<int> first_wrong;
  if (!split.wrong.empty()) first_wrong.push_back(split.wrong.front() - 1);
  const double weight = -1.0 / static_cast<double>(std::max<std::size_t>(correct.size(), 1));
  double ll = 0.0;
  std::vector<double> grad(scores.size(), 0.0);
  add_correct_chain(scores, correct, first_wrong, zeta, weight, &ll, grad);
  return LossOutput{ll, std::move(grad)};
}

LossOutput theorem_loss(std::span<const double> scores, const StepLabels& labels, double zeta,
                        WrongOrder wrong_order) {
  check_lengths(scores, labels);
  check_finite_inputs(scores);
  const LabelSplit split = split_labels(labels);
  const auto correct = zero_based(split.correct);
  const auto wrong = zero_based(split.wrong);
  std::vector<int> traversal = wrong;
  if (wrong_order == WrongOrder::reversed) std::reverse(traversal.begin(), traversal.end());

  const double weight = -1.0 / static_cast<double>(scores.size());
  double ll = 0.0;
  std::vector<double> grad(scores.size(), 0.0);
  std::vector<Entry> denominator;
  for (std::size_t t = 0; t < traversal.size(); ++t) {
    denominator.push_back({traversal[t], 0.0});
    if (t == 0) continue;  // the sum starts at t = 2
    add_choice_term(scores, traversal[t], denominator, weight, &ll, grad);
  }
  add_correct_chain(scores, correct, wrong, zeta, weight, &ll, grad);
  return LossOutput{ll, std::move(grad)};
}

LossOutput pl_vanilla_loss(std::span<const double> scores, const StepLabels& labels,
                           WrongOrder wrong_order) {
  return theorem_loss(scores, labels, 0.0, wrong_order);
}

LossOutput inter_solution_loss(const StepTree& tree, double zeta, InterVariant variant) {
  if (tree.pairs.empty()) throw ValidationError("tree", "needs at least one (correct, wrong) pair");
  if (variant == InterVariant::pair && tree.pairs.size() != 1) {
    throw ValidationError("tree", "pair variant takes exactly one divergence pair");
  }
  std::vector<double> flat = tree.prefix;
  for (const auto& [c, w] : tree.pairs) {
    flat.push_back(c);
    flat.push_back(w);
  }
  check_finite_inputs(flat);
  std::vector<int> correct, wrong;
  for (std::size_t i = 0; i < tree.prefix.size(); ++i) correct.push_back(static_cast<int>(i));
  for (std::size_t p = 0; p < tree.pairs.size(); ++p) {
    correct.push_back(static_cast<int>(tree.prefix.size() + 2 * p));
    wrong.push_back(static_cast<int>(tree.prefix.size() + 2 * p + 1));
  }
  const double weight = -1.0 / static_cast<double>(correct.size());
  double ll = 0.0;
  std::vector<double> grad(flat.size(), 0.0);
  add_correct_chain(flat, correct, wrong, zeta, weight, &ll, grad);
  return LossOutput{ll, std::move(grad)};
}

StepLabels tree_labels(int prefix, int n_pairs) {
  std::vector<bool> labels(static_cast<std::size_t>(prefix), true);
  for (int p = 0; p < n_pairs; ++p) {
    labels.push_back(true);
    labels.push_back(false);
  }
  return StepLabels(std::move(labels));
}

StepTree tree_from_scores(std::span<const double> scores, const StepLabels& labels) {
  check_lengths(scores, labels);
  const auto& l = labels.labels();
  // The prefix ends right before the first (true, false) pair; everything
  // after it must be (true, false) pairs.
  const auto first_error = labels.first_error();
  if (!first_error || *first_error < 2) {
    throw ValidationError("labels", "not a flattened step tree");
  }
  const std::size_t prefix = static_cast<std::size_t>(*first_error) - 2;
  if ((l.size() - prefix) % 2 != 0) throw ValidationError("labels", "not a flattened step tree");
  StepTree tree;
  tree.prefix.assign(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(prefix));
  for (std::size_t i = prefix; i < l.size(); i += 2) {
    if (!l[i] || l[i + 1]) throw ValidationError("labels", "not a flattened step tree");
    tree.pairs.emplace_back(scores[i], scores[i + 1]);
  }
  return tree;
}

LossOutput evaluate_loss(const LossSpec& spec, std::span<const double> scores,
                         const StepLabels& labels, std::span<const double> soft_targets) {
  spec.validate();
  switch (spec.family) {
    case LossFamily::bce:
      return bce_loss_from_scores(scores, labels);
    case LossFamily::mse_hard:
    case LossFamily::mse_soft: {
      check_lengths(scores, labels);
      check_finite_inputs(scores);
      std::vector<double> targets;
      if (spec.family == LossFamily::mse_hard) {
        for (bool b : labels.labels()) targets.push_back(b ? 1.0 : 0.0);
      } else {
        if (soft_targets.empty()) throw ValidationError("soft_labels", "mse_soft needs soft targets");
        targets.assign(soft_targets.begin(), soft_targets.end());
      }
      std::vector<double> probs(scores.size());
      for (std::size_t i = 0; i < scores.size(); ++i) probs[i] = sigmoid(scores[i]);
      LossOutput out = mse_loss(probs, targets);
      for (std::size_t i = 0; i < scores.size(); ++i) out.grad[i] *= probs[i] * (1.0 - probs[i]);
      return out;
    }
    case LossFamily::pl_vanilla:
      return pl_vanilla_loss(scores, labels, spec.wrong_order);
    case LossFamily::theorem:
      return theorem_loss(scores, labels, spec.zeta, spec.wrong_order);
    case LossFamily::practical:
      return practical_loss(scores, labels, spec.zeta);
    case LossFamily::ablate:
      return ablate_loss(scores, labels, spec.zeta);
    case LossFamily::inter_pair:
    case LossFamily::inter_tree:
      // The flattened layout (prefix, c1, w1, c2, w2, ...) matches the gradient
      // layout of inter_solution_loss, so no reordering is needed.
      return inter_solution_loss(tree_from_scores(scores, labels), spec.zeta,
                                 spec.family == LossFamily::inter_pair ? InterVariant::pair
                                                                       : InterVariant::tree);
  }
  throw ValidationError("family", "unhandled loss family");
}

double grad_check(const LossSpec& spec, const StepLabels& labels, std::span<const double> point,
                  double h, std::span<const double> soft_targets) {
  if (!(h >= 1e-7 && h <= 1e-4)) throw ValidationError("h", "must lie in [1e-7, 1e-4]");
  const LossOutput analytic = evaluate_loss(spec, point, labels, soft_targets);
  std::vector<double> x(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = evaluate_loss(spec, x, labels, soft_targets).value;
    x[i] = saved - h;
    const double down = evaluate_loss(spec, x, labels, soft_targets).value;
    x[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - analytic.grad[i]) / std::max(1.0, std::abs(analytic.grad[i])));
  }
  return worst;
}

}  // namespace pqm
