#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pqmlab/trajectory.hpp"

namespace pqm {

enum class LossFamily {
  bce,
  mse_hard,
  mse_soft,
  pl_vanilla,
  theorem,
  practical,
  ablate,
  inter_pair,
  inter_tree,
};

/// Traversal of the wrong-step list in the theorem loss's first sum.
/// `as_written` scores w_t against w_1..w_t; `reversed` does the same on the
/// reversed list, which encodes Q_{w_1} > Q_{w_2} > ... instead.
enum class WrongOrder { as_written, reversed };

std::string_view to_string(LossFamily family);
std::string_view to_string(WrongOrder order);
/// Throws ConfigError listing the valid names.
LossFamily parse_loss_family(std::string_view name);
WrongOrder parse_wrong_order(std::string_view name);
const std::vector<LossFamily>& all_loss_families();

struct LossSpec {
  LossFamily family = LossFamily::practical;
  double zeta = 2.0;
  WrongOrder wrong_order = WrongOrder::as_written;

  void validate() const;
};

struct LossOutput {
  double value = 0.0;
  std::vector<double> grad;  ///< one entry per step score
};

// Every score argument below is a raw Q estimate on the real line unless the
// name says otherwise. The anchor Q_0 is the constant 0 and never receives a
// gradient.

/// Mean binary cross-entropy over steps. `probs` must lie strictly inside
/// (0, 1); throws std::domain_error otherwise. The gradient is with respect
/// to the raw scores that produced `probs` through the sigmoid.
LossOutput bce_loss(std::span<const double> probs, const StepLabels& labels);

/// Same objective evaluated from raw scores with log-sigmoid, defined for
/// every finite score.
LossOutput bce_loss_from_scores(std::span<const double> scores, const StepLabels& labels);

/// Mean squared error; gradient with respect to `scores_sigma`.
LossOutput mse_loss(std::span<const double> scores_sigma, std::span<const double> targets);

/// Margin-augmented listwise loss over the correct chain, with every wrong
/// step in each denominator, normalized by max(|C|, 1).
LossOutput practical_loss(std::span<const double> scores, const StepLabels& labels, double zeta);

/// Full ranking loss: Plackett-Luce terms over the wrong list plus the
/// margin-augmented correct chain, normalized by 1/H.
LossOutput theorem_loss(std::span<const double> scores, const StepLabels& labels, double zeta,
                        WrongOrder wrong_order = WrongOrder::as_written);

/// As practical_loss but only the first wrong step enters the denominators.
LossOutput ablate_loss(std::span<const double> scores, const StepLabels& labels, double zeta);

/// theorem_loss with zero margin.
LossOutput pl_vanilla_loss(std::span<const double> scores, const StepLabels& labels,
                           WrongOrder wrong_order = WrongOrder::as_written);

/// Sibling steps sharing a correct prefix. Each pair is (correct, wrong).
struct StepTree {
  std::vector<double> prefix;
  std::vector<std::pair<double, double>> pairs;
};

enum class InterVariant { pair, tree };

/// Inter-solution ranking loss. The correct chain is prefix followed by the
/// correct member of each pair; all wrong members are margin-shifted into
/// every denominator. The pair variant requires exactly one pair.
/// Gradient layout: prefix, then c_1, w_1, c_2, w_2, ...
LossOutput inter_solution_loss(const StepTree& tree, double zeta, InterVariant variant);

/// Labels describing a flattened tree: `prefix` trues then (true, false)
/// per pair.
StepLabels tree_labels(int prefix, int n_pairs);
/// Inverse of the flattening; throws ValidationError when the label pattern
/// is not tree-shaped.
StepTree tree_from_scores(std::span<const double> scores, const StepLabels& labels);

/// Family dispatch on raw scores, gradient with respect to the raw scores.
/// bce and mse_* apply the sigmoid internally; mse_soft reads `soft_targets`;
/// inter_* expect tree-shaped labels.
LossOutput evaluate_loss(const LossSpec& spec, std::span<const double> scores,
                         const StepLabels& labels, std::span<const double> soft_targets = {});

/// Central finite differences against the analytic gradient of
/// evaluate_loss. Returns max over coordinates of |fd - analytic| /
/// max(1, |analytic|).
double grad_check(const LossSpec& spec, const StepLabels& labels, std::span<const double> point,
                  double h, std::span<const double> soft_targets = {});

}  // namespace pqm
