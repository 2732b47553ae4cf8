#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "pqmlab/error.hpp"
#include "pqmlab/losses.hpp"
#include "pqmlab/rng.hpp"
#include "pqmlab/synth_mdp.hpp"

using namespace pqm;

namespace {

// Literal evaluations of the objectives with plain exponentials, written
// separately from the library's log-sum-exp implementation. Inputs are kept
// small enough that nothing overflows. Indices are 1-based as in the
// formulas; Q_0 is the constant 0.

double q(const std::vector<double>& s, int i) { return i == 0 ? 0.0 : s[static_cast<std::size_t>(i - 1)]; }

double naive_correct_chain(const std::vector<double>& s, const std::vector<int>& C,
                           const std::vector<int>& denom_wrong, double zeta) {
  double total = 0.0;
  std::vector<int> chain = {0};
  chain.insert(chain.end(), C.begin(), C.end());
  for (std::size_t t = 0; t < chain.size(); ++t) {
    double denom = 0.0;
    for (std::size_t k = 0; k <= t; ++k) denom += std::exp(q(s, chain[k]));
    for (int w : denom_wrong) denom += std::exp(q(s, w) + zeta);
    total += std::log(std::exp(q(s, chain[t])) / denom);
  }
  return total;
}

double naive_practical(const std::vector<double>& s, const StepLabels& l, double zeta) {
  const auto split = split_labels(l);
  return -naive_correct_chain(s, split.correct, split.wrong, zeta) /
         static_cast<double>(std::max<std::size_t>(split.correct.size(), 1));
}

double naive_ablate(const std::vector<double>& s, const StepLabels& l, double zeta) {
  const auto split = split_labels(l);
  std::vector<int> w1;
  if (!split.wrong.empty()) w1.push_back(split.wrong.front());
  return -naive_correct_chain(s, split.correct, w1, zeta) /
         static_cast<double>(std::max<std::size_t>(split.correct.size(), 1));
}

double naive_theorem(const std::vector<double>& s, const StepLabels& l, double zeta, bool reversed) {
  const auto split = split_labels(l);
  std::vector<int> W = split.wrong;
  if (reversed) std::reverse(W.begin(), W.end());
  double first = 0.0;
  for (std::size_t t = 1; t < W.size(); ++t) {
    double denom = 0.0;
    for (std::size_t k = 0; k <= t; ++k) denom += std::exp(q(s, W[k]));
    first += std::log(std::exp(q(s, W[t])) / denom);
  }
  return -(first + naive_correct_chain(s, split.correct, split.wrong, zeta)) / static_cast<double>(s.size());
}

StepLabels random_labels(Rng& rng, int h) {
  std::vector<bool> l(static_cast<std::size_t>(h));
  for (auto&& b : l) b = rng.bernoulli(0.5);
  return StepLabels(l);
}

std::vector<double> random_scores(Rng& rng, int h, double scale) {
  std::vector<double> s(static_cast<std::size_t>(h));
  for (auto& v : s) v = scale * rng.normal();
  return s;
}

}  // namespace

TEST_CASE("bce examples") {
  const double p2[] = {0.5, 0.5};
  CHECK(std::abs(bce_loss(p2, StepLabels({true, false})).value - std::log(2.0)) < 1e-12);
  const double eps = 1e-9;
  const double near[] = {1 - eps, eps};
  CHECK(bce_loss(near, StepLabels({true, false})).value < 1e-8);
  const double p1[] = {0.9};
  CHECK(bce_loss(p1, StepLabels({true})).value == doctest::Approx(-std::log(0.9)).epsilon(1e-14));
  CHECK(bce_loss(p1, StepLabels({true})).value == doctest::Approx(0.105361).epsilon(1e-6));
}

TEST_CASE("bce rejects probabilities on the boundary") {
  const double zero[] = {0.0, 0.5};
  const double one[] = {0.5, 1.0};
  CHECK_THROWS_AS(bce_loss(zero, StepLabels({true, false})), std::domain_error);
  CHECK_THROWS_AS(bce_loss(one, StepLabels({true, false})), std::domain_error);
}

TEST_CASE("bce gradient in raw-score space at p = 0.5") {
  // d/ds of -(1/H)[c log sigma(s) + (1-c) log(1 - sigma(s))] is (sigma(s) - c)/H.
  const double probs[] = {0.5, 0.5};
  const auto out = bce_loss(probs, StepLabels({true, false}));
  CHECK(out.grad[0] == doctest::Approx(-0.25));
  CHECK(out.grad[1] == doctest::Approx(0.25));
  const double scores[] = {0.0, 0.0};
  const auto from_scores = bce_loss_from_scores(scores, StepLabels({true, false}));
  CHECK(from_scores.value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(from_scores.grad == out.grad);
}

TEST_CASE("bce from scores agrees with bce on probabilities") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(8));
    const auto s = random_scores(rng, h, 3.0);
    const auto l = random_labels(rng, h);
    std::vector<double> p;
    for (double x : s) p.push_back(sigmoid(x));
    const auto a = bce_loss(p, l), b = bce_loss_from_scores(s, l);
    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-12));
    for (int i = 0; i < h; ++i) CHECK(a.grad[i] == doctest::Approx(b.grad[i]).epsilon(1e-12));
  }
}

TEST_CASE("mse examples") {
  const double a[] = {0.3, 0.7};
  CHECK(mse_loss(a, a).value == 0.0);
  const double s[] = {0.0, 1.0}, t[] = {1.0, 0.0};
  CHECK(mse_loss(s, t).value == 1.0);
  const double h[] = {0.5, 0.5};
  CHECK(mse_loss(h, t).value == doctest::Approx(0.25));
  const double three[] = {0.1, 0.2, 0.3};
  CHECK_THROWS_AS(mse_loss(three, t), ValidationError);
}

TEST_CASE("mse_hard is stationary at its minimum") {
  LossSpec spec;
  spec.family = LossFamily::mse_hard;
  // Scores far out saturate the sigmoid onto the 0/1 targets.
  const double point[] = {40.0, -40.0, 40.0};
  const StepLabels labels({true, false, true});
  const auto out = evaluate_loss(spec, point, labels);
  for (double g : out.grad) CHECK(std::abs(g) < 1e-15);
  CHECK(grad_check(spec, labels, point, 1e-5) < 1e-9);
}

TEST_CASE("practical loss hand values") {
  const double zero[] = {0.0};
  CHECK(practical_loss(zero, StepLabels({true}), 2.0).value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // C = [1], W = [2], zeta = 2, scores (1, -1):
  //   t = 0: -log(1 / (1 + e^{-1+2}))            = log(1 + e)
  //   t = 1: -log(e / (1 + e + e^{-1+2}))        = log(1 + 2e) - 1
  const double s[] = {1.0, -1.0};
  const double e = std::exp(1.0);
  const double expected = std::log(1.0 + e) + std::log(1.0 + 2.0 * e) - 1.0;
  CHECK(std::abs(practical_loss(s, StepLabels({true, false}), 2.0).value - expected) < 1e-12);
  CHECK(std::abs(expected - 2.1752565) < 1e-7);
  CHECK(std::abs(practical_loss(zero, StepLabels({false}), 0.0).value - std::log(2.0)) < 1e-15);
}

TEST_CASE("theorem loss hand value") {
  const double z[] = {0.0, 0.0, 0.0};
  const StepLabels l({true, false, false});
  const double expected = std::log(24.0) / 3.0;
  CHECK(std::abs(theorem_loss(z, l, 0.0).value - expected) < 1e-12);
  CHECK(std::abs(expected - 1.059351) < 1e-6);
  CHECK(std::abs(pl_vanilla_loss(z, l).value - expected) < 1e-12);
}

TEST_CASE("ablate loss hand values") {
  // With W = [2, 3] only Q_{w_1} enters the denominators:
  //   t = 0: -log(1 / (1 + 1)) = log 2,  t = 1: -log(1 / (1 + 1 + 1)) = log 3.
  const double z[] = {0.0, 0.0, 0.0};
  CHECK(std::abs(ablate_loss(z, StepLabels({true, false, false}), 0.0).value - std::log(6.0)) < 1e-12);
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_scores(rng, 2, 2.0);
    const double zeta = rng.uniform(0.0, 5.0);
    CHECK(ablate_loss(s, StepLabels({true, false}), zeta).value ==
          doctest::Approx(practical_loss(s, StepLabels({true, false}), zeta).value).epsilon(1e-14));
  }
  const double s4[] = {0.3, -0.2, 1.1, 0.4};
  const auto out = ablate_loss(s4, StepLabels({true, false, false, false}), 1.5);
  CHECK(out.grad[2] == 0.0);
  CHECK(out.grad[3] == 0.0);
}

TEST_CASE("listwise losses match the literal formulas") {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(8));
    const auto s = random_scores(rng, h, 2.0);
    const auto l = random_labels(rng, h);
    const double zeta = rng.uniform(0.0, 6.0);
    CHECK(practical_loss(s, l, zeta).value == doctest::Approx(naive_practical(s, l, zeta)).epsilon(1e-12));
    CHECK(ablate_loss(s, l, zeta).value == doctest::Approx(naive_ablate(s, l, zeta)).epsilon(1e-12));
    CHECK(theorem_loss(s, l, zeta).value == doctest::Approx(naive_theorem(s, l, zeta, false)).epsilon(1e-12));
    CHECK(theorem_loss(s, l, zeta, WrongOrder::reversed).value ==
          doctest::Approx(naive_theorem(s, l, zeta, true)).epsilon(1e-12));
  }
}

TEST_CASE("theorem and practical coincide up to normalization when |W| <= 1") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(7));
    std::vector<bool> l(static_cast<std::size_t>(h), true);
    if (rng.bernoulli(0.7)) l[rng.below(static_cast<std::uint64_t>(h))] = false;
    const StepLabels labels(l);
    const auto s = random_scores(rng, h, 2.0);
    const double zeta = rng.uniform(0.0, 4.0);
    const double c = static_cast<double>(std::max<std::size_t>(split_labels(labels).correct.size(), 1));
    CHECK(theorem_loss(s, labels, zeta).value * h ==
          doctest::Approx(practical_loss(s, labels, zeta).value * c).epsilon(1e-12));
  }
}

TEST_CASE("pl_vanilla is theorem with zero margin and ignores zeta") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(8));
    const auto s = random_scores(rng, h, 2.0);
    const auto l = random_labels(rng, h);
    const auto a = pl_vanilla_loss(s, l), b = theorem_loss(s, l, 0.0);
    CHECK(a.value == b.value);
    CHECK(a.grad == b.grad);
    LossSpec spec;
    spec.family = LossFamily::pl_vanilla;
    spec.zeta = 7.0;
    CHECK(evaluate_loss(spec, s, l).value == a.value);
  }
}

TEST_CASE("wrong_order only changes the wrong-step sum") {
  const double s[] = {0.5, -1.0, 0.2, -0.4};
  const StepLabels l({true, false, false, false});
  const auto a = theorem_loss(s, l, 1.0, WrongOrder::as_written);
  const auto b = theorem_loss(s, l, 1.0, WrongOrder::reversed);
  CHECK(a.value != b.value);
  // A single wrong step makes the orders indistinguishable.
  const StepLabels one({true, false, true, true});
  CHECK(theorem_loss(s, one, 1.0, WrongOrder::as_written).value ==
        theorem_loss(s, one, 1.0, WrongOrder::reversed).value);
}

TEST_CASE("inter-solution loss") {
  // Pair at t = 1, zero scores, zero margin: the chain is Q_0 < Q_1^c with
  // Q_1^w in both denominators, giving log 2 + log 3.
  StepTree pair;
  pair.pairs = {{0.0, 0.0}};
  CHECK(std::abs(inter_solution_loss(pair, 0.0, InterVariant::pair).value - std::log(6.0)) < 1e-12);
  CHECK(inter_solution_loss(pair, 0.0, InterVariant::tree).value ==
        inter_solution_loss(pair, 0.0, InterVariant::pair).value);

  StepTree two;
  two.pairs = {{0.0, 0.0}, {0.0, 0.0}};
  CHECK_THROWS_AS(inter_solution_loss(two, 0.0, InterVariant::pair), ValidationError);
  CHECK_THROWS_AS(inter_solution_loss(StepTree{}, 0.0, InterVariant::tree), ValidationError);

  // Matches the practical loss on the flattened layout.
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    StepTree t;
    const int prefix = static_cast<int>(rng.below(4));
    const int pairs = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < prefix; ++i) t.prefix.push_back(rng.normal());
    for (int i = 0; i < pairs; ++i) t.pairs.emplace_back(rng.normal(), rng.normal());
    const double zeta = rng.uniform(0, 4);
    std::vector<double> flat = t.prefix;
    for (auto [c, w] : t.pairs) {
      flat.push_back(c);
      flat.push_back(w);
    }
    const auto labels = tree_labels(prefix, pairs);
    const auto a = inter_solution_loss(t, zeta, InterVariant::tree);
    CHECK(a.value == doctest::Approx(naive_practical(flat, labels, zeta)).epsilon(1e-12));
    const auto back = tree_from_scores(flat, labels);
    CHECK(back.prefix == t.prefix);
    CHECK(back.pairs == t.pairs);
  }
  CHECK_THROWS_AS(tree_from_scores(std::vector<double>{0, 0, 0}, StepLabels({false, true, false})),
                  ValidationError);
}

TEST_CASE("exact oracle scores beat the swapped assignment on sibling trees") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    PolicyParams p;
    p.beta = rng.uniform(0.01, 0.3);
    p.alpha = rng.uniform(0.7, 0.99);
    const int prefix = static_cast<int>(rng.below(3));
    const int pairs = 1 + static_cast<int>(rng.below(3));
    p.horizon = prefix + pairs;
    const auto table = exact_q_table(p);
    StepTree oracle, swapped;
    // The last step is terminal, so its logit is infinite. Scaled Q values
    // keep the same order and stay finite.
    for (int t = 1; t <= prefix; ++t) oracle.prefix.push_back(5.0 * table.at(t, true));
    for (int t = prefix + 1; t <= p.horizon; ++t) {
      oracle.pairs.emplace_back(5.0 * table.at(t, true), 5.0 * table.at(t, false));
    }
    swapped = oracle;
    for (auto& [c, w] : swapped.pairs) std::swap(c, w);
    for (double zeta : {0.0, 2.0}) {
      CHECK(inter_solution_loss(oracle, zeta, InterVariant::tree).value <
            inter_solution_loss(swapped, zeta, InterVariant::tree).value);
    }
  }
}

TEST_CASE("analytic gradients match finite differences for every family") {
  Rng rng(8);
  for (LossFamily family : all_loss_families()) {
    LossSpec spec;
    spec.family = family;
    spec.zeta = 2.0;
    for (int trial = 0; trial < 30; ++trial) {
      StepLabels labels;
      if (family == LossFamily::inter_pair) {
        labels = tree_labels(static_cast<int>(rng.below(4)), 1);
      } else if (family == LossFamily::inter_tree) {
        labels = tree_labels(static_cast<int>(rng.below(3)), 1 + static_cast<int>(rng.below(3)));
      } else {
        labels = random_labels(rng, 8);
      }
      const auto point = random_scores(rng, labels.size(), 2.0);
      std::vector<double> soft(point.size());
      for (auto& v : soft) v = rng.uniform();
      CHECK(grad_check(spec, labels, point, 1e-5, soft) < 1e-6);
    }
  }
  CHECK_THROWS_AS(grad_check(LossSpec{}, StepLabels({true}), std::vector<double>{0.0}, 1e-3), ValidationError);
}

TEST_CASE("translation sensitivity against the pinned anchor") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 2 + static_cast<int>(rng.below(6));
    const auto s = random_scores(rng, h, 1.0);
    const auto l = random_labels(rng, h);
    for (auto loss : {&practical_loss, &ablate_loss}) {
      const auto base = loss(s, l, 2.0);
      std::vector<double> up = s, down = s;
      const double eps = 1e-5;
      for (auto& v : up) v += eps;
      for (auto& v : down) v -= eps;
      const double shift_grad = (loss(up, l, 2.0).value - loss(down, l, 2.0).value) / (2 * eps);
      double sum = 0.0;
      for (double g : base.grad) sum += g;
      CHECK(shift_grad == doctest::Approx(sum).epsilon(1e-6));
      std::vector<double> shifted = s;
      for (auto& v : shifted) v += 1.0;
      CHECK(loss(shifted, l, 2.0).value != base.value);
    }
  }
}

TEST_CASE("ordering incentives of the practical loss") {
  Rng rng(10);
  for (int trial = 0; trial < 300; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(8));
    const auto s = random_scores(rng, h, 2.0);
    const auto l = random_labels(rng, h);
    const auto split = split_labels(l);
    const auto out = practical_loss(s, l, 2.0);
    if (!split.correct.empty()) CHECK(out.grad[split.correct.back() - 1] < 0.0);
    for (int w : split.wrong) CHECK(out.grad[w - 1] > 0.0);
  }
}

TEST_CASE("margin effect on wrong-step gradients") {
  const double z[] = {0.0, 0.0, 0.0};
  const StepLabels l({true, false, true});
  double prev = -1.0;
  for (double zeta = 0.0; zeta <= 8.0; zeta += 0.5) {
    const double g = practical_loss(z, l, zeta).grad[1];
    CHECK(g > prev);
    prev = g;
  }
}

TEST_CASE("listwise losses are covariant under order-preserving interleavings") {
  // The correct chain and the wrong list are read in index order, so any
  // permutation of positions that keeps the relative order within C and
  // within W permutes the gradient the same way.
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = 2 + static_cast<int>(rng.below(7));
    const auto s = random_scores(rng, h, 2.0);
    const auto l = random_labels(rng, h);
    const auto split = split_labels(l);
    std::vector<bool> slots(static_cast<std::size_t>(h), false);
    for (std::size_t i = 0; i < split.correct.size(); ++i) slots[i] = true;
    const auto perm = rng.permutation(static_cast<std::size_t>(h));
    std::vector<bool> shuffled(static_cast<std::size_t>(h));
    for (int i = 0; i < h; ++i) shuffled[perm[static_cast<std::size_t>(i)]] = slots[static_cast<std::size_t>(i)];
    // Place C (in order) on the true slots and W (in order) on the false ones.
    std::vector<int> where(static_cast<std::size_t>(h));
    std::size_t ci = 0, wi = 0;
    for (int pos = 0; pos < h; ++pos) {
      const int src = shuffled[static_cast<std::size_t>(pos)] ? split.correct[ci++] : split.wrong[wi++];
      where[static_cast<std::size_t>(src - 1)] = pos;
    }
    std::vector<double> s2(static_cast<std::size_t>(h));
    std::vector<bool> l2(static_cast<std::size_t>(h));
    for (int i = 0; i < h; ++i) {
      s2[where[i]] = s[i];
      l2[where[i]] = l.labels()[i];
    }
    const StepLabels labels2(l2);
    for (auto [family, zeta] : {std::pair{LossFamily::practical, 2.0}, {LossFamily::theorem, 1.0},
                                {LossFamily::ablate, 3.0}, {LossFamily::pl_vanilla, 0.0}}) {
      LossSpec spec;
      spec.family = family;
      spec.zeta = zeta;
      const auto a = evaluate_loss(spec, s, l);
      const auto b = evaluate_loss(spec, s2, labels2);
      CHECK(a.value == doctest::Approx(b.value).epsilon(1e-13));
      for (int i = 0; i < h; ++i) CHECK(a.grad[i] == doctest::Approx(b.grad[where[i]]).epsilon(1e-12));
    }
  }
}

TEST_CASE("no overflow for scores in [-50, 50]") {
  Rng rng(12);
  for (int trial = 0; trial < 2000; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(8));
    std::vector<double> s(static_cast<std::size_t>(h));
    for (auto& v : s) v = rng.uniform(-50.0, 50.0);
    const auto l = random_labels(rng, h);
    std::vector<double> soft(s.size(), 0.5);
    for (LossFamily family : all_loss_families()) {
      if (family == LossFamily::inter_pair || family == LossFamily::inter_tree) continue;
      LossSpec spec;
      spec.family = family;
      spec.zeta = 8.0;
      const auto out = evaluate_loss(spec, s, l, soft);
      REQUIRE(std::isfinite(out.value));
      CHECK(out.value >= 0.0);
      for (double g : out.grad) REQUIRE(std::isfinite(g));
    }
    StepTree t;
    for (int i = 0; i < h; ++i) t.pairs.emplace_back(rng.uniform(-50, 50), rng.uniform(-50, 50));
    const auto out = inter_solution_loss(t, 8.0, InterVariant::tree);
    REQUIRE(std::isfinite(out.value));
    for (double g : out.grad) REQUIRE(std::isfinite(g));
  }
}

TEST_CASE("family names and validation") {
  for (LossFamily f : all_loss_families()) CHECK(parse_loss_family(to_string(f)) == f);
  try {
    parse_loss_family("hinge");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (LossFamily f : all_loss_families()) CHECK(msg.find(std::string(to_string(f))) != std::string::npos);
  }
  CHECK(parse_wrong_order("reversed") == WrongOrder::reversed);
  CHECK_THROWS_AS(parse_wrong_order("sideways"), ConfigError);
  LossSpec bad;
  bad.zeta = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  const double nan[] = {std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(practical_loss(nan, StepLabels({true}), 1.0), ValidationError);
  const double two[] = {0.0, 0.0};
  CHECK_THROWS_AS(practical_loss(two, StepLabels({true}), 1.0), ValidationError);
  LossSpec soft;
  soft.family = LossFamily::mse_soft;
  CHECK_THROWS_AS(evaluate_loss(soft, two, StepLabels({true, false})), ValidationError);
}
