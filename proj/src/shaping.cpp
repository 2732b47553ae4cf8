#include "pqmlab/shaping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pqmlab/error.hpp"
#include "pqmlab/rng.hpp"

namespace pqm {

TabularMdp random_tabular_mdp(const TabularMdpSize& size, std::uint64_t seed) {
  if (size.max_states < size.horizon + 1 || size.max_states > 50) {
    throw ValidationError("max_states", "must lie in [horizon + 1, 50]");
  }
  if (size.n_actions < 1 || size.n_actions > 5) {
    throw ValidationError("n_actions", "must lie in [1, 5]");
  }
  if (size.horizon < 1 || size.horizon > 6) throw ValidationError("horizon", "must lie in [1, 6]");

  Rng rng(seed);
  TabularMdp mdp;
  mdp.n_actions = size.n_actions;
  mdp.horizon = size.horizon;

  // One start state, one terminal state, the remaining budget spread over the
  // interior layers with at least one state each.
  std::vector<int> layer_size(static_cast<std::size_t>(size.horizon) + 1, 1);
  const int interior = size.horizon - 1;
  if (interior > 0) {
    int budget = size.max_states - 2 - interior;
    for (int l = 1; l <= interior && budget > 0; ++l) {
      const int extra = static_cast<int>(rng.below(static_cast<std::uint64_t>(
          std::min(budget, size.n_actions * layer_size[static_cast<std::size_t>(l - 1)]) + 1)));
      layer_size[static_cast<std::size_t>(l)] += extra;
      budget -= extra;
    }
  }
  std::vector<int> first(layer_size.size() + 1, 0);
  for (std::size_t l = 0; l < layer_size.size(); ++l) {
    first[l + 1] = first[l] + layer_size[l];
    for (int i = 0; i < layer_size[l]; ++i) mdp.layer.push_back(static_cast<int>(l));
  }
  mdp.next_state.assign(static_cast<std::size_t>(mdp.n_states()) * size.n_actions, -1);
  for (int s = 0; s < mdp.n_states(); ++s) {
    const int l = mdp.layer[static_cast<std::size_t>(s)];
    if (l == mdp.horizon) continue;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const auto width = static_cast<std::uint64_t>(layer_size[static_cast<std::size_t>(l + 1)]);
      mdp.next_state[mdp.slot(s, a)] = first[static_cast<std::size_t>(l + 1)] +
                                       static_cast<int>(rng.below(width));
    }
  }
  return mdp;
}

RewardTable random_rewards(const TabularMdp& mdp, std::uint64_t seed) {
  Rng rng(seed);
  RewardTable r(mdp.next_state.size(), 0.0);
  for (int s = 0; s < mdp.n_states(); ++s) {
    if (mdp.is_terminal(s)) continue;
    for (int a = 0; a < mdp.n_actions; ++a) r[mdp.slot(s, a)] = rng.uniform(-1.0, 1.0);
  }
  return r;
}

std::vector<double> optimal_values(const TabularMdp& mdp, const RewardTable& reward) {
  std::vector<double> value(static_cast<std::size_t>(mdp.n_states()), 0.0);
  for (int l = mdp.horizon - 1; l >= 0; --l) {
    for (int s = 0; s < mdp.n_states(); ++s) {
      if (mdp.layer[static_cast<std::size_t>(s)] != l) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < mdp.n_actions; ++a) {
        const std::size_t k = mdp.slot(s, a);
        best = std::max(best, reward[k] + value[static_cast<std::size_t>(mdp.next_state[k])]);
      }
      value[static_cast<std::size_t>(s)] = best;
    }
  }
  return value;
}

std::vector<std::vector<int>> optimal_action_sets(const TabularMdp& mdp, const RewardTable& reward,
                                                  double tolerance) {
  const std::vector<double> value = optimal_values(mdp, reward);
  std::vector<std::vector<int>> sets(static_cast<std::size_t>(mdp.n_states()));
  for (int s = 0; s < mdp.n_states(); ++s) {
    if (mdp.is_terminal(s)) continue;
    const double best = value[static_cast<std::size_t>(s)];
    for (int a = 0; a < mdp.n_actions; ++a) {
      const std::size_t k = mdp.slot(s, a);
      const double q = reward[k] + value[static_cast<std::size_t>(mdp.next_state[k])];
      if (q >= best - tolerance * (1.0 + std::abs(best))) {
        sets[static_cast<std::size_t>(s)].push_back(a);
      }
    }
  }
  return sets;
}

RewardTable shaped_reward(const TabularMdp& mdp, const RewardTable& reward,
                          const std::vector<double>& potential) {
  if (potential.size() != static_cast<std::size_t>(mdp.n_states())) {
    throw ValidationError("potential", "one value per state required");
  }
  RewardTable out = reward;
  for (int s = 0; s < mdp.n_states(); ++s) {
    if (mdp.is_terminal(s)) continue;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const std::size_t k = mdp.slot(s, a);
      out[k] += potential[static_cast<std::size_t>(mdp.next_state[k])] -
                potential[static_cast<std::size_t>(s)];
    }
  }
  return out;
}

RewardTable advantage_reward(const TabularMdp& mdp, const RewardTable& reward) {
  return shaped_reward(mdp, reward, optimal_values(mdp, reward));
}

bool same_optimal_actions(const TabularMdp& mdp, const RewardTable& a, const RewardTable& b) {
  return optimal_action_sets(mdp, a) == optimal_action_sets(mdp, b);
}

bool shaping_equivalence_check(const TabularMdpSize& size, const std::vector<double>& potential,
                               std::uint64_t seed) {
  const TabularMdp mdp = random_tabular_mdp(size, derive_seed(seed, 1));
  const RewardTable r = random_rewards(mdp, derive_seed(seed, 2));
  if (potential.size() < static_cast<std::size_t>(mdp.n_states())) {
    throw ValidationError("potential", "needs at least max_states entries");
  }
  const std::vector<double> phi(potential.begin(), potential.begin() + mdp.n_states());
  return same_optimal_actions(mdp, r, shaped_reward(mdp, r, phi)) &&
         same_optimal_actions(mdp, r, advantage_reward(mdp, r));
}

}  // namespace pqm
