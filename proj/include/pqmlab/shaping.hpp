#pragma once

#include <cstdint>
#include <vector>

namespace pqm {

/// Finite-horizon deterministic MDP whose states are arranged in layers
/// 0..H. Layer 0 holds the start state, layer H a single terminal state, and
/// every action moves from layer t to layer t + 1, which mirrors the
/// prefix-extension dynamics of text generation.
struct TabularMdp {
  int n_actions = 0;
  int horizon = 0;
  std::vector<int> layer;       ///< per state
  std::vector<int> next_state;  ///< [s * n_actions + a]; -1 for the terminal state

  int n_states() const { return static_cast<int>(layer.size()); }
  bool is_terminal(int s) const { return layer[static_cast<std::size_t>(s)] == horizon; }
  std::size_t slot(int s, int a) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(n_actions) +
           static_cast<std::size_t>(a);
  }
};

struct TabularMdpSize {
  int max_states = 50;
  int n_actions = 5;
  int horizon = 6;
};

/// Reward per (state, action) slot, same layout as next_state.
using RewardTable = std::vector<double>;

/// Random layered MDP plus uniform(-1, 1) rewards. Throws ValidationError when
/// the size exceeds 50 states, 5 actions or horizon 6.
TabularMdp random_tabular_mdp(const TabularMdpSize& size, std::uint64_t seed);
RewardTable random_rewards(const TabularMdp& mdp, std::uint64_t seed);

/// Optimal state values by backward induction; 0 at the terminal state.
std::vector<double> optimal_values(const TabularMdp& mdp, const RewardTable& reward);

/// Per-state set of optimal actions, with ties resolved at a relative
/// tolerance of `tolerance`.
std::vector<std::vector<int>> optimal_action_sets(const TabularMdp& mdp, const RewardTable& reward,
                                                  double tolerance = 1e-9);

/// r'(s, a) = r(s, a) + phi(s') - phi(s).
RewardTable shaped_reward(const TabularMdp& mdp, const RewardTable& reward,
                          const std::vector<double>& potential);

/// A*(s, a) = r(s, a) + V*(s') - V*(s), shaping with the optimal value as
/// potential.
RewardTable advantage_reward(const TabularMdp& mdp, const RewardTable& reward);

bool same_optimal_actions(const TabularMdp& mdp, const RewardTable& a, const RewardTable& b);

/// Builds a random MDP from `seed` and reports whether both the
/// potential-shaped reward and the optimal-advantage reward keep the
/// per-state optimal action sets of the original reward. `potential` is
/// indexed by state and must cover `size.max_states` entries.
bool shaping_equivalence_check(const TabularMdpSize& size, const std::vector<double>& potential,
                               std::uint64_t seed);

}  // namespace pqm
