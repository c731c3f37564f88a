#pragma once

#include <cstdint>
#include <vector>

#include "perp/mdp.hpp"
#include "perp/rng.hpp"

namespace perp {

struct Step {
  int state;
  int action;
  double reward;
  int next_state;
};

using Episode = std::vector<Step>;  // exactly H steps

/// Seeded episode sampler. Transition rows are precomputed as cumulative
/// sums so a step costs one uniform draw plus a short scan. The episode
/// counter is exact: identical seeds give identical trajectory sequences,
/// and point-mass rewards consume no randomness.
class Simulator {
 public:
  Simulator(const TabularMdp& mdp, std::uint64_t seed)
      : mdp_(&mdp), rng_(Rng::split(seed, 0)) {
    const int S = mdp.num_states, A = mdp.num_actions;
    cdf_.resize(mdp.horizon);
    for (int h = 0; h < mdp.horizon; ++h) {
      cdf_[h].resize(static_cast<std::size_t>(S) * A * S);
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
          const double* row = mdp.transition_row(h, s, a);
          double acc = 0.0;
          std::size_t base = (static_cast<std::size_t>(s) * A + a) * S;
          for (int s2 = 0; s2 < S; ++s2) {
            acc += row[s2];
            cdf_[h][base + s2] = acc;
          }
          cdf_[h][base + S - 1] = 1.0;  // guard against rounding in the last bin
        }
      }
    }
  }

  const TabularMdp& mdp() const { return *mdp_; }
  std::uint64_t episodes_sampled() const { return episodes_; }

  /// Runs one episode of `policy`, invoking on_step(h, s, a, r, s_next) for
  /// h = 1..H (0-based h here). Hot path: no allocation.
  template <class F>
  void run_episode(const Policy& policy, F&& on_step) {
    const TabularMdp& m = *mdp_;
    const int A = m.num_actions, S = m.num_states;
    int s = m.initial_state;
    for (int h = 0; h < m.horizon; ++h) {
      int a;
      if (policy.deterministic()) {
        a = policy.actions[h][s];
      } else {
        double u = rng_.uniform(), acc = 0.0;
        a = A - 1;
        const double* pr = policy.probs[h].data() + static_cast<std::size_t>(s) * A;
        for (int c = 0; c < A; ++c) {
          acc += pr[c];
          if (u < acc) { a = c; break; }
        }
      }
      double mean = m.reward(h, s, a);
      double r;
      if (m.reward_kinds[h][m.sa(s, a)] == RewardKind::bernoulli) {
        r = rng_.uniform() < mean ? 1.0 : 0.0;
      } else {
        r = mean;
      }
      const double* cdf = cdf_[h].data() + (static_cast<std::size_t>(s) * A + a) * S;
      double u = rng_.uniform();
      int s2 = S - 1;
      for (int c = 0; c < S; ++c) {
        if (u < cdf[c]) { s2 = c; break; }
      }
      on_step(h, s, a, r, s2);
      s = s2;
    }
    ++episodes_;
  }

  Episode simulate_episode(const Policy& policy) {
    Episode ep;
    ep.reserve(mdp_->horizon);
    run_episode(policy, [&](int, int s, int a, double r, int s2) {
      ep.push_back(Step{s, a, r, s2});
    });
    return ep;
  }

 private:
  const TabularMdp* mdp_;
  Rng rng_;
  std::vector<std::vector<double>> cdf_;  // [H][(S*A)*S]
  std::uint64_t episodes_ = 0;
};

}  // namespace perp
