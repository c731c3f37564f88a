// Test-only oracles: independent routes used to freeze expected values.
// Nothing here is reachable from the library headers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "perp/mdp.hpp"
#include "perp/rng.hpp"
#include "perp/simulate.hpp"

namespace oracles {

using perp::Policy;
using perp::PolicySet;
using perp::Rng;
using perp::Simulator;
using perp::TabularMdp;

// ---- random instances ----------------------------------------------------

inline TabularMdp random_mdp(int S, int A, int H, Rng& rng, bool bernoulli_rewards = false) {
  TabularMdp m = TabularMdp::zeros(S, A, H, 0);
  for (int h = 0; h < H; ++h) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        double sum = 0.0;
        std::vector<double> row(S);
        for (int s2 = 0; s2 < S; ++s2) {
          row[s2] = 0.05 + rng.uniform();
          sum += row[s2];
        }
        std::size_t base = (static_cast<std::size_t>(s) * A + a) * S;
        for (int s2 = 0; s2 < S; ++s2) m.transitions[h][base + s2] = row[s2] / sum;
        // Renormalize exactly so validate()'s 1e-12 row check holds.
        double acc = 0.0;
        for (int s2 = 0; s2 + 1 < S; ++s2) acc += m.transitions[h][base + s2];
        m.transitions[h][base + S - 1] = 1.0 - acc;
        m.reward_means[h][m.sa(s, a)] = rng.uniform();
        m.reward_kinds[h][m.sa(s, a)] =
            bernoulli_rewards ? perp::RewardKind::bernoulli : perp::RewardKind::point;
      }
    }
  }
  return m;
}

inline Policy random_deterministic_policy(int S, int A, int H, Rng& rng) {
  Policy p;
  p.actions.assign(H, std::vector<int>(S, 0));
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s) p.actions[h][s] = static_cast<int>(rng.below(A));
  return p;
}

/// Transitions depend on the state only: P_h(s'|s,a) = P_h(s'|s,a').
inline TabularMdp random_action_independent_mdp(int S, int A, int H, Rng& rng) {
  TabularMdp m = random_mdp(S, A, H, rng);
  for (int h = 0; h < H; ++h) {
    for (int s = 0; s < S; ++s) {
      std::size_t base0 = (static_cast<std::size_t>(s) * A) * S;
      for (int a = 1; a < A; ++a) {
        std::size_t base = (static_cast<std::size_t>(s) * A + a) * S;
        for (int s2 = 0; s2 < S; ++s2) m.transitions[h][base + s2] = m.transitions[h][base0 + s2];
      }
    }
  }
  return m;
}

// ---- Monte-Carlo oracles ---------------------------------------------------

struct McEstimate {
  double mean;
  double se;
};

/// Empirical frequency of landing in `state` at step `h` (1-based h index 0..H-1).
inline McEstimate mc_state_visitation(const TabularMdp& m, const Policy& p, int h, int state,
                                      std::uint64_t episodes, std::uint64_t seed) {
  Simulator sim(m, seed);
  std::uint64_t hits = 0;
  for (std::uint64_t i = 0; i < episodes; ++i) {
    sim.run_episode(p, [&](int hh, int s, int, double, int) {
      if (hh == h && s == state) ++hits;
    });
  }
  double phat = static_cast<double>(hits) / episodes;
  return {phat, std::sqrt(std::max(phat * (1 - phat), 1e-12) / episodes)};
}

/// Defining expectation of the squared Q-disagreement, sampled along pibar
/// with the true Q of pi evaluated by backward recursion.
inline McEstimate mc_q_disagreement(const TabularMdp& m, const Policy& pi, const Policy& pibar,
                                    std::uint64_t episodes, std::uint64_t seed) {
  perp::ValueProfile q = perp::value_functions(m, pi);
  const int A = m.num_actions;
  Simulator sim(m, seed);
  double sum = 0.0, sumsq = 0.0;
  for (std::uint64_t i = 0; i < episodes; ++i) {
    double x = 0.0;
    sim.run_episode(pibar, [&](int h, int s, int, double, int) {
      double qpi = 0.0, qref = 0.0;
      for (int a = 0; a < A; ++a) {
        double qv = q.state_action[h][m.sa(s, a)];
        qpi += pi.prob(h, s, a, A) * qv;
        qref += pibar.prob(h, s, a, A) * qv;
      }
      x += (qpi - qref) * (qpi - qref);
    });
    sum += x;
    sumsq += x * x;
  }
  double mean = sum / episodes;
  double var = std::max(sumsq / episodes - mean * mean, 0.0);
  return {mean, std::sqrt(var / episodes)};
}

/// Mean return over sampled episodes.
inline McEstimate mc_value(const TabularMdp& m, const Policy& p, std::uint64_t episodes,
                           std::uint64_t seed) {
  Simulator sim(m, seed);
  double sum = 0.0, sumsq = 0.0;
  for (std::uint64_t i = 0; i < episodes; ++i) {
    double x = 0.0;
    sim.run_episode(p, [&](int, int, int, double r, int) { x += r; });
    sum += x;
    sumsq += x * x;
  }
  double mean = sum / episodes;
  double var = std::max(sumsq / episodes - mean * mean, 0.0);
  return {mean, std::sqrt(var / episodes)};
}

// ---- exhaustive enumeration of step-h visitation vertices ------------------

/// All distinct state-action visitations at step h (1-based: h_index in
/// [0,H)) achievable by deterministic policies. Plain enumeration over
/// A^(S*(h+1)) assignments; throws if that exceeds the cap.
inline std::vector<std::vector<double>> enumerate_step_vertices(const TabularMdp& m, int h_index,
                                                                std::uint64_t cap = 400000) {
  const int S = m.num_states, A = m.num_actions;
  const int steps = h_index + 1;
  double raw = std::pow(static_cast<double>(A), static_cast<double>(S) * steps);
  if (raw > static_cast<double>(cap))
    throw std::invalid_argument("enumerate_step_vertices: instance too large");
  std::uint64_t count = static_cast<std::uint64_t>(raw);

  std::vector<std::vector<double>> vertices;
  std::map<std::vector<std::int64_t>, bool> seen;
  std::vector<int> act(static_cast<std::size_t>(S) * steps, 0);
  for (std::uint64_t it = 0; it < count; ++it) {
    // Decode assignment: action for (step j, state s).
    std::uint64_t code = it;
    for (auto& a : act) {
      a = static_cast<int>(code % A);
      code /= A;
    }
    std::vector<double> w(S, 0.0);
    w[m.initial_state] = 1.0;
    std::vector<double> phi(static_cast<std::size_t>(S) * A, 0.0);
    for (int j = 0; j < steps; ++j) {
      std::fill(phi.begin(), phi.end(), 0.0);
      for (int s = 0; s < S; ++s)
        if (w[s] > 0.0) phi[m.sa(s, act[static_cast<std::size_t>(j) * S + s])] += w[s];
      if (j + 1 < steps) w = perp::apply_transition(m, m.transitions[j], phi);
    }
    std::vector<std::int64_t> key(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i)
      key[i] = static_cast<std::int64_t>(std::llround(phi[i] * 1e12));
    if (!seen.emplace(std::move(key), true).second) continue;
    vertices.push_back(phi);
  }
  return vertices;
}

// ---- brute-force min-max design over enumerated vertices -------------------

struct BruteDesign {
  double value = 0.0;        // best achieved max-direction value
  double lower_bound = 0.0;  // certified lower bound on the optimum
  std::vector<double> lambda;
};

inline void project_to_simplex(std::vector<double>& v) {
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  int rho = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    css += u[i];
    double t = (css - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0) {
      rho = static_cast<int>(i + 1);
      theta = t;
    }
  }
  if (rho == 0) theta = (css - 1.0) / static_cast<double>(u.size());
  for (auto& x : v) x = std::max(x - theta, 0.0);
}

inline double max_direction_value(const std::vector<double>& lam,
                                  const std::vector<std::vector<double>>& dirs, int* argmax = nullptr) {
  double best = 0.0;
  int bi = 0;
  for (std::size_t d = 0; d < dirs.size(); ++d) {
    double v = 0.0;
    for (std::size_t i = 0; i < lam.size(); ++i) {
      double u = dirs[d][i];
      if (u == 0.0) continue;
      if (lam[i] <= 0.0) {
        v = std::numeric_limits<double>::infinity();
        break;
      }
      v += u * u / lam[i];
    }
    if (v > best || d == 0) {
      best = v;
      bi = static_cast<int>(d);
    }
  }
  if (argmax) *argmax = bi;
  return best;
}

/// Projected subgradient over mixture weights on the vertex set, diminishing
/// steps; the certificate pairs the best achieved value with the best linear
/// lower bound (valid by convexity of the max-of-inverse objective).
inline BruteDesign brute_force_design(const std::vector<std::vector<double>>& vertices,
                                      const std::vector<std::vector<double>>& dirs,
                                      int iters = 100000) {
  const std::size_t n = vertices.size(), dim = vertices.empty() ? 0 : vertices[0].size();
  BruteDesign out;
  if (dirs.empty() || n == 0) return out;
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  std::vector<double> lam(dim, 0.0), grad(n, 0.0), best_lam;
  double best = std::numeric_limits<double>::infinity();
  double best_lb = -std::numeric_limits<double>::infinity();
  for (int t = 1; t <= iters; ++t) {
    std::fill(lam.begin(), lam.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (w[i] == 0.0) continue;
      for (std::size_t k = 0; k < dim; ++k) lam[k] += w[i] * vertices[i][k];
    }
    int dstar = 0;
    double val = max_direction_value(lam, dirs, &dstar);
    if (val < best) {
      best = val;
      best_lam = lam;
    }
    if (!std::isfinite(val)) {
      // Step instead towards uniform coverage to regain feasibility.
      for (auto& x : w) x = 0.5 * x + 0.5 / static_cast<double>(n);
      continue;
    }
    double gdotw = 0.0, gmin = std::numeric_limits<double>::infinity(), gmax = 0.0;
    const std::vector<double>& u = dirs[dstar];
    for (std::size_t i = 0; i < n; ++i) {
      double g = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        if (u[k] == 0.0 || lam[k] <= 0.0) continue;
        g -= u[k] * u[k] / (lam[k] * lam[k]) * vertices[i][k];
      }
      grad[i] = g;
      gdotw += g * w[i];
      gmin = std::min(gmin, g);
      gmax = std::max(gmax, std::abs(g));
    }
    best_lb = std::max(best_lb, val + gmin - gdotw);
    double gnorm2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) gnorm2 += grad[i] * grad[i];
    double step;
    if (t % 2 == 0 && best_lb > -std::numeric_limits<double>::infinity() && gnorm2 > 0.0) {
      // Polyak step towards the certified lower bound.
      step = std::max(val - best_lb, 1e-15 * val) / gnorm2;
    } else {
      step = 0.5 / (gmax + 1e-300) / std::sqrt(static_cast<double>(t));
    }
    for (std::size_t i = 0; i < n; ++i) w[i] -= step * grad[i];
    project_to_simplex(w);
  }
  out.value = best;
  out.lower_bound = best_lb;
  out.lambda = best_lam;
  return out;
}

}  // namespace oracles
