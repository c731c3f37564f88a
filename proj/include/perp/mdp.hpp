#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace perp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class RewardKind : std::uint8_t { point, bernoulli };

/// Episodic, finite-horizon, time-inhomogeneous tabular MDP. Every episode
/// starts in `initial_state`. Transition tables are dense row-major:
/// transitions[h-1][(s*A + a)*S + s'] = P_h(s' | s, a). Mean rewards live in
/// [0,1]; each (h,s,a) carries a distribution tag (point mass or Bernoulli).
struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  int initial_state = 0;
  std::vector<std::vector<double>> transitions;   // [H][(S*A)*S]
  std::vector<std::vector<double>> reward_means;  // [H][S*A]
  std::vector<std::vector<RewardKind>> reward_kinds;  // [H][S*A]

  int sa(int s, int a) const { return s * num_actions + a; }

  double transition(int h, int s, int a, int s2) const {
    return transitions[h][(static_cast<std::size_t>(s) * num_actions + a) * num_states + s2];
  }
  const double* transition_row(int h, int s, int a) const {
    return transitions[h].data() + (static_cast<std::size_t>(s) * num_actions + a) * num_states;
  }
  double reward(int h, int s, int a) const { return reward_means[h][sa(s, a)]; }

  static TabularMdp zeros(int S, int A, int H, int s1 = 0) {
    TabularMdp m;
    m.num_states = S;
    m.num_actions = A;
    m.horizon = H;
    m.initial_state = s1;
    m.transitions.assign(H, std::vector<double>(static_cast<std::size_t>(S) * A * S, 0.0));
    m.reward_means.assign(H, std::vector<double>(static_cast<std::size_t>(S) * A, 0.0));
    m.reward_kinds.assign(H, std::vector<RewardKind>(static_cast<std::size_t>(S) * A, RewardKind::point));
    return m;
  }
};

/// Checks row-stochasticity (1e-12) and reward ranges; throws on violation.
inline void validate(const TabularMdp& m) {
  if (m.num_states <= 0 || m.num_actions <= 0 || m.horizon <= 0)
    throw std::invalid_argument("mdp: dimensions must be positive");
  if (m.initial_state < 0 || m.initial_state >= m.num_states)
    throw std::invalid_argument("mdp: initial state out of range");
  if (static_cast<int>(m.transitions.size()) != m.horizon ||
      static_cast<int>(m.reward_means.size()) != m.horizon ||
      static_cast<int>(m.reward_kinds.size()) != m.horizon)
    throw std::invalid_argument("mdp: table count does not match horizon");
  for (int h = 0; h < m.horizon; ++h) {
    for (int s = 0; s < m.num_states; ++s) {
      for (int a = 0; a < m.num_actions; ++a) {
        double sum = 0.0;
        const double* row = m.transition_row(h, s, a);
        for (int s2 = 0; s2 < m.num_states; ++s2) {
          if (row[s2] < -1e-12 || row[s2] > 1.0 + 1e-12)
            throw std::invalid_argument("mdp: transition probability out of [0,1]");
          sum += row[s2];
        }
        if (std::abs(sum - 1.0) > 1e-12)
          throw std::invalid_argument("mdp: transition row does not sum to 1 at h=" +
                                      std::to_string(h + 1) + " s=" + std::to_string(s) +
                                      " a=" + std::to_string(a));
        double r = m.reward(h, s, a);
        if (r < 0.0 || r > 1.0)
          throw std::invalid_argument("mdp: mean reward outside [0,1]");
      }
    }
  }
}

/// Time-indexed decision rule. Deterministic policies store one action per
/// (h,s); stochastic ones a distribution over actions per (h,s). The policy
/// matrix of a rule never materializes; `prob` and the lift helpers below
/// provide its action.
struct Policy {
  enum class Kind : std::uint8_t { deterministic, stochastic };
  Kind kind = Kind::deterministic;
  std::vector<std::vector<int>> actions;     // [H][S], deterministic only
  std::vector<std::vector<double>> probs;    // [H][S*A], stochastic only

  bool deterministic() const { return kind == Kind::deterministic; }

  int action(int h, int s) const { return actions[h][s]; }

  double prob(int h, int s, int a, int num_actions) const {
    if (kind == Kind::deterministic) return actions[h][s] == a ? 1.0 : 0.0;
    return probs[h][static_cast<std::size_t>(s) * num_actions + a];
  }

  static Policy constant(int S, int H, int a) {
    Policy p;
    p.actions.assign(H, std::vector<int>(S, a));
    return p;
  }

  static Policy uniform(int S, int A, int H) {
    Policy p;
    p.kind = Kind::stochastic;
    p.probs.assign(H, std::vector<double>(static_cast<std::size_t>(S) * A, 1.0 / A));
    return p;
  }
};

using PolicySet = std::vector<Policy>;

inline void validate(const TabularMdp& m, const Policy& p) {
  const int S = m.num_states, A = m.num_actions, H = m.horizon;
  if (p.kind == Policy::Kind::deterministic) {
    if (static_cast<int>(p.actions.size()) != H)
      throw std::invalid_argument("policy: rule count does not match horizon");
    for (const auto& row : p.actions) {
      if (static_cast<int>(row.size()) != S)
        throw std::invalid_argument("policy: state count mismatch");
      for (int a : row)
        if (a < 0 || a >= A) throw std::invalid_argument("policy: action out of range");
    }
  } else {
    if (static_cast<int>(p.probs.size()) != H)
      throw std::invalid_argument("policy: rule count does not match horizon");
    for (const auto& row : p.probs) {
      if (static_cast<int>(row.size()) != static_cast<std::size_t>(S) * A)
        throw std::invalid_argument("policy: table size mismatch");
      for (int s = 0; s < S; ++s) {
        double sum = 0.0;
        for (int a = 0; a < A; ++a) {
          double q = row[static_cast<std::size_t>(s) * A + a];
          if (q < -1e-12) throw std::invalid_argument("policy: negative action probability");
          sum += q;
        }
        if (std::abs(sum - 1.0) > 1e-12)
          throw std::invalid_argument("policy: action probabilities do not sum to 1");
      }
    }
  }
}

// ---- policy-matrix actions on vectors ----------------------------------

/// phi = pi_h w: spreads state mass over the policy's actions.
inline std::vector<double> lift(const TabularMdp& m, const Policy& p, int h,
                                const std::vector<double>& w) {
  const int S = m.num_states, A = m.num_actions;
  std::vector<double> phi(static_cast<std::size_t>(S) * A, 0.0);
  for (int s = 0; s < S; ++s) {
    if (w[s] == 0.0) continue;
    if (p.deterministic()) {
      phi[m.sa(s, p.action(h, s))] += w[s];
    } else {
      for (int a = 0; a < A; ++a) phi[m.sa(s, a)] += p.prob(h, s, a, A) * w[s];
    }
  }
  return phi;
}

/// (pi_h - pibar_h) w: signed state-action vector of the policy disagreement.
inline std::vector<double> lift_difference(const TabularMdp& m, const Policy& pi,
                                           const Policy& pibar, int h,
                                           const std::vector<double>& w) {
  const int S = m.num_states, A = m.num_actions;
  std::vector<double> out(static_cast<std::size_t>(S) * A, 0.0);
  for (int s = 0; s < S; ++s) {
    if (w[s] == 0.0) continue;
    for (int a = 0; a < A; ++a) {
      double d = pi.prob(h, s, a, A) - pibar.prob(h, s, a, A);
      if (d != 0.0) out[m.sa(s, a)] += d * w[s];
    }
  }
  return out;
}

/// w' = P_h phi: pushes state-action mass through the transition kernel.
inline std::vector<double> apply_transition(const TabularMdp& m,
                                            const std::vector<double>& P_h,
                                            const std::vector<double>& phi) {
  const int S = m.num_states, A = m.num_actions;
  std::vector<double> w(S, 0.0);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      double mass = phi[m.sa(s, a)];
      if (mass == 0.0) continue;
      const double* row = P_h.data() + (static_cast<std::size_t>(s) * A + a) * S;
      for (int s2 = 0; s2 < S; ++s2) w[s2] += mass * row[s2];
    }
  }
  return w;
}

// ---- visitation / value recursions -------------------------------------

/// Per-step state and state-action visitation probabilities of a policy.
struct VisitationProfile {
  std::vector<std::vector<double>> state;        // [H][S], w_h
  std::vector<std::vector<double>> state_action; // [H][S*A], phi_h
};

inline VisitationProfile forward_visitations(const TabularMdp& m, const Policy& p) {
  validate(m, p);
  VisitationProfile v;
  v.state.resize(m.horizon);
  v.state_action.resize(m.horizon);
  std::vector<double> w(m.num_states, 0.0);
  w[m.initial_state] = 1.0;
  for (int h = 0; h < m.horizon; ++h) {
    v.state[h] = w;
    v.state_action[h] = lift(m, p, h, w);
    if (h + 1 < m.horizon) w = apply_transition(m, m.transitions[h], v.state_action[h]);
  }
  return v;
}

/// Backward-recursion value functions; initial_value = V_1(s_1).
struct ValueProfile {
  std::vector<std::vector<double>> state;        // [H][S], V_h
  std::vector<std::vector<double>> state_action; // [H][S*A], Q_h
  double initial_value = 0.0;
};

inline ValueProfile value_functions(const TabularMdp& m, const Policy& p) {
  validate(m, p);
  const int S = m.num_states, A = m.num_actions, H = m.horizon;
  ValueProfile v;
  v.state.assign(H, std::vector<double>(S, 0.0));
  v.state_action.assign(H, std::vector<double>(static_cast<std::size_t>(S) * A, 0.0));
  std::vector<double> next(S, 0.0);  // V_{h+1}, zero beyond the horizon
  for (int h = H - 1; h >= 0; --h) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        double q = m.reward(h, s, a);
        const double* row = m.transition_row(h, s, a);
        for (int s2 = 0; s2 < S; ++s2) q += row[s2] * next[s2];
        v.state_action[h][m.sa(s, a)] = q;
      }
      double val = 0.0;
      if (p.deterministic()) {
        val = v.state_action[h][m.sa(s, p.action(h, s))];
      } else {
        for (int a = 0; a < A; ++a)
          val += p.prob(h, s, a, A) * v.state_action[h][m.sa(s, a)];
      }
      v.state[h][s] = val;
    }
    next = v.state[h];
  }
  v.initial_value = v.state[0][m.initial_state];
  return v;
}

// ---- policy-comparison quantities ---------------------------------------

/// Expected squared Q-disagreement between pi and the reference pibar along
/// the reference's trajectory distribution. For stochastic policies the inner
/// term is the difference of action-averaged Q-values, squared.
struct QDisagreement {
  std::vector<double> per_step;  // [H]
  double total = 0.0;
};

inline QDisagreement q_disagreement(const TabularMdp& m, const Policy& pi,
                                    const Policy& pibar) {
  const int S = m.num_states, A = m.num_actions, H = m.horizon;
  ValueProfile q = value_functions(m, pi);
  VisitationProfile ref = forward_visitations(m, pibar);
  QDisagreement u;
  u.per_step.assign(H, 0.0);
  for (int h = 0; h < H; ++h) {
    double acc = 0.0;
    for (int s = 0; s < S; ++s) {
      double w = ref.state[h][s];
      if (w == 0.0) continue;
      double q_pi = 0.0, q_ref = 0.0;
      for (int a = 0; a < A; ++a) {
        double qv = q.state_action[h][m.sa(s, a)];
        q_pi += pi.prob(h, s, a, A) * qv;
        q_ref += pibar.prob(h, s, a, A) * qv;
      }
      double d = q_pi - q_ref;
      acc += w * d * d;
    }
    u.per_step[h] = acc;
    u.total += acc;
  }
  return u;
}

/// sum_h E_{s~w^pibar_h}[Q^pi_h(s,pi) - Q^pi_h(s,pibar)]; equals V^pi - V^pibar.
inline double performance_difference(const TabularMdp& m, const Policy& pi,
                                     const Policy& pibar) {
  const int S = m.num_states, A = m.num_actions, H = m.horizon;
  ValueProfile q = value_functions(m, pi);
  VisitationProfile ref = forward_visitations(m, pibar);
  double total = 0.0;
  for (int h = 0; h < H; ++h) {
    for (int s = 0; s < S; ++s) {
      double w = ref.state[h][s];
      if (w == 0.0) continue;
      double d = 0.0;
      for (int a = 0; a < A; ++a) {
        d += (pi.prob(h, s, a, A) - pibar.prob(h, s, a, A)) * q.state_action[h][m.sa(s, a)];
      }
      total += w * d;
    }
  }
  return total;
}

/// Suboptimality gaps over a finite candidate set. A non-unique argmax
/// (ties within tie_tol) pins min_gap to 0.
struct GapProfile {
  std::vector<double> values;  // V^pi per policy
  std::vector<double> gaps;    // Delta(pi) = max{V* - V^pi, min_gap}
  double min_gap = 0.0;
  int best_index = 0;
};

inline GapProfile gap_profile(const TabularMdp& m, const PolicySet& policies,
                              double tie_tol = 1e-12) {
  if (policies.empty()) throw std::invalid_argument("gap_profile: empty policy set");
  GapProfile g;
  g.values.reserve(policies.size());
  for (const auto& p : policies) g.values.push_back(value_functions(m, p).initial_value);
  g.best_index = static_cast<int>(
      std::max_element(g.values.begin(), g.values.end()) - g.values.begin());
  double best = g.values[g.best_index];
  bool unique = true;
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    if (static_cast<int>(i) == g.best_index) continue;
    double gap = best - g.values[i];
    if (gap <= tie_tol) unique = false;
    min_gap = std::min(min_gap, gap);
  }
  g.min_gap = (policies.size() == 1 || !unique) ? 0.0 : min_gap;
  g.gaps.resize(g.values.size());
  for (std::size_t i = 0; i < g.values.size(); ++i)
    g.gaps[i] = std::max(best - g.values[i], g.min_gap);
  return g;
}

// ---- the four-state two-step worked instance ----------------------------

struct Figure1Instance {
  TabularMdp mdp;
  PolicySet policies;  // {always a1, a1 on {s1,s2} / a2 on {s3,s4}}
};

/// 4-state, 3-action, H=2 family: from s1, action a1 reaches s2/s3/s4 with
/// probabilities (1-3*eps, eps1, eps2); a2 and a3 reach s3 resp. s4 surely.
/// Step-2 rewards r(s3,a1) = r(s4,a2) = 1; the optional step-1 reward is
/// r(s1,a1) = 1. Rewards are point masses.
inline Figure1Instance build_figure1_mdp(double eps, double eps1, double eps2,
                                         bool include_step1_reward = false) {
  if (eps < 0.0 || eps1 < 0.0 || eps2 < 0.0 || 1.0 - 3.0 * eps < -1e-12)
    throw std::invalid_argument("figure1: probabilities out of range");
  if (std::abs((1.0 - 3.0 * eps) + eps1 + eps2 - 1.0) > 1e-12)
    throw std::invalid_argument("figure1: (1-3*eps)+eps1+eps2 must equal 1");
  const int S = 4, A = 3, H = 2;
  const int s1 = 0, s2 = 1, s3 = 2, s4 = 3;
  const int a1 = 0, a2 = 1, a3 = 2;
  Figure1Instance out;
  out.mdp = TabularMdp::zeros(S, A, H, s1);
  auto set_p = [&](int h, int s, int a, int s_next, double p) {
    out.mdp.transitions[h][(static_cast<std::size_t>(s) * A + a) * S + s_next] = p;
  };
  // Step 1 out of s1; all other step-1 rows and every step-2 row self-loop.
  set_p(0, s1, a1, s2, 1.0 - 3.0 * eps);
  set_p(0, s1, a1, s3, eps1);
  set_p(0, s1, a1, s4, eps2);
  set_p(0, s1, a2, s3, 1.0);
  set_p(0, s1, a3, s4, 1.0);
  for (int s = s2; s <= s4; ++s)
    for (int a = 0; a < A; ++a) set_p(0, s, a, s, 1.0);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) set_p(1, s, a, s, 1.0);
  out.mdp.reward_means[1][out.mdp.sa(s3, a1)] = 1.0;
  out.mdp.reward_means[1][out.mdp.sa(s4, a2)] = 1.0;
  if (include_step1_reward) out.mdp.reward_means[0][out.mdp.sa(s1, a1)] = 1.0;
  validate(out.mdp);

  Policy p1 = Policy::constant(S, H, a1);
  Policy p2 = Policy::constant(S, H, a1);
  for (int h = 0; h < H; ++h) {
    p2.actions[h][s3] = a2;
    p2.actions[h][s4] = a2;
  }
  out.policies = {p1, p2};
  return out;
}

}  // namespace perp
