#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "perp/mdp.hpp"

namespace perp {

// ---- designs and direction sets -----------------------------------------

/// A step-h state-action distribution realizable by a policy mixture.
struct OccupancyDesign {
  int step = 0;                                    // h, 0-based
  std::vector<double> lambda;                      // [S*A]
  std::vector<std::pair<Policy, double>> mixture;  // realizing mixture
};

struct Direction {
  std::vector<double> u;  // [S*A]
  std::string label;      // provenance, e.g. "difference:2" or "single:0"
};

struct DesignProblem {
  const TabularMdp* mdp = nullptr;
  int step = 0;
  std::vector<Direction> directions;
  std::vector<double> regularizer;  // diagonal Lambda0; empty means zero
  double tolerance = 0.01;          // relative optimality target
  int max_iterations = 200000;      // total Frank-Wolfe iteration cap
};

struct DesignCertificate {
  double primal_value = 0.0;     // max direction value at the returned design
  double lower_bound = 0.0;      // certified lower bound on the optimum
  double smoothing_slack = 0.0;  // log|Phi| / eta_final
  bool certified = false;
  int iterations = 0;
  int binding_direction = -1;
};

struct DesignSolution {
  OccupancyDesign design;
  double value = 0.0;  // primal_value, +inf when infeasible
  DesignCertificate certificate;
};

/// sum_{s,a} u(s,a)^2 / (lambda + Lambda0)(s,a). Coordinates with u = 0
/// contribute nothing; an uncovered coordinate with u != 0 yields +inf
/// (a distinguished value, not an exception).
inline double design_value(const std::vector<double>& lambda, const std::vector<double>& u,
                           const std::vector<double>* regularizer = nullptr) {
  double v = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] == 0.0) continue;
    double d = lambda[i] + (regularizer ? (*regularizer)[i] : 0.0);
    if (d <= 0.0) return kInf;
    v += u[i] * u[i] / d;
  }
  return v;
}

inline double design_value(const OccupancyDesign& design, const std::vector<double>& u,
                           const std::vector<double>* regularizer = nullptr) {
  return design_value(design.lambda, u, regularizer);
}

// ---- linear maximization oracle ------------------------------------------

/// Deterministic policy maximizing sum_{s,a} weight(s,a) * phi_h(s,a), i.e.
/// E[weight(s_h, a_h)], by backward dynamic programming over steps 1..h and a
/// forward rollout. Optimal over all policies; ties break to the lowest
/// action index. Steps after h play action 0.
struct LmoResult {
  Policy policy;
  std::vector<double> phi;  // step-h visitation of the policy
  double objective = 0.0;
};

inline LmoResult lmo_best_visitation_policy(const TabularMdp& m, int step,
                                            const std::vector<double>& weight) {
  const int S = m.num_states, A = m.num_actions;
  if (static_cast<int>(weight.size()) != S * A)
    throw std::invalid_argument("lmo: weight size mismatch");
  for (double w : weight)
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument("lmo: weights must be nonnegative and finite");

  LmoResult out;
  out.policy = Policy::constant(S, m.horizon, 0);
  std::vector<double> val(S, 0.0), next(S, 0.0);
  for (int s = 0; s < S; ++s) {
    double best = weight[m.sa(s, 0)];
    int besta = 0;
    for (int a = 1; a < A; ++a) {
      if (weight[m.sa(s, a)] > best) {
        best = weight[m.sa(s, a)];
        besta = a;
      }
    }
    val[s] = best;
    out.policy.actions[step][s] = besta;
  }
  for (int j = step - 1; j >= 0; --j) {
    next = val;
    for (int s = 0; s < S; ++s) {
      double best = -kInf;
      int besta = 0;
      for (int a = 0; a < A; ++a) {
        const double* row = m.transition_row(j, s, a);
        double v = 0.0;
        for (int s2 = 0; s2 < S; ++s2) v += row[s2] * next[s2];
        if (v > best + 1e-15) {
          best = v;
          besta = a;
        }
      }
      val[s] = best;
      out.policy.actions[j][s] = besta;
    }
  }
  out.objective = val[m.initial_state];
  out.phi = forward_visitations(m, out.policy).state_action[step];
  return out;
}

/// Maximum probability of occupying `state` at step h over all policies,
/// with an arg-max policy.
inline LmoResult max_reachability(const TabularMdp& m, int step, int state) {
  std::vector<double> w(static_cast<std::size_t>(m.num_states) * m.num_actions, 0.0);
  for (int a = 0; a < m.num_actions; ++a) w[m.sa(state, a)] = 1.0;
  return lmo_best_visitation_policy(m, step, w);
}

// ---- min-max design solver -------------------------------------------------

namespace detail {

struct Smoothed {
  double value = 0.0;              // f_eta
  double true_max = 0.0;           // max direction value
  double softmax_mean = 0.0;       // sum_u p_u * value_u (dual surrogate)
  int binding = -1;                // argmax direction
  std::vector<double> softmax;     // weights per direction
};

inline Smoothed smoothed_objective(const std::vector<double>& lambda,
                                   const std::vector<Direction>& dirs,
                                   const std::vector<double>* reg, double eta) {
  Smoothed s;
  s.softmax.assign(dirs.size(), 0.0);
  std::vector<double> vals(dirs.size());
  double vmax = -kInf;
  for (std::size_t d = 0; d < dirs.size(); ++d) {
    vals[d] = design_value(lambda, dirs[d].u, reg);
    if (vals[d] > vmax) {
      vmax = vals[d];
      s.binding = static_cast<int>(d);
    }
  }
  s.true_max = vmax;
  if (!std::isfinite(vmax)) {
    s.value = kInf;
    return s;
  }
  double z = 0.0;
  for (std::size_t d = 0; d < dirs.size(); ++d) {
    s.softmax[d] = std::exp(eta * (vals[d] - vmax));
    z += s.softmax[d];
  }
  for (auto& p : s.softmax) p /= z;
  for (std::size_t d = 0; d < dirs.size(); ++d) s.softmax_mean += s.softmax[d] * vals[d];
  s.value = vmax + std::log(z) / eta;
  return s;
}

inline void smoothed_gradient(const std::vector<double>& lambda, const std::vector<Direction>& dirs,
                              const std::vector<double>* reg, const Smoothed& s,
                              std::vector<double>& grad) {
  grad.assign(lambda.size(), 0.0);
  for (std::size_t d = 0; d < dirs.size(); ++d) {
    double p = s.softmax[d];
    if (p == 0.0) continue;
    const auto& u = dirs[d].u;
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (u[i] == 0.0) continue;
      double den = lambda[i] + (reg ? (*reg)[i] : 0.0);
      grad[i] -= p * u[i] * u[i] / (den * den);
    }
  }
}

inline double segment_value(const std::vector<double>& lambda, const std::vector<double>& vertex,
                            double gamma, const std::vector<Direction>& dirs,
                            const std::vector<double>* reg, double eta,
                            std::vector<double>& scratch) {
  scratch.resize(lambda.size());
  for (std::size_t i = 0; i < lambda.size(); ++i)
    scratch[i] = (1.0 - gamma) * lambda[i] + gamma * vertex[i];
  return smoothed_objective(scratch, dirs, reg, eta).value;
}

}  // namespace detail

/// Frank-Wolfe on the log-sum-exp smoothing of the max design value over the
/// step-h occupancy polytope, with an increasing smoothing schedule
/// eta_i = 2^{2i/5}. The LMO is exact (backward DP), so the duality gap gives
/// a certified lower bound: optimum >= f_eta(lambda) - gap - log|Phi|/eta.
/// Returns the exact (unsmoothed) max value at the final design; `certified`
/// means value <= (1+tol) * lower_bound.
inline DesignSolution solve_min_max_design(const DesignProblem& problem) {
  if (problem.mdp == nullptr) throw std::invalid_argument("design: missing mdp");
  if (problem.tolerance <= 0.0) throw std::invalid_argument("design: tolerance must be positive");
  const TabularMdp& m = *problem.mdp;
  const int dim = m.num_states * m.num_actions;
  const std::vector<double>* reg =
      problem.regularizer.empty() ? nullptr : &problem.regularizer;
  for (const auto& d : problem.directions) {
    if (static_cast<int>(d.u.size()) != dim)
      throw std::invalid_argument("design: direction size mismatch");
    for (double x : d.u)
      if (!std::isfinite(x)) throw std::invalid_argument("design: non-finite direction entry");
  }

  DesignSolution sol;
  sol.design.step = problem.step;

  // Start from the uniform-action exploration design: it covers every
  // reachable coordinate with positive mass.
  Policy uniform = Policy::uniform(m.num_states, m.num_actions, m.horizon);
  sol.design.lambda = forward_visitations(m, uniform).state_action[problem.step];
  sol.design.mixture = {{uniform, 1.0}};

  bool all_zero = true;
  for (const auto& d : problem.directions)
    for (double x : d.u)
      if (x != 0.0) all_zero = false;
  if (problem.directions.empty() || all_zero) {
    sol.value = 0.0;
    sol.certificate.certified = true;
    return sol;
  }

  // Directions supported on unreachable coordinates make the problem
  // infeasible without a regularizer: flag, do not throw.
  {
    double v0 = 0.0;
    for (const auto& d : problem.directions)
      v0 = std::max(v0, design_value(sol.design.lambda, d.u, reg));
    if (!std::isfinite(v0)) {
      sol.value = kInf;
      sol.certificate.primal_value = kInf;
      sol.certificate.certified = false;
      return sol;
    }
  }

  const double tol = problem.tolerance;
  const double log_phi = std::log(static_cast<double>(problem.directions.size()));
  std::vector<double>& lambda = sol.design.lambda;
  std::vector<double> grad, scratch, weights(dim), dir(dim);

  // Away-step Frank-Wolfe over the explicit atom list (linear convergence on
  // the polytope, which the plain variant cannot deliver for tight
  // certificates).
  struct Atom {
    Policy policy;
    std::vector<double> phi;
    double weight;
  };
  std::vector<Atom> atoms;
  atoms.push_back({sol.design.mixture[0].first, lambda, 1.0});

  double best_lb = 0.0;
  int iterations = 0;
  int stage = 1;
  double eta = std::pow(2.0, 0.4);
  bool certified = false;

  detail::Smoothed cur = detail::smoothed_objective(lambda, problem.directions, reg, eta);
  while (iterations < problem.max_iterations && !certified) {
    int since_stage = 0;
    while (iterations < problem.max_iterations) {
      detail::smoothed_gradient(lambda, problem.directions, reg, cur, grad);
      for (int i = 0; i < dim; ++i) weights[i] = -grad[i];
      LmoResult v = lmo_best_visitation_policy(m, problem.step, weights);
      double gap = 0.0;
      for (int i = 0; i < dim; ++i) gap += grad[i] * (lambda[i] - v.phi[i]);
      gap = std::max(gap, 0.0);
      // Dual certificate: the softmax-weighted average of direction values is
      // a concave minorant of the max, so its linearization lower-bounds the
      // minimax optimum; it sharpens as the softmax approaches the optimal
      // dual weights rather than requiring a large eta.
      best_lb = std::max(best_lb, cur.softmax_mean - gap);
      if (cur.true_max <= (1.0 + tol) * std::max(best_lb, 0.0) + 1e-12) {
        certified = true;
        break;
      }
      // Residual dominated by softmax bluntness, not the gap: sharpen eta.
      if (gap <= 0.25 * std::max(cur.true_max - best_lb, 0.0)) break;

      // Choose between the forward vertex and an away step on the worst atom.
      std::size_t away = 0;
      double away_score = -kInf;
      for (std::size_t k = 0; k < atoms.size(); ++k) {
        double sc = 0.0;
        for (int i = 0; i < dim; ++i) sc += grad[i] * atoms[k].phi[i];
        if (sc > away_score) {
          away_score = sc;
          away = k;
        }
      }
      double fw_score = 0.0, lam_score = 0.0;
      for (int i = 0; i < dim; ++i) {
        fw_score += grad[i] * v.phi[i];
        lam_score += grad[i] * lambda[i];
      }
      bool away_step = (away_score - lam_score) > (lam_score - fw_score) && atoms.size() > 1;
      double gamma_max = 1.0;
      if (away_step) {
        const double w = atoms[away].weight;
        gamma_max = w >= 1.0 ? 1.0 : w / (1.0 - w);
        for (int i = 0; i < dim; ++i) dir[i] = lambda[i] - atoms[away].phi[i];
      } else {
        for (int i = 0; i < dim; ++i) dir[i] = v.phi[i] - lambda[i];
      }

      // Golden-section line search on the smoothed objective (convex in gamma).
      auto seg = [&](double g) {
        scratch.resize(dim);
        for (int i = 0; i < dim; ++i) scratch[i] = lambda[i] + g * dir[i];
        return detail::smoothed_objective(scratch, problem.directions, reg, eta).value;
      };
      double lo = 0.0, hi = gamma_max;
      double best_gamma = 0.0, best_val = cur.value;
      for (int b = 0; b < 24; ++b) {
        double g1 = lo + (hi - lo) * 0.382, g2 = lo + (hi - lo) * 0.618;
        double f1 = seg(g1), f2 = seg(g2);
        if (f1 < best_val) { best_val = f1; best_gamma = g1; }
        if (f2 < best_val) { best_val = f2; best_gamma = g2; }
        if (f1 < f2) hi = g2; else lo = g1;
      }
      double fmax = seg(gamma_max);
      if (fmax < best_val) { best_val = fmax; best_gamma = gamma_max; }

      if (best_gamma > 0.0) {
        double g = best_gamma;
        for (int i = 0; i < dim; ++i) lambda[i] += g * dir[i];
        if (away_step) {
          for (auto& a : atoms) a.weight *= (1.0 + g);
          atoms[away].weight -= g;
        } else {
          for (auto& a : atoms) a.weight *= (1.0 - g);
          bool merged = false;
          for (auto& a : atoms) {
            if (a.policy.actions == v.policy.actions) {
              a.weight += g;
              merged = true;
              break;
            }
          }
          if (!merged) atoms.push_back({std::move(v.policy), std::move(v.phi), g});
        }
        std::erase_if(atoms, [](const Atom& a) { return a.weight <= 1e-15; });
        // Periodically rebuild lambda from the atoms to cancel drift.
        if (iterations % 256 == 255) {
          double total = 0.0;
          for (const auto& a : atoms) total += a.weight;
          std::fill(lambda.begin(), lambda.end(), 0.0);
          for (auto& a : atoms) {
            a.weight /= total;
            for (int i = 0; i < dim; ++i) lambda[i] += a.weight * a.phi[i];
          }
        }
        cur = detail::smoothed_objective(lambda, problem.directions, reg, eta);
      }
      ++iterations;
      ++since_stage;
      if (since_stage >= 2000) break;
    }
    if (certified) break;
    ++stage;
    eta = std::pow(2.0, 0.4 * stage);
    cur = detail::smoothed_objective(lambda, problem.directions, reg, eta);
  }

  sol.design.mixture.clear();
  for (const auto& a : atoms) sol.design.mixture.emplace_back(a.policy, a.weight);
  detail::Smoothed fin = detail::smoothed_objective(lambda, problem.directions, reg, eta);
  sol.value = fin.true_max;
  sol.certificate.primal_value = fin.true_max;
  sol.certificate.lower_bound = best_lb;
  sol.certificate.smoothing_slack = log_phi / eta;
  sol.certificate.iterations = iterations;
  sol.certificate.binding_direction = fin.binding;
  sol.certificate.certified =
      fin.true_max <= (1.0 + tol) * std::max(best_lb, 0.0) + 1e-12;
  return sol;
}

// ---- complexity measures ----------------------------------------------------

struct ComplexityResult {
  double total = 0.0;
  std::vector<double> per_step;              // empty for measures without steps
  std::vector<int> binding_policy;           // per step, -1 when vacuous
  std::vector<DesignCertificate> certificates;
  bool certified = true;
  bool infinite = false;  // degenerate eps = 0 with min_gap = 0
  std::string diagnostic;
};

namespace detail {

inline bool degenerate_gaps(const GapProfile& gaps, double eps, ComplexityResult& out) {
  if (eps <= 0.0 && gaps.min_gap <= 0.0) {
    out.infinite = true;
    out.total = kInf;
    out.certified = false;
    out.diagnostic = "eps = 0 with a non-unique optimum: gap denominators vanish";
    return true;
  }
  return false;
}

}  // namespace detail

/// Difference-based complexity: sum over h of the min-max design value of the
/// gap-normalized visitation differences (phi* - phi^pi) / max{eps, Delta(pi)}.
inline ComplexityResult rho_pi(const TabularMdp& m, const PolicySet& policies, double eps,
                               double tolerance = 0.01) {
  if (policies.empty()) throw std::invalid_argument("rho_pi: empty policy set");
  ComplexityResult out;
  GapProfile gaps = gap_profile(m, policies);
  if (detail::degenerate_gaps(gaps, eps, out)) return out;
  std::vector<VisitationProfile> vis;
  vis.reserve(policies.size());
  for (const auto& p : policies) vis.push_back(forward_visitations(m, p));
  const auto& star = vis[gaps.best_index];

  for (int h = 0; h < m.horizon; ++h) {
    DesignProblem prob;
    prob.mdp = &m;
    prob.step = h;
    prob.tolerance = tolerance;
    std::vector<int> owner;
    for (std::size_t i = 0; i < policies.size(); ++i) {
      if (static_cast<int>(i) == gaps.best_index) continue;
      double denom = std::max(eps, gaps.gaps[i]);
      Direction d;
      d.label = "difference:" + std::to_string(i);
      d.u.resize(star.state_action[h].size());
      for (std::size_t k = 0; k < d.u.size(); ++k)
        d.u[k] = (star.state_action[h][k] - vis[i].state_action[h][k]) / denom;
      prob.directions.push_back(std::move(d));
      owner.push_back(static_cast<int>(i));
    }
    DesignSolution s = solve_min_max_design(prob);
    out.per_step.push_back(s.value);
    out.binding_policy.push_back(
        s.certificate.binding_direction >= 0 ? owner[s.certificate.binding_direction] : -1);
    out.certificates.push_back(s.certificate);
    out.certified = out.certified && s.certificate.certified;
    out.total += s.value;
  }
  return out;
}

enum class PedelVariant {
  direction_union,  // {phi^pi / max(eps, Delta(pi))} plus {phi* / max(eps, Delta(pi))}
  single_norm,      // {phi^pi / max(eps, Delta(pi)) : pi in Pi}
};

/// Individual-norm complexity. The direction_union variant follows the
/// numerator with both phi^pi and phi* scaled by each policy's gap; the
/// single_norm variant keeps one direction per policy.
inline ComplexityResult pedel_complexity(const TabularMdp& m, const PolicySet& policies,
                                         double eps,
                                         PedelVariant variant = PedelVariant::direction_union,
                                         double tolerance = 0.01) {
  if (policies.empty()) throw std::invalid_argument("pedel: empty policy set");
  ComplexityResult out;
  GapProfile gaps = gap_profile(m, policies);
  if (detail::degenerate_gaps(gaps, eps, out)) return out;
  std::vector<VisitationProfile> vis;
  vis.reserve(policies.size());
  for (const auto& p : policies) vis.push_back(forward_visitations(m, p));
  const auto& star = vis[gaps.best_index];

  for (int h = 0; h < m.horizon; ++h) {
    DesignProblem prob;
    prob.mdp = &m;
    prob.step = h;
    prob.tolerance = tolerance;
    std::vector<int> owner;
    for (std::size_t i = 0; i < policies.size(); ++i) {
      double denom = std::max(eps, gaps.gaps[i]);
      Direction d;
      d.label = "single:" + std::to_string(i);
      d.u.resize(vis[i].state_action[h].size());
      for (std::size_t k = 0; k < d.u.size(); ++k) d.u[k] = vis[i].state_action[h][k] / denom;
      prob.directions.push_back(std::move(d));
      owner.push_back(static_cast<int>(i));
      if (variant == PedelVariant::direction_union && static_cast<int>(i) != gaps.best_index) {
        Direction ds;
        ds.label = "star:" + std::to_string(i);
        ds.u.resize(star.state_action[h].size());
        for (std::size_t k = 0; k < ds.u.size(); ++k) ds.u[k] = star.state_action[h][k] / denom;
        prob.directions.push_back(std::move(ds));
        owner.push_back(static_cast<int>(i));
      }
    }
    DesignSolution s = solve_min_max_design(prob);
    out.per_step.push_back(s.value);
    out.binding_policy.push_back(
        s.certificate.binding_direction >= 0 ? owner[s.certificate.binding_direction] : -1);
    out.certificates.push_back(s.certificate);
    out.certified = out.certified && s.certificate.certified;
    out.total += s.value;
  }
  return out;
}

/// max_pi H * U(pi, pi*) / max{eps^2, Delta(pi)^2}; exact, no optimization.
inline ComplexityResult u_complexity(const TabularMdp& m, const PolicySet& policies, double eps) {
  if (policies.empty()) throw std::invalid_argument("u_complexity: empty policy set");
  ComplexityResult out;
  GapProfile gaps = gap_profile(m, policies);
  if (detail::degenerate_gaps(gaps, eps, out)) return out;
  out.binding_policy.assign(1, -1);
  for (std::size_t i = 0; i < policies.size(); ++i) {
    if (static_cast<int>(i) == gaps.best_index) continue;
    double denom = std::max(eps, gaps.gaps[i]);
    double val =
        m.horizon * q_disagreement(m, policies[i], policies[gaps.best_index]).total / (denom * denom);
    if (val > out.total) {
      out.total = val;
      out.binding_policy[0] = static_cast<int>(i);
    }
  }
  return out;
}

// ---- closed-form designs -----------------------------------------------------

/// Exact minimax design value for the contextual-bandit case: the optimal
/// exploration splits evenly between the two disagreeing actions in each
/// context, giving max over pairs of 4 * P_mu[pi(c) != pi'(c)].
inline double closed_form_contextual(const std::vector<double>& mu, const PolicySet& policies) {
  for (const auto& p : policies)
    if (!p.deterministic())
      throw std::invalid_argument("closed_form_contextual: deterministic policies required");
  double best = 0.0;
  for (std::size_t i = 0; i < policies.size(); ++i) {
    for (std::size_t j = i + 1; j < policies.size(); ++j) {
      double v = 0.0;
      for (std::size_t c = 0; c < mu.size(); ++c)
        if (policies[i].actions[0][c] != policies[j].actions[0][c]) v += 4.0 * mu[c];
      best = std::max(best, v);
    }
  }
  return best;
}

/// Exact minimax per-step design values when transitions do not depend on
/// actions: every policy shares the step distribution w_h, so the optimum is
/// max over pi of 4 * E_{s~w_h}[ I(pi_h(s) != pi*_h(s)) ] per step.
inline std::vector<double> closed_form_action_independent(const TabularMdp& m,
                                                          const PolicySet& policies) {
  const int S = m.num_states, A = m.num_actions;
  for (int h = 0; h < m.horizon; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 1; a < A; ++a)
        for (int s2 = 0; s2 < S; ++s2)
          if (std::abs(m.transition(h, s, a, s2) - m.transition(h, s, 0, s2)) > 1e-12)
            throw std::invalid_argument(
                "closed_form_action_independent: transitions depend on actions");
  for (const auto& p : policies)
    if (!p.deterministic())
      throw std::invalid_argument("closed_form_action_independent: deterministic policies required");

  GapProfile gaps = gap_profile(m, policies);
  const Policy& star = policies[gaps.best_index];
  VisitationProfile vis = forward_visitations(m, star);  // shared by every policy
  std::vector<double> out(m.horizon, 0.0);
  for (int h = 0; h < m.horizon; ++h) {
    for (std::size_t i = 0; i < policies.size(); ++i) {
      if (static_cast<int>(i) == gaps.best_index) continue;
      double v = 0.0;
      for (int s = 0; s < S; ++s)
        if (policies[i].actions[h][s] != star.actions[h][s]) v += 4.0 * vis.state[h][s];
      out[h] = std::max(out[h], v);
    }
  }
  return out;
}

// ---- change-of-measure sample lower bound -------------------------------------

struct KlCell {
  int h, s, a;
  double kl;              // joint (reward, next-state) KL; may be +inf
  double episode_bound;   // log(1/(2.4 kappa)) / kl
};

struct KlReport {
  std::vector<std::vector<double>> kl;  // [H][S*A]
  std::vector<KlCell> differing;
  double bound = kInf;  // aggregate lower bound on expected episodes
};

namespace detail {

inline double reward_law_kl(RewardKind k1, double m1, RewardKind k2, double m2) {
  auto as_binary = [](RewardKind k, double mean, double out[2]) -> bool {
    // Represent the law as masses on {0,1}; point masses elsewhere do not fit.
    if (k == RewardKind::bernoulli) {
      out[0] = 1.0 - mean;
      out[1] = mean;
      return true;
    }
    if (mean == 0.0 || mean == 1.0) {
      out[0] = mean == 0.0 ? 1.0 : 0.0;
      out[1] = mean;
      return true;
    }
    return false;
  };
  double p[2], q[2];
  bool bp = as_binary(k1, m1, p), bq = as_binary(k2, m2, q);
  if (bp && bq) {
    double kl = 0.0;
    for (int i = 0; i < 2; ++i) {
      if (p[i] == 0.0) continue;
      if (q[i] == 0.0) return kInf;
      kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
  }
  // General point masses: zero iff the laws coincide, else no absolute continuity.
  if (k1 == RewardKind::point && k2 == RewardKind::point) return m1 == m2 ? 0.0 : kInf;
  return kInf;
}

}  // namespace detail

/// Per-(h,s,a) KL between the joint (reward, next-state) laws of two models
/// plus the change-of-measure episode lower bound at confidence kappa:
/// E[tau] >= log(1/(2.4 kappa)) / sum_h max_{s,a} KL_h(s,a).
inline KlReport kl_sample_lower_bound(const TabularMdp& m1, const TabularMdp& m2, double kappa) {
  if (m1.num_states != m2.num_states || m1.num_actions != m2.num_actions ||
      m1.horizon != m2.horizon)
    throw std::invalid_argument("kl_sample_lower_bound: shape mismatch");
  if (kappa <= 0.0 || kappa >= 1.0)
    throw std::invalid_argument("kl_sample_lower_bound: kappa must lie in (0,1)");
  const int S = m1.num_states, A = m1.num_actions, H = m1.horizon;
  const double log_term = std::log(1.0 / (2.4 * kappa));
  KlReport rep;
  rep.kl.assign(H, std::vector<double>(static_cast<std::size_t>(S) * A, 0.0));
  double kl_sum_of_max = 0.0;
  for (int h = 0; h < H; ++h) {
    double step_max = 0.0;
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        double kl = detail::reward_law_kl(m1.reward_kinds[h][m1.sa(s, a)], m1.reward(h, s, a),
                                          m2.reward_kinds[h][m2.sa(s, a)], m2.reward(h, s, a));
        const double* p = m1.transition_row(h, s, a);
        const double* q = m2.transition_row(h, s, a);
        for (int s2 = 0; s2 < S && std::isfinite(kl); ++s2) {
          if (p[s2] == 0.0) continue;
          if (q[s2] == 0.0) {
            kl = kInf;
            break;
          }
          kl += p[s2] * std::log(p[s2] / q[s2]);
        }
        if (std::isfinite(kl) && kl < 1e-15) kl = 0.0;  // numerical zero for equal laws
        rep.kl[h][m1.sa(s, a)] = kl;
        if (kl > 0.0)
          rep.differing.push_back({h, s, a, kl, std::isfinite(kl) ? log_term / kl : 0.0});
        step_max = std::max(step_max, kl);
      }
    }
    kl_sum_of_max += step_max;
  }
  rep.bound = kl_sum_of_max > 0.0 ? log_term / kl_sum_of_max : kInf;
  return rep;
}

}  // namespace perp
