#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "perp/design.hpp"
#include "perp/estimator.hpp"
#include "perp/explore.hpp"
#include "perp/mdp.hpp"
#include "perp/simulate.hpp"

namespace perp {

// ---- schedule and budget formulas (bit-for-bit per-epoch functions) ---------

inline double epoch_accuracy(int ell) { return std::pow(2.0, -ell); }

inline double epoch_min_reachability(int ell, int S, int H) {
  return epoch_accuracy(ell) / (64.0 * std::pow(static_cast<double>(S), 1.5) * H * H);
}

inline double epoch_min_exploration(int ell, int S, int H) {
  return std::pow(epoch_accuracy(ell), -2.0 / 3.0) / epoch_min_reachability(ell, S, H);
}

/// Confidence width multiplier for the epoch's experiment-design target.
inline double beta_ell(int ell, int S, int A, int H, std::size_t num_policies, double eps_unif,
                       double k_unif, double kappa) {
  const double l2 = static_cast<double>(ell) * ell;
  const double n = static_cast<double>(num_policies);
  return std::sqrt(2.0 * std::log(60.0 * S * H * H * l2 * n / kappa)) +
         (4.0 / 3.0) * std::sqrt(static_cast<double>(S) * A / (eps_unif * k_unif)) *
             std::log(60.0 * H * H * l2 * n / kappa);
}

inline double epoch_design_tolerance(int ell, int S, int A, int H, std::size_t num_policies,
                                     double kappa) {
  double eps_ell = epoch_accuracy(ell);
  double beta = beta_ell(ell, S, A, H, num_policies, epoch_min_reachability(ell, S, H),
                         epoch_min_exploration(ell, S, H), kappa);
  return eps_ell * eps_ell / (std::pow(static_cast<double>(H), 4.0) * beta * beta);
}

/// Reference-policy episode budget for the epoch; u_hat_max is the worst
/// estimated squared-disagreement total against the chosen reference.
inline std::uint64_t reference_budget(int ell, int S, int A, int H, std::size_t num_policies,
                                      double u_hat_max, double kappa, double c = 1.0) {
  const double eps_ell = epoch_accuracy(ell);
  const double l2 = static_cast<double>(ell) * ell;
  const double lead =
      H * u_hat_max +
      std::pow(static_cast<double>(H), 4.0) * std::pow(static_cast<double>(S), 1.5) *
          std::sqrt(static_cast<double>(A)) * std::log(S * A * H * l2 / kappa) *
          std::pow(eps_ell, 1.0 / 3.0) +
      static_cast<double>(S) * S * std::pow(static_cast<double>(H), 4.0) *
          epoch_min_reachability(ell, S, H);
  const double n = c * lead / (eps_ell * eps_ell) *
                   std::log(60.0 * H * l2 * static_cast<double>(num_policies) / kappa);
  if (!(n >= 0.0)) throw std::invalid_argument("reference_budget: invalid inputs");
  return static_cast<std::uint64_t>(std::ceil(std::max(n, 1.0)));
}

// ---- per-epoch primitives ----------------------------------------------------

/// Squared Q-disagreement of (pi, pibar) evaluated exactly on an estimated
/// model (backward Q recursion and forward visitations on the same tables).
inline QDisagreement u_hat(const TabularMdp& model, const Policy& pi, const Policy& pibar) {
  return q_disagreement(model, pi, pibar);
}

/// Exact min-max reference selection over the table u[i][j] = U(pi_i, pi_j);
/// returns j minimizing max_i, ties to the lowest index.
inline int select_reference(const std::vector<std::vector<double>>& u_table) {
  if (u_table.empty()) throw std::invalid_argument("select_reference: empty table");
  int best = 0;
  double best_val = kInf;
  for (std::size_t j = 0; j < u_table.size(); ++j) {
    double worst = 0.0;
    for (std::size_t i = 0; i < u_table.size(); ++i) worst = std::max(worst, u_table[i][j]);
    if (worst < best_val) {
      best_val = worst;
      best = static_cast<int>(j);
    }
  }
  return best;
}

/// Elimination rule: drop policies whose estimated value difference trails the
/// best by strictly more than 8 eps_ell.
inline std::vector<int> eliminate(const std::vector<int>& active, const std::vector<double>& d_hat,
                                  double eps_ell) {
  if (active.size() != d_hat.size()) throw std::invalid_argument("eliminate: size mismatch");
  double best = -kInf;
  for (double d : d_hat) best = std::max(best, d);
  std::vector<int> out;
  for (std::size_t i = 0; i < active.size(); ++i)
    if (!(best - d_hat[i] > 8.0 * eps_ell)) out.push_back(active[i]);
  if (out.empty()) throw std::logic_error("eliminate: empty survivor set");
  return out;
}

// ---- the full algorithm --------------------------------------------------------

struct PerpConfig {
  double eps = 0.1;
  double kappa = 0.1;
  double c_ref = 1.0;            // reference-budget multiplier
  double guard_constant = 1e3;   // OptCov polynomial guard multiplier
  ExplorationBackend::Mode backend_mode = ExplorationBackend::Mode::oracle;
  int max_epochs_override = 0;   // 0: ceil(log2(16/eps))
  bool known_rewards = false;
  std::uint64_t episode_cap = 10000000000ULL;  // hard safety valve
};

struct EpochRecord {
  int ell = 0;
  double eps_ell = 0.0, eps_unif = 0.0, k_unif = 0.0, eps_exp = 0.0, beta = 0.0;
  std::vector<int> active;  // original policy indices entering the epoch
  int reference = -1;       // original index of the reference policy
  std::uint64_t reference_episodes = 0;
  std::uint64_t prune_episodes = 0;
  std::vector<std::uint64_t> optcov_episodes;  // per step
  std::vector<std::uint8_t> optcov_fallback;   // per step
  std::vector<std::vector<std::uint8_t>> kept;  // [H][S]
  std::vector<double> d_hat;                     // aligned with `active`
  std::vector<int> eliminated;                   // original indices dropped
  int unvisited_kept_cells = 0;  // diagnostic: kept (s,a) with zero count
};

struct PerpReport {
  int chosen = -1;  // original policy index
  std::uint64_t total_episodes = 0;
  std::vector<EpochRecord> epochs;
  std::vector<std::vector<int>> survivor_history;
  bool aborted = false;  // episode cap reached
  bool early_exit = false;
};

/// Policy elimination with a reference policy: per epoch, prune unreachable
/// states, pick the reference by the estimated squared-disagreement min-max,
/// sample it to estimate its visitations, cover the per-step estimated
/// difference directions by online experiment design, propagate the masked
/// difference recursion through the fresh empirical model, and eliminate.
inline PerpReport perp(Simulator& sim, const PolicySet& policies, const PerpConfig& cfg) {
  if (policies.empty()) throw std::invalid_argument("perp: empty policy set");
  for (const auto& p : policies) {
    if (!p.deterministic())
      throw std::invalid_argument("perp: candidate policies must be deterministic");
    validate(sim.mdp(), p);
  }
  if (!(cfg.eps > 0.0) || cfg.eps > 1.0 || !(cfg.kappa > 0.0) || cfg.kappa >= 1.0)
    throw std::invalid_argument("perp: eps in (0,1], kappa in (0,1) required");

  const TabularMdp& m = sim.mdp();
  const int S = m.num_states, A = m.num_actions, H = m.horizon;
  ExplorationBackend backend(sim, cfg.backend_mode);

  PerpReport report;
  std::vector<int> active(policies.size());
  for (std::size_t i = 0; i < active.size(); ++i) active[i] = static_cast<int>(i);

  // Bootstrap model: uniform transitions, zero rewards.
  TabularMdp model = TabularMdp::zeros(S, A, H, m.initial_state);
  for (int h = 0; h < H; ++h)
    for (double& p : model.transitions[h]) p = 1.0 / S;

  const int max_epochs = cfg.max_epochs_override > 0
                             ? cfg.max_epochs_override
                             : static_cast<int>(std::ceil(std::log2(16.0 / cfg.eps)));
  auto over_cap = [&]() { return sim.episodes_sampled() > cfg.episode_cap; };

  int chosen = active[0];
  for (int ell = 1; ell <= max_epochs; ++ell) {
    EpochRecord rec;
    rec.ell = ell;
    rec.eps_ell = epoch_accuracy(ell);
    rec.eps_unif = epoch_min_reachability(ell, S, H);
    rec.k_unif = epoch_min_exploration(ell, S, H);
    rec.active = active;

    PruneResult pruned = prune(backend, rec.eps_unif, cfg.kappa / (3.0 * ell * ell));
    rec.prune_episodes = pruned.episodes;
    rec.kept = pruned.keep;
    if (over_cap()) {
      report.aborted = true;
      break;
    }

    // Reference selection on the previous epoch's model.
    std::vector<std::vector<double>> u_table(active.size(), std::vector<double>(active.size(), 0.0));
    for (std::size_t i = 0; i < active.size(); ++i)
      for (std::size_t j = 0; j < active.size(); ++j)
        if (i != j) u_table[i][j] = u_hat(model, policies[active[i]], policies[active[j]]).total;
    int ref_local = select_reference(u_table);
    rec.reference = active[ref_local];
    const Policy& pibar = policies[rec.reference];

    double u_max = 0.0;
    for (std::size_t i = 0; i < active.size(); ++i) u_max = std::max(u_max, u_table[i][ref_local]);
    std::uint64_t n_ref =
        reference_budget(ell, S, A, H, active.size(), u_max, cfg.kappa, cfg.c_ref);
    if (sim.episodes_sampled() + n_ref > cfg.episode_cap) {
      report.aborted = true;
      break;
    }
    EpisodeDataset ref_data = EpisodeDataset::empty(S, A, H, "reference");
    for (std::uint64_t k = 0; k < n_ref; ++k) {
      backend.run_recorded(pibar, [&](int h, int s, int a, double r, int s2) {
        ref_data.record_step(h, s, a, r, s2);
      });
      ref_data.finish_episode();
    }
    rec.reference_episodes = n_ref;
    auto w_hat = estimate_reference(ref_data);

    rec.beta = beta_ell(ell, S, A, H, active.size(), rec.eps_unif, rec.k_unif, cfg.kappa);
    rec.eps_exp = rec.eps_ell * rec.eps_ell /
                  (std::pow(static_cast<double>(H), 4.0) * rec.beta * rec.beta);

    // Per-step experiment design, model refit and difference propagation.
    TabularMdp epoch_model = TabularMdp::zeros(S, A, H, m.initial_state);
    std::vector<std::vector<std::vector<double>>> delta(active.size());
    for (auto& d : delta) d.assign(H + 1, std::vector<double>(S, 0.0));
    bool epoch_aborted = false;
    for (int h = 0; h < H && !epoch_aborted; ++h) {
      OptCovConfig oc;
      oc.eps_exp = rec.eps_exp;
      oc.delta = cfg.kappa / (6.0 * H * ell * ell);
      oc.eps_unif = rec.eps_unif;
      oc.K_unif = rec.k_unif;
      oc.kept_states = pruned.keep[h];
      oc.step = h;
      oc.guard_constant = cfg.guard_constant;
      oc.directions.reserve(active.size());
      for (std::size_t i = 0; i < active.size(); ++i) {
        Direction d;
        d.label = "policy:" + std::to_string(active[i]);
        d.u = lift_difference(m, policies[active[i]], pibar, h, w_hat[h]);
        std::vector<double> carry = lift(m, policies[active[i]], h, delta[i][h]);
        for (int idx = 0; idx < S * A; ++idx) d.u[idx] += carry[idx];
        for (int s = 0; s < S; ++s)
          if (!pruned.keep[h][s])
            for (int a = 0; a < A; ++a) d.u[m.sa(s, a)] = 0.0;
        oc.directions.push_back(std::move(d));
      }

      OptCovResult cov = optcov(backend, oc);
      rec.optcov_episodes.push_back(cov.episodes);
      rec.optcov_fallback.push_back(cov.fallback ? 1 : 0);
      if (over_cap()) {
        epoch_aborted = true;
        break;
      }

      EmpiricalModel em = estimate_model(cov.data);
      epoch_model.transitions[h] = em.mdp.transitions[h];
      epoch_model.reward_means[h] =
          cfg.known_rewards ? m.reward_means[h] : em.mdp.reward_means[h];
      for (int s = 0; s < S; ++s)
        if (pruned.keep[h][s])
          for (int a = 0; a < A; ++a)
            if (cov.data.sa_counts[h][m.sa(s, a)] == 0) ++rec.unvisited_kept_cells;

      if (h + 1 < H) {
        for (std::size_t i = 0; i < active.size(); ++i) {
          std::vector<double> dir = lift_difference(m, policies[active[i]], pibar, h, w_hat[h]);
          std::vector<double> carry = lift(m, policies[active[i]], h, delta[i][h]);
          for (int idx = 0; idx < S * A; ++idx) dir[idx] += carry[idx];
          delta[i][h + 1] = apply_transition(m, epoch_model.transitions[h], dir);
          for (int s = 0; s < S; ++s)
            if (!pruned.keep[h + 1][s]) delta[i][h + 1][s] = 0.0;
        }
      }
    }
    if (epoch_aborted) {
      report.aborted = true;
      report.epochs.push_back(std::move(rec));
      break;
    }

    rec.d_hat.resize(active.size());
    for (std::size_t i = 0; i < active.size(); ++i)
      rec.d_hat[i] =
          estimate_value_difference(epoch_model, policies[active[i]], pibar, delta[i], w_hat);

    std::vector<int> survivors = eliminate(active, rec.d_hat, rec.eps_ell);
    for (int idx : active)
      if (std::find(survivors.begin(), survivors.end(), idx) == survivors.end())
        rec.eliminated.push_back(idx);

    // Deterministic running choice: the empirical best among survivors.
    double best_d = -kInf;
    for (std::size_t i = 0; i < active.size(); ++i) {
      bool survived =
          std::find(survivors.begin(), survivors.end(), active[i]) != survivors.end();
      if (survived && rec.d_hat[i] > best_d) {
        best_d = rec.d_hat[i];
        chosen = active[i];
      }
    }

    report.epochs.push_back(std::move(rec));
    report.survivor_history.push_back(survivors);
    active = std::move(survivors);
    model = std::move(epoch_model);
    if (active.size() == 1) {
      chosen = active[0];
      report.early_exit = true;
      break;
    }
  }

  report.chosen = chosen;
  report.total_episodes = sim.episodes_sampled();
  return report;
}

}  // namespace perp
