#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "perp/design.hpp"
#include "perp/estimator.hpp"
#include "perp/mdp.hpp"
#include "perp/simulate.hpp"

namespace perp {

// ---- smoothed design objective for online experiment design -----------------

struct FwObjective {
  double value = 0.0;
  std::vector<double> gradient;  // d/d diag(Lambda)
};

/// f(Lambda) = (1/eta) log sum_phi exp(eta ||phi||^2_{(Lambda+Lambda0)^-1})
/// with its exact gradient w.r.t. the diagonal of Lambda:
/// grad(s,a) = -sum_phi softmax_phi * phi(s,a)^2 / (Lambda+Lambda0)(s,a)^2.
inline FwObjective fw_objective(double eta, const std::vector<Direction>& directions,
                                const std::vector<double>& lambda,
                                const std::vector<double>& lambda0) {
  if (lambda.size() != lambda0.size())
    throw std::invalid_argument("fw_objective: size mismatch");
  for (const auto& d : directions) {
    for (std::size_t i = 0; i < d.u.size(); ++i)
      if (d.u[i] != 0.0 && lambda[i] + lambda0[i] <= 0.0)
        throw std::invalid_argument("fw_objective: covariance not positive on direction support");
  }
  detail::Smoothed s = detail::smoothed_objective(lambda, directions, &lambda0, eta);
  FwObjective out;
  out.value = s.value;
  detail::smoothed_gradient(lambda, directions, &lambda0, s, out.gradient);
  return out;
}

// ---- exploration backend --------------------------------------------------

/// Data collection front end. Episodes are always genuinely sampled through
/// the simulator. Oracle mode may read the true model to *choose* rollout
/// policies (exact reachability DP); online mode plans on its own empirical
/// model with optimistic bonuses and certifies reachability from data.
struct OnlineExploreConfig {
  int max_rounds = 12;  // doubling rounds per (s,h) decision
  std::uint64_t base_episodes = 64;
  double bonus_scale = 1.0;
};

class ExplorationBackend {
 public:
  enum class Mode { oracle, online };
  using OnlineConfig = OnlineExploreConfig;

  ExplorationBackend(Simulator& sim, Mode mode, OnlineConfig cfg = OnlineConfig())
      : sim_(&sim), mode_(mode), online_cfg_(cfg) {
    const TabularMdp& m = sim.mdp();
    if (mode_ == Mode::online) {
      counts_ = EpisodeDataset::empty(m.num_states, m.num_actions, m.horizon, "backend");
      reach_.assign(m.horizon, std::vector<ReachInfo>(m.num_states));
    }
  }

  Mode mode() const { return mode_; }
  Simulator& simulator() { return *sim_; }
  const TabularMdp& truth() const { return sim_->mdp(); }

  /// Model used for planning rollout policies (never for estimation output).
  const TabularMdp& planning_model() {
    if (mode_ == Mode::oracle) return sim_->mdp();
    refresh_model();
    return model_.mdp;
  }

  /// Certified reachability lower bound for (s, step): exact in oracle mode.
  double reach_lower(int step, int s) {
    if (mode_ == Mode::oracle) return oracle_reach(step, s).objective;
    return reach_[step][s].lower;
  }
  double reach_upper(int step, int s) {
    if (mode_ == Mode::oracle) return oracle_reach(step, s).objective;
    return reach_[step][s].upper;
  }

  /// Best-known policy for reaching (s, step).
  const Policy& reach_policy(int step, int s) {
    if (mode_ == Mode::oracle) return oracle_reach(step, s).policy;
    if (!reach_[step][s].have_policy) {
      reach_[step][s].policy = optimistic_reach_policy(step, s, 1e-3);
      reach_[step][s].have_policy = true;
    }
    return reach_[step][s].policy;
  }

  /// Online mode: sample until each (s, step) is decided against the two-sided
  /// thresholds (lower >= eps_unif keeps, upper <= 32 eps_unif drops).
  /// Returns false if some state ran out of rounds (decision uncertified).
  bool ensure_reach_decisions(double eps_unif, double delta) {
    if (mode_ == Mode::oracle) return true;
    const TabularMdp& m = sim_->mdp();
    bool all_certified = true;
    for (int h = 0; h < m.horizon; ++h) {
      for (int s = 0; s < m.num_states; ++s) {
        ReachInfo& info = reach_[h][s];
        int round = 0;
        while (info.lower < eps_unif && info.upper > 32.0 * eps_unif &&
               round < online_cfg_.max_rounds) {
          ++round;
          double dprime = delta / (8.0 * m.num_states * m.horizon * round * round);
          Policy pol = optimistic_reach_policy(h, s, dprime);
          std::uint64_t n = online_cfg_.base_episodes << round;
          std::uint64_t hits = 0;
          for (std::uint64_t i = 0; i < n; ++i) {
            run_recorded(pol, [&](int hh, int ss, int, double, int) {
              if (hh == h && ss == s) ++hits;
            });
          }
          double phat = static_cast<double>(hits) / static_cast<double>(n);
          double logt = std::log(3.0 / dprime);
          double lcb = phat - std::sqrt(2.0 * phat * logt / static_cast<double>(n)) -
                       3.0 * logt / static_cast<double>(n);
          if (lcb > info.lower) {
            info.lower = std::max(lcb, 0.0);
            info.policy = pol;
            info.have_policy = true;
          }
          info.upper = std::min(info.upper, optimistic_reach_value(h, s, dprime));
        }
        if (info.lower < eps_unif && info.upper > 32.0 * eps_unif) all_certified = false;
      }
    }
    return all_certified;
  }

  /// Runs one episode, recording it into the online model when applicable.
  template <class F>
  void run_recorded(const Policy& policy, F&& on_step) {
    if (mode_ == Mode::online) {
      sim_->run_episode(policy, [&](int h, int s, int a, double r, int s2) {
        counts_.record_step(h, s, a, r, s2);
        on_step(h, s, a, r, s2);
      });
      counts_.finish_episode();
      model_dirty_ = true;
    } else {
      sim_->run_episode(policy, on_step);
    }
  }

 private:
  struct ReachInfo {
    double lower = 0.0;
    double upper = 1.0;
    bool have_policy = false;
    Policy policy;
  };

  const LmoResult& oracle_reach(int step, int s) {
    auto key = std::make_pair(step, s);
    auto it = oracle_reach_.find(key);
    if (it == oracle_reach_.end())
      it = oracle_reach_.emplace(key, max_reachability(sim_->mdp(), step, s)).first;
    return it->second;
  }

  void refresh_model() {
    if (model_dirty_ || model_.mdp.num_states == 0) {
      model_ = estimate_model(counts_);
      model_dirty_ = false;
    }
  }

  /// Backward DP on the empirical model with L1-deviation bonuses; the value
  /// upper-bounds the true reachability with high probability.
  double optimistic_reach_dp(int step, int target, double dprime, Policy* policy_out) {
    refresh_model();
    const TabularMdp& m = model_.mdp;
    const int S = m.num_states, A = m.num_actions;
    std::vector<double> val(S, 0.0), next(S, 0.0);
    Policy pol = Policy::constant(S, m.horizon, 0);
    for (int s = 0; s < S; ++s) val[s] = s == target ? 1.0 : 0.0;
    for (int j = step - 1; j >= 0; --j) {
      next = val;
      for (int s = 0; s < S; ++s) {
        double best = -1.0;
        int besta = 0;
        for (int a = 0; a < A; ++a) {
          double n = static_cast<double>(model_.counts[j][m.sa(s, a)]);
          double bonus = online_cfg_.bonus_scale *
                         std::sqrt(2.0 * S * std::log(2.0 / dprime) / std::max(n, 1.0));
          if (n == 0.0) bonus = 1.0;
          const double* row = m.transition_row(j, s, a);
          double v = bonus;
          for (int s2 = 0; s2 < S; ++s2) v += row[s2] * next[s2];
          v = std::min(v, 1.0);
          if (v > best) {
            best = v;
            besta = a;
          }
        }
        val[s] = best;
        pol.actions[j][s] = besta;
      }
    }
    if (policy_out) *policy_out = std::move(pol);
    return val[sim_->mdp().initial_state];
  }

  Policy optimistic_reach_policy(int step, int target, double dprime) {
    Policy p;
    optimistic_reach_dp(step, target, dprime, &p);
    return p;
  }
  double optimistic_reach_value(int step, int target, double dprime) {
    return optimistic_reach_dp(step, target, dprime, nullptr);
  }

  Simulator* sim_;
  Mode mode_;
  OnlineConfig online_cfg_;
  std::map<std::pair<int, int>, LmoResult> oracle_reach_;
  EpisodeDataset counts_;  // online only
  EmpiricalModel model_;
  bool model_dirty_ = true;
  std::vector<std::vector<ReachInfo>> reach_;  // online only
};

// ---- prune -----------------------------------------------------------------

struct PruneResult {
  std::vector<std::vector<std::uint8_t>> keep;  // [H][S]
  std::vector<std::vector<double>> reach_lower;  // diagnostics
  std::vector<std::vector<double>> reach_upper;
  std::uint64_t episodes = 0;
  bool certified = true;
};

/// Keeps (s,h) whose max reachability clears eps_unif; drops only states
/// below 32 eps_unif. Oracle mode thresholds the exact values (no episodes);
/// online mode runs the backend's certified doubling scheme.
inline PruneResult prune(ExplorationBackend& backend, double eps_unif, double delta) {
  if (!(eps_unif > 0.0)) throw std::invalid_argument("prune: eps_unif must be positive");
  const TabularMdp& m = backend.truth();
  PruneResult out;
  out.keep.assign(m.horizon, std::vector<std::uint8_t>(m.num_states, 0));
  out.reach_lower.assign(m.horizon, std::vector<double>(m.num_states, 0.0));
  out.reach_upper.assign(m.horizon, std::vector<double>(m.num_states, 0.0));
  std::uint64_t before = backend.simulator().episodes_sampled();
  if (backend.mode() == ExplorationBackend::Mode::online)
    out.certified = backend.ensure_reach_decisions(eps_unif, delta);
  for (int h = 0; h < m.horizon; ++h) {
    for (int s = 0; s < m.num_states; ++s) {
      out.reach_lower[h][s] = backend.reach_lower(h, s);
      out.reach_upper[h][s] = backend.reach_upper(h, s);
      out.keep[h][s] = out.reach_lower[h][s] >= eps_unif ? 1 : 0;
    }
  }
  out.episodes = backend.simulator().episodes_sampled() - before;
  return out;
}

// ---- uniform exploration -----------------------------------------------------

struct UnifExpResult {
  EpisodeDataset data;
  std::uint64_t episodes = 0;
  bool certified = true;  // per-cell visit floor met
  bool partial = false;   // online budget exhausted before the floor
};

/// Targets every (s,a) at `step` whose reachability clears eps_unif: rolls the
/// max-reachability policy for s with the action at (s, step) overridden to a,
/// ceil(K/(SA)) episodes per pair, then tops up until the visit floor
/// reach * K / (2SA) holds (certified reachability lower bounds in online mode).
inline UnifExpResult unif_exp(ExplorationBackend& backend, double eps_unif, std::uint64_t K,
                              double delta, int step) {
  (void)delta;  // decisions are deterministic given the backend's certified bounds
  const TabularMdp& m = backend.truth();
  const int S = m.num_states, A = m.num_actions;
  UnifExpResult out;
  out.data = EpisodeDataset::empty(S, A, m.horizon, "unif_exp");
  if (K == 0) return out;
  std::uint64_t before = backend.simulator().episodes_sampled();
  const std::uint64_t per_pair = (K + static_cast<std::uint64_t>(S) * A - 1) /
                                 (static_cast<std::uint64_t>(S) * A);
  for (int s = 0; s < S; ++s) {
    double reach = backend.reach_lower(step, s);
    if (!(reach > eps_unif)) continue;
    const Policy& base = backend.reach_policy(step, s);
    for (int a = 0; a < A; ++a) {
      Policy pol = base;
      pol.actions[step][s] = a;
      auto roll = [&](std::uint64_t n) {
        for (std::uint64_t i = 0; i < n; ++i) {
          backend.run_recorded(pol, [&](int h, int ss, int aa, double r, int s2) {
            out.data.record_step(h, ss, aa, r, s2);
          });
          out.data.finish_episode();
        }
      };
      roll(per_pair);
      // Binomial slack: top up until the posted floor holds.
      const std::uint64_t floor_count = static_cast<std::uint64_t>(
          std::ceil(reach * static_cast<double>(K) / (2.0 * S * A)));
      std::uint64_t extra = 0;
      while (out.data.visits(step, s, a) < floor_count && extra < 8 * per_pair + 64) {
        std::uint64_t chunk = std::max<std::uint64_t>(per_pair / 4, 16);
        roll(chunk);
        extra += chunk;
      }
      if (out.data.visits(step, s, a) < floor_count) {
        out.certified = false;
        if (backend.mode() == ExplorationBackend::Mode::online) out.partial = true;
      }
    }
  }
  out.episodes = backend.simulator().episodes_sampled() - before;
  return out;
}

// ---- online experiment design (OptCov) ---------------------------------------

struct OptCovConfig {
  std::vector<Direction> directions;
  double eps_exp = 0.0;
  double delta = 0.05;
  double eps_unif = 0.0;
  double K_unif = 0.0;
  std::vector<std::uint8_t> kept_states;  // S0 at `step`
  int step = 0;
  double c_phi = 0.0;          // 0: derive from directions and reachability
  double guard_constant = 1e3; // polynomial guard multiplier
};

struct OptCovProgress {
  int epoch = 0;
  std::uint64_t episodes = 0;
  double f_value = 0.0;
  bool certified = false;
};

struct OptCovResult {
  EpisodeDataset data;                // final-epoch (or fallback) dataset
  std::vector<std::uint64_t> sigma;   // step-level counts of `data`
  double max_design_value = 0.0;      // max_phi ||phi||^2 in inverse counts
  bool fallback = false;
  bool certified = false;
  int epochs = 0;
  std::uint64_t episodes = 0;         // all epochs, discarded ones included
  std::vector<OptCovProgress> progress;
};

namespace detail {

inline double max_value_in_inverse_counts(const std::vector<Direction>& dirs,
                                          const std::vector<std::uint64_t>& counts) {
  double worst = 0.0;
  for (const auto& d : dirs) {
    double v = 0.0;
    for (std::size_t i = 0; i < d.u.size(); ++i) {
      if (d.u[i] == 0.0) continue;
      if (counts[i] == 0) return kInf;
      v += d.u[i] * d.u[i] / static_cast<double>(counts[i]);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

}  // namespace detail

/// Doubling-epoch online experiment design. Epoch i runs UnifExp for the
/// regularizer floor, then T_i = 2^i Frank-Wolfe iterations on the smoothed
/// objective with eta_i = 2^{2i/5}, each executing the planned policy for
/// K_i = 2^i real episodes. Terminates as soon as the collected covariance
/// satisfies max_phi ||phi||^2_{Sigma^-1} <= eps_exp; past the polynomial
/// guard it falls back to one large UnifExp call. Both return paths must
/// satisfy the posted covariance inequalities or a certification error is
/// thrown.
inline OptCovResult optcov(ExplorationBackend& backend, const OptCovConfig& cfg) {
  const TabularMdp& m = backend.truth();
  const int S = m.num_states, A = m.num_actions;
  const int dim = S * A;
  if (cfg.eps_exp <= 0.0 || cfg.eps_unif <= 0.0)
    throw std::invalid_argument("optcov: tolerances must be positive");
  if (cfg.K_unif < 1.0 / cfg.eps_unif)
    throw std::invalid_argument("optcov: requires K_unif >= 1/eps_unif");
  if (static_cast<int>(cfg.kept_states.size()) != S)
    throw std::invalid_argument("optcov: kept_states must have one flag per state");
  for (const auto& d : cfg.directions) {
    if (static_cast<int>(d.u.size()) != dim)
      throw std::invalid_argument("optcov: direction size mismatch");
    for (int s = 0; s < S; ++s)
      if (!cfg.kept_states[s])
        for (int a = 0; a < A; ++a)
          if (d.u[m.sa(s, a)] != 0.0)
            throw std::invalid_argument("optcov: direction supported outside kept states");
  }

  double c_phi = cfg.c_phi;
  if (c_phi <= 0.0) {
    c_phi = 1.0;
    for (const auto& d : cfg.directions)
      for (int s = 0; s < S; ++s)
        if (cfg.kept_states[s])
          for (int a = 0; a < A; ++a)
            c_phi = std::max(c_phi, std::abs(d.u[m.sa(s, a)]) /
                                        std::max(backend.reach_lower(cfg.step, s), cfg.eps_unif));
  }

  OptCovResult out;
  const std::uint64_t k_unif = static_cast<std::uint64_t>(std::ceil(cfg.K_unif));
  const double guard = cfg.guard_constant * S * S * A * A * m.horizon * m.horizon *
                       std::log(1.0 / cfg.delta) *
                       std::max(1.0, std::log(static_cast<double>(
                                         std::max<std::size_t>(cfg.directions.size(), 1)))) /
                       cfg.eps_exp;

  auto finalize = [&](EpisodeDataset&& data, bool fb) {
    out.data = std::move(data);
    out.fallback = fb;
    out.sigma.assign(dim, 0);
    for (int i = 0; i < dim; ++i) out.sigma[i] = out.data.sa_counts[cfg.step][i];
    out.max_design_value = detail::max_value_in_inverse_counts(cfg.directions, out.sigma);
    bool design_ok = out.max_design_value <= cfg.eps_exp;
    double floor_target = cfg.eps_unif * cfg.K_unif / (2.0 * S * A);
    bool floor_ok = true;
    for (int s = 0; s < S; ++s)
      if (cfg.kept_states[s])
        for (int a = 0; a < A; ++a)
          if (static_cast<double>(out.sigma[m.sa(s, a)]) < floor_target) floor_ok = false;
    out.certified = design_ok && floor_ok;
    if (!out.certified)
      throw std::runtime_error(std::string("optcov: returned covariance violates the posted ") +
                               (design_ok ? "per-cell floor" : "design bound"));
  };

  std::vector<double> lambda0(dim, 0.0), lambda(dim, 0.0), weights(dim, 0.0);
  for (int i = 1;; ++i) {
    const double t_i = std::pow(2.0, i), k_i = std::pow(2.0, i);
    if (t_i * k_i > guard) break;
    const double eta_i = std::pow(2.0, 2.0 * i / 5.0);
    const std::uint64_t T = static_cast<std::uint64_t>(t_i);
    const std::uint64_t K = static_cast<std::uint64_t>(k_i);

    UnifExpResult unif = unif_exp(backend, cfg.eps_unif,
                                  T * K + k_unif, cfg.delta / (8.0 * i * i), cfg.step);
    out.episodes += unif.episodes;
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        int idx = m.sa(s, a);
        lambda0[idx] = cfg.kept_states[s]
                           ? static_cast<double>(unif.data.sa_counts[cfg.step][idx]) / (t_i * k_i)
                           : 1.0;
      }
    }

    EpisodeDataset fw_data = EpisodeDataset::empty(S, A, m.horizon, "optcov_fw");
    auto epoch_counts = [&]() {
      std::vector<std::uint64_t> c(dim);
      for (int idx = 0; idx < dim; ++idx)
        c[idx] = fw_data.sa_counts[cfg.step][idx] + unif.data.sa_counts[cfg.step][idx];
      return c;
    };

    bool done = detail::max_value_in_inverse_counts(cfg.directions, epoch_counts()) <= cfg.eps_exp;
    std::uint64_t fw_episodes = 0;
    for (std::uint64_t t = 0; t < T && !done; ++t) {
      for (int idx = 0; idx < dim; ++idx)
        lambda[idx] = fw_episodes == 0
                          ? 0.0
                          : static_cast<double>(fw_data.sa_counts[cfg.step][idx]) /
                                static_cast<double>(fw_episodes);
      FwObjective f = fw_objective(eta_i, cfg.directions, lambda, lambda0);
      for (int idx = 0; idx < dim; ++idx) weights[idx] = -f.gradient[idx];
      LmoResult v = lmo_best_visitation_policy(backend.planning_model(), cfg.step, weights);
      for (std::uint64_t k = 0; k < K; ++k) {
        backend.run_recorded(v.policy, [&](int h, int ss, int aa, double r, int s2) {
          fw_data.record_step(h, ss, aa, r, s2);
        });
        fw_data.finish_episode();
        ++fw_episodes;
      }
      done = detail::max_value_in_inverse_counts(cfg.directions, epoch_counts()) <= cfg.eps_exp;
    }
    out.episodes += fw_episodes;
    out.epochs = i;
    out.progress.push_back(
        {i, unif.episodes + fw_episodes,
         detail::max_value_in_inverse_counts(cfg.directions, epoch_counts()), done});
    if (done) {
      fw_data.merge(unif.data);
      finalize(std::move(fw_data), false);
      return out;
    }
  }

  // Fallback: one large uniform-exploration call sized by the direction bound.
  double fb_k = 8.0 * S * S * A * A * c_phi * c_phi / cfg.eps_exp +
                (8.0 * S * S * A * A * c_phi * c_phi + 1.0) * cfg.K_unif;
  UnifExpResult unif = unif_exp(backend, cfg.eps_unif,
                                static_cast<std::uint64_t>(std::ceil(fb_k)), cfg.delta / 4.0,
                                cfg.step);
  out.episodes += unif.episodes;
  out.epochs += 1;
  out.progress.push_back({out.epochs, unif.episodes, 0.0, true});
  finalize(std::move(unif.data), true);
  return out;
}

}  // namespace perp
