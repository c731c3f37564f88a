#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "perp/mdp.hpp"
#include "perp/simulate.hpp"

namespace perp {

/// Logged interaction data as exact per-step counts (visit counts, next-state
/// counts, reward sums). Full trajectories are kept only when
/// `keep_episodes` is set; count-based consumers never need them and hot
/// loops stream millions of episodes through here.
struct EpisodeDataset {
  int num_states = 0, num_actions = 0, horizon = 0;
  std::string provenance;
  std::vector<std::vector<std::uint64_t>> sa_counts;          // [H][S*A]
  std::vector<std::vector<std::uint64_t>> transition_counts;  // [H][(S*A)*S]
  std::vector<std::vector<double>> reward_sums;               // [H][S*A]
  std::uint64_t num_episodes = 0;
  double return_sum = 0.0;
  bool keep_episodes = false;
  std::vector<Episode> episodes;

  static EpisodeDataset empty(int S, int A, int H, std::string tag = "") {
    EpisodeDataset d;
    d.num_states = S;
    d.num_actions = A;
    d.horizon = H;
    d.provenance = std::move(tag);
    d.sa_counts.assign(H, std::vector<std::uint64_t>(static_cast<std::size_t>(S) * A, 0));
    d.transition_counts.assign(H, std::vector<std::uint64_t>(static_cast<std::size_t>(S) * A * S, 0));
    d.reward_sums.assign(H, std::vector<double>(static_cast<std::size_t>(S) * A, 0.0));
    return d;
  }

  void record_step(int h, int s, int a, double r, int s2) {
    std::size_t sa = static_cast<std::size_t>(s) * num_actions + a;
    sa_counts[h][sa] += 1;
    transition_counts[h][sa * num_states + s2] += 1;
    reward_sums[h][sa] += r;
    return_sum += r;
  }
  void finish_episode() { ++num_episodes; }

  void add_episode(const Episode& ep) {
    if (static_cast<int>(ep.size()) != horizon)
      throw std::invalid_argument("dataset: episode length does not match horizon");
    for (int h = 0; h < horizon; ++h) record_step(h, ep[h].state, ep[h].action, ep[h].reward, ep[h].next_state);
    finish_episode();
    if (keep_episodes) episodes.push_back(ep);
  }

  void merge(const EpisodeDataset& other) {
    for (int h = 0; h < horizon; ++h) {
      for (std::size_t i = 0; i < sa_counts[h].size(); ++i) {
        sa_counts[h][i] += other.sa_counts[h][i];
        reward_sums[h][i] += other.reward_sums[h][i];
      }
      for (std::size_t i = 0; i < transition_counts[h].size(); ++i)
        transition_counts[h][i] += other.transition_counts[h][i];
    }
    num_episodes += other.num_episodes;
    return_sum += other.return_sum;
    if (keep_episodes)
      episodes.insert(episodes.end(), other.episodes.begin(), other.episodes.end());
  }

  std::uint64_t visits(int h, int s, int a) const {
    return sa_counts[h][static_cast<std::size_t>(s) * num_actions + a];
  }
  std::uint64_t state_visits(int h, int s) const {
    std::uint64_t n = 0;
    for (int a = 0; a < num_actions; ++a) n += visits(h, s, a);
    return n;
  }
  double mean_return() const {
    if (num_episodes == 0) throw std::invalid_argument("dataset: empty");
    return return_sum / static_cast<double>(num_episodes);
  }
};

/// Count-ratio model. Unvisited (s,a) rows default to the uniform
/// distribution and zero reward. The table doubles as a TabularMdp so value
/// and visitation recursions run on it unchanged.
struct EmpiricalModel {
  TabularMdp mdp;
  std::vector<std::vector<std::uint64_t>> counts;  // [H][S*A], source visit counts
};

inline EmpiricalModel estimate_model(const EpisodeDataset& data) {
  const int S = data.num_states, A = data.num_actions, H = data.horizon;
  EmpiricalModel em;
  em.mdp = TabularMdp::zeros(S, A, H);
  em.counts = data.sa_counts;
  for (int h = 0; h < H; ++h) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        std::size_t sa = static_cast<std::size_t>(s) * A + a;
        std::uint64_t n = data.sa_counts[h][sa];
        std::size_t base = sa * S;
        if (n == 0) {
          for (int s2 = 0; s2 < S; ++s2) em.mdp.transitions[h][base + s2] = 1.0 / S;
          em.mdp.reward_means[h][sa] = 0.0;
        } else {
          for (int s2 = 0; s2 < S; ++s2)
            em.mdp.transitions[h][base + s2] =
                static_cast<double>(data.transition_counts[h][base + s2]) / static_cast<double>(n);
          em.mdp.reward_means[h][sa] = data.reward_sums[h][sa] / static_cast<double>(n);
        }
      }
    }
  }
  return em;
}

/// Empirical state-visitation frequencies of the reference dataset;
/// rows sum to 1 exactly. Throws on an empty dataset.
inline std::vector<std::vector<double>> estimate_reference(const EpisodeDataset& data) {
  if (data.num_episodes == 0)
    throw std::invalid_argument("estimate_reference: empty reference dataset");
  std::vector<std::vector<double>> w(data.horizon, std::vector<double>(data.num_states, 0.0));
  for (int h = 0; h < data.horizon; ++h)
    for (int s = 0; s < data.num_states; ++s)
      w[h][s] = static_cast<double>(data.state_visits(h, s)) / static_cast<double>(data.num_episodes);
  return w;
}

/// Optional per-step 0/1 state masks for the difference recursion. masks[k]
/// (k = 0..H) multiplies the step-(k+1) difference vector; identity when the
/// container is empty.
using StateMasks = std::vector<std::vector<std::uint8_t>>;

/// Forward recursion for estimated visitation differences from a reference:
///   delta_1 = 0,
///   delta_{h+1} = M_{h+1} (P_h (pi_h - pibar_h) w_ref_h + P_h pi_h delta_h).
/// Returns H+1 state vectors (steps 1..H+1). With the true model, the true
/// reference visitations and identity masks, delta_h equals w^pi_h - w^pibar_h.
inline std::vector<std::vector<double>> delta_recursion(
    const TabularMdp& model, const Policy& pi, const Policy& pibar,
    const std::vector<std::vector<double>>& w_ref, const StateMasks& masks = {}) {
  const int S = model.num_states, H = model.horizon;
  if (static_cast<int>(w_ref.size()) != H)
    throw std::invalid_argument("delta_recursion: reference visitation size mismatch");
  if (!masks.empty() && static_cast<int>(masks.size()) != H + 1)
    throw std::invalid_argument("delta_recursion: need H+1 masks when provided");
  std::vector<std::vector<double>> delta(H + 1, std::vector<double>(S, 0.0));
  for (int h = 0; h < H; ++h) {
    std::vector<double> dir = lift_difference(model, pi, pibar, h, w_ref[h]);
    std::vector<double> carry = lift(model, pi, h, delta[h]);
    for (std::size_t i = 0; i < dir.size(); ++i) dir[i] += carry[i];
    delta[h + 1] = apply_transition(model, model.transitions[h], dir);
    if (!masks.empty())
      for (int s = 0; s < S; ++s)
        if (!masks[h + 1][s]) delta[h + 1][s] = 0.0;
  }
  return delta;
}

/// Estimated value difference V^pi - V^pibar from the difference recursion:
///   sum_h <r_h, pi_h delta_h> + <r_h, (pi_h - pibar_h) w_ref_h>.
/// Exact when every input is exact.
inline double estimate_value_difference(const TabularMdp& model, const Policy& pi,
                                        const Policy& pibar,
                                        const std::vector<std::vector<double>>& delta,
                                        const std::vector<std::vector<double>>& w_ref) {
  const int H = model.horizon;
  double total = 0.0;
  for (int h = 0; h < H; ++h) {
    std::vector<double> lifted = lift(model, pi, h, delta[h]);
    std::vector<double> diff = lift_difference(model, pi, pibar, h, w_ref[h]);
    const auto& r = model.reward_means[h];
    for (std::size_t i = 0; i < lifted.size(); ++i) total += r[i] * (lifted[i] + diff[i]);
  }
  return total;
}

/// V-hat = D-hat + mean reference return; an off-policy value estimate.
/// Pairwise differences D-hat^pi - D-hat^pi' estimate V^pi - V^pi'.
inline double off_policy_value(double d_hat, const EpisodeDataset& reference_data) {
  return d_hat + reference_data.mean_return();
}

/// Unit-constant evaluation of the two sufficient sample-size expressions:
///   K_mu   = max_pi sum_h H^2 ||phi^pi_h - phi^pibar_h||^2_{Lambda_h(mu)^-1} / max{eps^2, Delta(pi)^2}
///   K_pibar = max_pi U(pi, pibar) / max{eps^2, Delta(pi)^2}.
/// `mu_step_occupancies` are the exploration policy's per-step state-action
/// distributions. True-model diagnostic; the caller applies constants.
struct SampleSizePrescription {
  double exploration_episodes = 0.0;  // K_mu expression
  double reference_episodes = 0.0;    // K_pibar expression
};

inline SampleSizePrescription sufficient_sample_sizes(
    const TabularMdp& m, const PolicySet& policies, const Policy& pibar,
    const std::vector<std::vector<double>>& mu_step_occupancies, double eps) {
  if (static_cast<int>(mu_step_occupancies.size()) != m.horizon)
    throw std::invalid_argument("sufficient_sample_sizes: need one occupancy per step");
  GapProfile gaps = gap_profile(m, policies);
  VisitationProfile ref = forward_visitations(m, pibar);
  SampleSizePrescription out;
  for (std::size_t i = 0; i < policies.size(); ++i) {
    double denom = std::max(eps * eps, gaps.gaps[i] * gaps.gaps[i]);
    VisitationProfile vp = forward_visitations(m, policies[i]);
    double k_mu = 0.0;
    for (int h = 0; h < m.horizon; ++h) {
      double norm = 0.0;
      for (std::size_t k = 0; k < vp.state_action[h].size(); ++k) {
        double u = vp.state_action[h][k] - ref.state_action[h][k];
        if (u == 0.0) continue;
        double den = mu_step_occupancies[h][k];
        if (den <= 0.0) {
          norm = kInf;
          break;
        }
        norm += u * u / den;
      }
      k_mu += static_cast<double>(m.horizon) * m.horizon * norm;
    }
    out.exploration_episodes = std::max(out.exploration_episodes, k_mu / denom);
    out.reference_episodes =
        std::max(out.reference_episodes, q_disagreement(m, policies[i], pibar).total / denom);
  }
  return out;
}

// ---- trajectory log interface (JSON lines) ---------------------------------

/// One episode per line: {"policy":tag,"steps":[[s,a,r,s_next],...]}.
inline void write_episode_jsonl(std::ostream& os, const std::string& tag, const Episode& ep) {
  nlohmann::json steps = nlohmann::json::array();
  for (const Step& st : ep)
    steps.push_back(nlohmann::json::array({st.state, st.action, st.reward, st.next_state}));
  os << nlohmann::json{{"policy", tag}, {"steps", std::move(steps)}}.dump() << "\n";
}

/// Reads a JSONL trajectory log into a dataset (trajectories kept). All
/// episodes must share the dataset shape; the provenance tag records the
/// first policy tag seen.
inline EpisodeDataset read_episode_jsonl(std::istream& is, int S, int A, int H) {
  EpisodeDataset data = EpisodeDataset::empty(S, A, H);
  data.keep_episodes = true;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    if (data.num_episodes == 0) data.provenance = j.at("policy").get<std::string>();
    Episode ep;
    for (const auto& st : j.at("steps"))
      ep.push_back(Step{st.at(0).get<int>(), st.at(1).get<int>(), st.at(2).get<double>(),
                        st.at(3).get<int>()});
    data.add_episode(ep);
  }
  return data;
}

}  // namespace perp
