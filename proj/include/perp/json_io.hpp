#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "perp/mdp.hpp"

namespace perp {

using nlohmann::json;

// MDP schema:
//   {"S":int,"A":int,"H":int,"initial_state":int,
//    "P":[h][s][a][s']:float,"r":[h][s][a]:float,
//    "reward_family":"bernoulli"|"point"}
// Doubles round-trip exactly (shortest-representation printing).

inline json to_json(const TabularMdp& m) {
  json P = json::array();
  json r = json::array();
  for (int h = 0; h < m.horizon; ++h) {
    json Ph = json::array(), rh = json::array();
    for (int s = 0; s < m.num_states; ++s) {
      json Ps = json::array(), rs = json::array();
      for (int a = 0; a < m.num_actions; ++a) {
        json row = json::array();
        for (int s2 = 0; s2 < m.num_states; ++s2) row.push_back(m.transition(h, s, a, s2));
        Ps.push_back(std::move(row));
        rs.push_back(m.reward(h, s, a));
      }
      Ph.push_back(std::move(Ps));
      rh.push_back(std::move(rs));
    }
    P.push_back(std::move(Ph));
    r.push_back(std::move(rh));
  }
  RewardKind kind = m.reward_kinds[0][0];
  for (const auto& tab : m.reward_kinds)
    for (RewardKind k : tab)
      if (k != kind) throw std::invalid_argument("mdp json: mixed reward families unsupported");
  return json{{"S", m.num_states},       {"A", m.num_actions},
              {"H", m.horizon},          {"initial_state", m.initial_state},
              {"P", std::move(P)},       {"r", std::move(r)},
              {"reward_family", kind == RewardKind::bernoulli ? "bernoulli" : "point"}};
}

inline TabularMdp mdp_from_json(const json& j) {
  TabularMdp m = TabularMdp::zeros(j.at("S").get<int>(), j.at("A").get<int>(),
                                   j.at("H").get<int>(), j.at("initial_state").get<int>());
  const std::string fam = j.at("reward_family").get<std::string>();
  if (fam != "bernoulli" && fam != "point")
    throw std::invalid_argument("mdp json: unknown reward_family '" + fam + "'");
  RewardKind kind = fam == "bernoulli" ? RewardKind::bernoulli : RewardKind::point;
  const json& P = j.at("P");
  const json& r = j.at("r");
  for (int h = 0; h < m.horizon; ++h) {
    for (int s = 0; s < m.num_states; ++s) {
      for (int a = 0; a < m.num_actions; ++a) {
        for (int s2 = 0; s2 < m.num_states; ++s2)
          m.transitions[h][(static_cast<std::size_t>(s) * m.num_actions + a) * m.num_states + s2] =
              P.at(h).at(s).at(a).at(s2).get<double>();
        m.reward_means[h][m.sa(s, a)] = r.at(h).at(s).at(a).get<double>();
        m.reward_kinds[h][m.sa(s, a)] = kind;
      }
    }
  }
  validate(m);
  return m;
}

// Policy schema: {"kind":"det","rules":[h][s]:int}
//            or  {"kind":"stoch","rules":[h][s][a]:float}

inline json to_json(const Policy& p) {
  if (p.deterministic()) return json{{"kind", "det"}, {"rules", p.actions}};
  return json{{"kind", "stoch"}, {"rules", p.probs}};
}

inline Policy policy_from_json(const json& j) {
  Policy p;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "det") {
    p.kind = Policy::Kind::deterministic;
    p.actions = j.at("rules").get<std::vector<std::vector<int>>>();
  } else if (kind == "stoch") {
    p.kind = Policy::Kind::stochastic;
    p.probs = j.at("rules").get<std::vector<std::vector<double>>>();
  } else {
    throw std::invalid_argument("policy json: unknown kind '" + kind + "'");
  }
  return p;
}

inline json to_json(const PolicySet& ps) {
  json arr = json::array();
  for (const auto& p : ps) arr.push_back(to_json(p));
  return arr;
}

inline PolicySet policy_set_from_json(const json& j) {
  PolicySet out;
  for (const auto& e : j) out.push_back(policy_from_json(e));
  return out;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  in >> j;
  return j;
}

inline void save_json_file(const std::string& path, const json& j, int indent = 2) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(indent) << "\n";
}

}  // namespace perp
