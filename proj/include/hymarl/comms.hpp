#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "hymarl/rng.hpp"
#include "hymarl/tensor.hpp"

namespace hymarl {

// Communication layer: who sees whose observation, and with what probability.
// A matrix holds link probabilities p_ij; a mask is one Bernoulli realization
// per step. Own observations always flow (unit diagonal), and every episode
// opens with one fully connected step.

enum class CommKind { fixed, default_uniform, asymmetric, dynamic };

struct CommScheme {
  CommKind kind = CommKind::fixed;
  double p = 1.0;       // fixed only
  int interval = 5;     // dynamic only

  static CommScheme fixed_p(double p) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("comm probability outside [0,1]");
    return {CommKind::fixed, p, 5};
  }

  /// Parses "fixed:<p>", "default", "asymmetric", "dynamic:<interval>".
  static CommScheme parse(const std::string& s) {
    if (s.rfind("fixed:", 0) == 0) return fixed_p(std::stod(s.substr(6)));
    if (s == "default") return {CommKind::default_uniform, 0.0, 5};
    if (s == "asymmetric") return {CommKind::asymmetric, 0.0, 5};
    if (s.rfind("dynamic", 0) == 0) {
      CommScheme c{CommKind::dynamic, 0.0, 5};
      if (s.size() > 8 && s[7] == ':') c.interval = std::stoi(s.substr(8));
      if (c.interval < 1) throw std::invalid_argument("dynamic interval must be >= 1");
      return c;
    }
    throw std::invalid_argument("unknown comm scheme: " + s);
  }

  std::string str() const {
    switch (kind) {
      case CommKind::fixed: return "fixed:" + std::to_string(p);
      case CommKind::default_uniform: return "default";
      case CommKind::asymmetric: return "asymmetric";
      case CommKind::dynamic: return "dynamic:" + std::to_string(interval);
    }
    return "?";
  }
};

struct CommMatrix {
  int n = 0;
  std::vector<double> p;  // row-major n*n

  double at(int i, int j) const { return p[static_cast<std::size_t>(i) * n + j]; }
  double& at(int i, int j) { return p[static_cast<std::size_t>(i) * n + j]; }
};

struct CommMask {
  int n = 0;
  std::vector<unsigned char> v;  // row-major n*n; (i,j) true = i receives j

  bool at(int i, int j) const { return v[static_cast<std::size_t>(i) * n + j] != 0; }
  static CommMask all_true(int n) {
    return {n, std::vector<unsigned char>(static_cast<std::size_t>(n) * n, 1)};
  }
  bool operator==(const CommMask&) const = default;
};

inline CommMatrix sample_matrix(const CommScheme& scheme, int n, SplitRng& rng) {
  if (n < 1) throw std::invalid_argument("sample_matrix: n must be >= 1");
  CommMatrix m{n, std::vector<double>(static_cast<std::size_t>(n) * n, 1.0)};
  switch (scheme.kind) {
    case CommKind::fixed:
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (i != j) m.at(i, j) = scheme.p;
      break;
    case CommKind::default_uniform: {
      double p = rng.uniform01();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (i != j) m.at(i, j) = p;
      break;
    }
    case CommKind::asymmetric:
    case CommKind::dynamic:
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (i != j) m.at(i, j) = rng.uniform01();
      break;
  }
  return m;
}

/// Episode matrices are fixed except under the dynamic scheme, which redraws
/// every `interval` steps (t = interval, 2*interval, ...).
inline CommMatrix maybe_resample(const CommScheme& scheme, int t, const CommMatrix& current,
                                 SplitRng& rng) {
  if (scheme.kind == CommKind::dynamic && t > 0 && t % scheme.interval == 0)
    return sample_matrix(scheme, current.n, rng);
  return current;
}

inline CommMask draw_mask(const CommMatrix& c, int t, SplitRng& rng) {
  if (t == 0) return CommMask::all_true(c.n);
  CommMask m{c.n, std::vector<unsigned char>(static_cast<std::size_t>(c.n) * c.n, 0)};
  for (int i = 0; i < c.n; ++i)
    for (int j = 0; j < c.n; ++j)
      m.v[static_cast<std::size_t>(i) * c.n + j] =
          (i == j || rng.bernoulli(c.at(i, j))) ? 1 : 0;
  return m;
}

/// Agent i's slice of the joint observation after masking: present slots hold
/// the true vector, absent ones are empty; `present` mirrors mask row i.
struct SharedView {
  std::vector<std::vector<double>> obs;  // empty vector = absent
  std::vector<bool> present;
};

inline SharedView shared_view(const std::vector<std::vector<double>>& joint_obs, const CommMask& mask,
                              int agent) {
  if (agent < 0 || agent >= mask.n || static_cast<int>(joint_obs.size()) != mask.n)
    throw std::out_of_range("shared_view: bad agent index or joint size");
  SharedView v;
  v.obs.resize(joint_obs.size());
  v.present.resize(joint_obs.size());
  for (int j = 0; j < mask.n; ++j) {
    bool has = mask.at(agent, j);
    v.present[j] = has;
    if (has) v.obs[j] = joint_obs[j];
  }
  return v;
}

}  // namespace hymarl
