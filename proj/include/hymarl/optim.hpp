#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hymarl/params.hpp"
#include "hymarl/tensor.hpp"

namespace hymarl {

template <class T>
using GradVec = std::vector<Tensor<T>>;

template <class T>
double global_norm(const std::vector<const GradVec<T>*>& grad_sets) {
  double ss = 0;
  for (const GradVec<T>* gs : grad_sets)
    for (const Tensor<T>& g : *gs)
      for (T v : g.data) ss += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(ss);
}

/// Scales all gradients by max_norm/norm when the joint L2 norm exceeds
/// max_norm. Idempotent: a clipped set is at the threshold already.
template <class T>
double clip_global_norm(std::vector<GradVec<T>*> grad_sets, double max_norm) {
  if (max_norm <= 0) throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
  std::vector<const GradVec<T>*> view(grad_sets.begin(), grad_sets.end());
  double norm = global_norm<T>(view);
  if (norm > max_norm) {
    double s = max_norm / norm;
    for (GradVec<T>* gs : grad_sets)
      for (Tensor<T>& g : *gs)
        for (T& v : g.data) v = static_cast<T>(v * s);
  }
  return norm;
}

template <class T>
double clip_global_norm(GradVec<T>& grads, double max_norm) {
  return clip_global_norm<T>({&grads}, max_norm);
}

template <class T>
struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor<T>> m, v;

  static AdamState for_store(const ParamStore<T>& ps) {
    AdamState s;
    for (int i = 0; i < ps.size(); ++i) {
      s.m.push_back(Tensor<T>::zeros(ps.at(i).shape));
      s.v.push_back(Tensor<T>::zeros(ps.at(i).shape));
    }
    return s;
  }
};

/// One Adam update (β1=0.9, β2=0.999, ε=1e-8, bias-corrected) in place.
template <class T>
void adam_step(ParamStore<T>& ps, const GradVec<T>& grads, AdamState<T>& st, double lr) {
  if (static_cast<int>(grads.size()) != ps.size() || grads.size() != st.m.size())
    throw std::invalid_argument("adam_step: grad/state size mismatch");
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  st.step += 1;
  double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (int i = 0; i < ps.size(); ++i) {
    Tensor<T>& p = ps.at(i);
    require_same_shape(p, grads[i], "adam_step");
    auto& m = st.m[i].data;
    auto& v = st.v[i].data;
    const auto& g = grads[i].data;
    for (std::size_t k = 0; k < g.size(); ++k) {
      double gk = static_cast<double>(g[k]);
      double mk = b1 * static_cast<double>(m[k]) + (1.0 - b1) * gk;
      double vk = b2 * static_cast<double>(v[k]) + (1.0 - b2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      double update = lr * (mk / bc1) / (std::sqrt(vk / bc2) + eps);
      p.data[k] = static_cast<T>(static_cast<double>(p.data[k]) - update);
    }
  }
}

}  // namespace hymarl
