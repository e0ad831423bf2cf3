#pragma once

#include <algorithm>
#include <cmath>

#include "hymarl/graph.hpp"
#include "hymarl/optim.hpp"
#include "hymarl/params.hpp"

namespace hymarl {

/// Compares backward() against central finite differences for a scalar loss
/// built by `build_loss(graph, params)`. Returns the max relative error over
/// every parameter element, with denominator max(|analytic|,|numeric|,1e-8).
/// The loss builder must be pure: same params, same scalar.
template <class T, class F>
double finite_diff_check(ParamStore<T>& ps, F build_loss, double eps = 1e-5) {
  Graph<T> g;
  NodeRef<T> loss = build_loss(g, ps);
  g.backward(loss);
  GradVec<T> analytic = g.grads_for(ps);

  auto eval = [&]() {
    Graph<T> h;
    return static_cast<double>(h.value(build_loss(h, ps)).data[0]);
  };

  double max_rel = 0;
  for (int i = 0; i < ps.size(); ++i) {
    auto& data = ps.at(i).data;
    for (std::size_t k = 0; k < data.size(); ++k) {
      T saved = data[k];
      data[k] = static_cast<T>(saved + eps);
      double fp = eval();
      data[k] = static_cast<T>(saved - eps);
      double fm = eval();
      data[k] = saved;
      double numeric = (fp - fm) / (2.0 * eps);
      double a = static_cast<double>(analytic[i].data[k]);
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace hymarl
