/*
 * Copyright 2026 The hrlcap Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef HRLCAP_OPTIM_HPP_
#define HRLCAP_OPTIM_HPP_

#include <cmath>
#include <map>
#include <string>

#include "hrlcap/common.hpp"
#include "hrlcap/graph.hpp"
#include "hrlcap/random.hpp"
#include "hrlcap/tensor.hpp"

namespace hrlcap {

using ParamMap = std::map<std::string, Tensor>;
using NamedGrads = std::map<std::string, Tensor>;

inline Tensor uniform_init(int rows, int cols, double bound, Pcg32& rng) {
  check(bound > 0.0, "uniform_init bound must be positive, got ", bound);
  Tensor t(rows, cols);
  for (double& x : t.v) x = rng.uniform(-bound, bound);
  return t;
}

inline Tensor uniform_init(int rows, int cols, double bound, std::uint64_t seed) {
  Pcg32 rng = make_rng(seed);
  return uniform_init(rows, cols, bound, rng);
}

inline void clip_gradients(Tensor& g, double bound) {
  check(bound > 0.0, "clip bound must be positive, got ", bound);
  for (double& x : g.v) {
    if (x > bound) x = bound;
    else if (x < -bound) x = -bound;
  }
}

template <typename Key>
std::map<Key, Tensor> clip_gradients(std::map<Key, Tensor> grads, double bound) {
  for (auto& [key, g] : grads) clip_gradients(g, bound);
  return grads;
}

// Adadelta (Zeiler). The paper names only the optimizer; rho/eps are the
// customary constants. Accumulators live per parameter name so a frozen
// parameter's state is untouched until it is updated again.
struct AdadeltaState {
  double rho = 0.95;
  double eps = 1e-6;
  double lr_scale = 1.0;
  ParamMap sq_grad;    // E[g^2]
  ParamMap sq_update;  // E[dx^2]
};

inline void adadelta_step(ParamMap& params, const NamedGrads& grads, AdadeltaState& state) {
  check(state.rho > 0.0 && state.rho < 1.0, "adadelta rho must lie in (0,1), got ", state.rho);
  check(state.eps > 0.0, "adadelta eps must be positive, got ", state.eps);
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    check(it != params.end(), "adadelta_step: unknown parameter ", name);
    Tensor& p = it->second;
    check(p.same_shape(g), "adadelta_step: grad shape ", shape_str(g),
          " does not match parameter ", name, " ", shape_str(p));
    Tensor& eg = state.sq_grad.try_emplace(name, Tensor::zeros(p.rows, p.cols)).first->second;
    Tensor& ed = state.sq_update.try_emplace(name, Tensor::zeros(p.rows, p.cols)).first->second;
    for (int i = 0; i < p.size(); ++i) {
      double gi = g.v[i];
      eg.v[i] = state.rho * eg.v[i] + (1.0 - state.rho) * gi * gi;
      double delta = -std::sqrt(ed.v[i] + state.eps) / std::sqrt(eg.v[i] + state.eps) * gi *
                     state.lr_scale;
      ed.v[i] = state.rho * ed.v[i] + (1.0 - state.rho) * delta * delta;
      p.v[i] += delta;
    }
  }
}

}  // namespace hrlcap

#endif  // HRLCAP_OPTIM_HPP_
