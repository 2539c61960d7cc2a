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

#ifndef HRLCAP_ATTENTION_HPP_
#define HRLCAP_ATTENTION_HPP_

#include "hrlcap/graph.hpp"

namespace hrlcap {

// Additive alignment attention: e_i = w^T tanh(W_a h_i + U_a q + b_a),
// alpha = softmax(e), context = sum_i alpha_i h_i.

struct AttentionVars {
  Value w;    // (k, 1)
  Value w_a;  // (d_state, k)
  Value u_a;  // (d_query, k)
  Value b_a;  // (1, k)
};

// Per-decode cache: the state projection does not depend on the query, so it
// is computed once over the whole (n, d_state) matrix.
struct AttentionCache {
  Value states;  // (n, d_state)
  Value proj;    // (n, k)
  int frames = 0;
};

inline AttentionCache attention_cache(Tape& t, Value states, const AttentionVars& p) {
  int n = t.val(states).rows;
  check(n >= 1, "attention requires at least one encoder state");
  return {states, t.matmul(states, p.w_a), n};
}

inline Value attention_scores(Tape& t, Value query, const AttentionCache& cache,
                              const AttentionVars& p) {
  Value u = t.add(t.matmul(query, p.u_a), p.b_a);        // (1, k)
  Value s = t.tanh(t.add(cache.proj, u));                // (n, k)
  Value e = t.transpose(t.matmul(s, p.w));               // (1, n)
  return t.softmax(e);
}

inline Value attention_scores(Tape& t, Value query, Value states, const AttentionVars& p) {
  return attention_scores(t, query, attention_cache(t, states, p), p);
}

inline Value context_vector(Tape& t, Value alpha, Value states) {
  const Tensor& a = t.val(alpha);
  const Tensor& s = t.val(states);
  check(a.rows == 1 && a.cols == s.rows, "context_vector weight count ", shape_str(a),
        " does not match state count ", shape_str(s));
  return t.matmul(alpha, states);
}

}  // namespace hrlcap

#endif  // HRLCAP_ATTENTION_HPP_
