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

#ifndef HRLCAP_RNN_HPP_
#define HRLCAP_RNN_HPP_

#include "hrlcap/graph.hpp"

namespace hrlcap {

// Recurrent step functions over tape values. Gate weights are fused along
// columns: LSTM order (input, forget, output, candidate), GRU order
// (update, reset) plus a separate candidate block.

struct LstmVars {
  Value w_x;  // (input, 4H)
  Value w_h;  // (H, 4H)
  Value b;    // (1, 4H)
  int hidden = 0;
};

struct LstmStepOut {
  Value h, c;
};

inline LstmStepOut lstm_step(Tape& t, Value x, Value h_prev, Value c_prev,
                             const LstmVars& p) {
  int H = p.hidden;
  check(t.val(h_prev).cols == H && t.val(c_prev).cols == H,
        "lstm_step state width mismatch: h ", shape_str(t.val(h_prev)), ", c ",
        shape_str(t.val(c_prev)), ", hidden size ", H);
  Value z = t.add(t.add(t.matmul(x, p.w_x), t.matmul(h_prev, p.w_h)), p.b);
  Value i = t.sigmoid(t.slice(z, 0, 1, 0, H));
  Value f = t.sigmoid(t.slice(z, 0, 1, H, 2 * H));
  Value o = t.sigmoid(t.slice(z, 0, 1, 2 * H, 3 * H));
  Value g = t.tanh(t.slice(z, 0, 1, 3 * H, 4 * H));
  Value c = t.add(t.mul(f, c_prev), t.mul(i, g));
  Value h = t.mul(o, t.tanh(c));
  return {h, c};
}

struct GruVars {
  Value w_x_zr;  // (input, 2H)
  Value w_h_zr;  // (H, 2H)
  Value b_zr;    // (1, 2H)
  Value w_x_c;   // (input, H)
  Value w_h_c;   // (H, H)
  Value b_c;     // (1, H)
  int hidden = 0;
};

// h' = (1-z) h_prev + z * candidate, computed as h_prev + z (candidate - h_prev).
inline Value gru_step(Tape& t, Value x, Value h_prev, const GruVars& p) {
  int H = p.hidden;
  check(t.val(h_prev).cols == H, "gru_step state width mismatch: h ",
        shape_str(t.val(h_prev)), ", hidden size ", H);
  Value zr = t.sigmoid(t.add(t.add(t.matmul(x, p.w_x_zr), t.matmul(h_prev, p.w_h_zr)), p.b_zr));
  Value z = t.slice(zr, 0, 1, 0, H);
  Value r = t.slice(zr, 0, 1, H, 2 * H);
  Value cand =
      t.tanh(t.add(t.add(t.matmul(x, p.w_x_c), t.matmul(t.mul(r, h_prev), p.w_h_c)), p.b_c));
  return t.add(h_prev, t.mul(z, t.sub(cand, h_prev)));
}

}  // namespace hrlcap

#endif  // HRLCAP_RNN_HPP_
