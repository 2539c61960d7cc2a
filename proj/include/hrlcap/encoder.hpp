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

#ifndef HRLCAP_ENCODER_HPP_
#define HRLCAP_ENCODER_HPP_

#include <vector>

#include "hrlcap/rnn.hpp"

namespace hrlcap {

// Two-stage video encoder: a linear input projection, a low-level Bi-LSTM
// whose per-direction states are concatenated per frame, then a high-level
// LSTM over the low-level outputs at stride 1. Initial states are zero.

struct EncoderVars {
  Value proj_w;  // (d_feat, proj)
  Value proj_b;  // (1, proj)
  LstmVars fwd;
  LstmVars bwd;
  LstmVars high;
};

struct EncoderOutputs {
  Value low;   // (n, 2 * low_hidden), forward || backward per frame
  Value high;  // (n, high_hidden)
  int frames = 0;
};

inline EncoderOutputs encode(Tape& t, Value features, const EncoderVars& p) {
  const Tensor& f = t.val(features);
  check(f.rows >= 1, "encode: empty feature sequence");
  int n = f.rows;
  Value x = t.add(t.matmul(features, p.proj_w), p.proj_b);  // (n, proj)
  int proj = t.val(x).cols;

  std::vector<Value> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = t.slice(x, i, i + 1, 0, proj);

  int L = p.fwd.hidden;
  std::vector<Value> fwd(n), bwd(n);
  {
    Value h = t.constant(Tensor::zeros(1, L));
    Value c = t.constant(Tensor::zeros(1, L));
    for (int i = 0; i < n; ++i) {
      auto out = lstm_step(t, rows[i], h, c, p.fwd);
      h = out.h;
      c = out.c;
      fwd[i] = h;
    }
  }
  {
    Value h = t.constant(Tensor::zeros(1, p.bwd.hidden));
    Value c = t.constant(Tensor::zeros(1, p.bwd.hidden));
    for (int i = n - 1; i >= 0; --i) {
      auto out = lstm_step(t, rows[i], h, c, p.bwd);
      h = out.h;
      c = out.c;
      bwd[i] = h;
    }
  }

  std::vector<Value> low_rows(n);
  for (int i = 0; i < n; ++i) low_rows[i] = t.concat(1, {fwd[i], bwd[i]});

  std::vector<Value> high_rows(n);
  {
    Value h = t.constant(Tensor::zeros(1, p.high.hidden));
    Value c = t.constant(Tensor::zeros(1, p.high.hidden));
    for (int i = 0; i < n; ++i) {
      auto out = lstm_step(t, low_rows[i], h, c, p.high);
      h = out.h;
      c = out.c;
      high_rows[i] = h;
    }
  }

  EncoderOutputs out;
  out.low = t.concat(0, std::span<const Value>(low_rows.data(), low_rows.size()));
  out.high = t.concat(0, std::span<const Value>(high_rows.data(), high_rows.size()));
  out.frames = n;
  return out;
}

}  // namespace hrlcap

#endif  // HRLCAP_ENCODER_HPP_
