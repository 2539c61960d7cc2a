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

#ifndef HRLCAP_AGENT_HPP_
#define HRLCAP_AGENT_HPP_

#include <algorithm>
#include <array>
#include <utility>
#include <vector>

#include "hrlcap/model.hpp"

namespace hrlcap {

// Gaussian goal exploration: g' = g + eps, eps ~ N(0, sigma^2 I).
inline Tensor explore_goal(const Tensor& g, double sigma, Pcg32& rng) {
  check(sigma >= 0.0, "exploration sigma must be nonnegative, got ", sigma);
  if (sigma == 0.0) return g;
  Tensor out = g;
  for (double& x : out.v) x += sigma * rng.next_gaussian();
  return out;
}

struct StepOptions {
  Mode mode = Mode::kEval;
  double dropout = 0.0;
  Pcg32* rng = nullptr;  // dropout masks in train mode
};

// The decoder's running state: Worker and Manager LSTM states, the Critic's
// GRU state, the active goal, and the emission history.
struct AgentState {
  Value h_w, c_w, h_m, c_m, h_i, goal;
  int prev_token = kBos;
  bool manager_due = true;  // a goal must be emitted before the next word
  std::vector<int> tokens;
  std::vector<std::uint8_t> boundaries;  // z_t per emitted token
  int segment_index() const {
    int s = 0;
    for (std::uint8_t z : boundaries) s += z ? 1 : 0;
    return s;
  }
};

// Converts per-token boundary flags into half-open token-index ranges; a
// trailing unterminated segment (max-length truncation) is closed at the end.
inline std::vector<std::pair<int, int>> segments_from_boundaries(
    const std::vector<std::uint8_t>& z) {
  std::vector<std::pair<int, int>> segs;
  int start = 0;
  for (int t = 0; t < static_cast<int>(z.size()); ++t) {
    if (z[t]) {
      segs.push_back({start, t + 1});
      start = t + 1;
    }
  }
  if (start < static_cast<int>(z.size())) segs.push_back({start, static_cast<int>(z.size())});
  return segs;
}

// One video's decoding context: encoder outputs plus cached attention
// projections shared by every step (and every beam hypothesis).
class AgentCtx {
 public:
  AgentCtx(Tape& tape, const Binding& bind, const ModelConfig& cfg, EncoderOutputs enc,
           StepOptions opts = {})
      : t_(tape), b_(bind), cfg_(cfg), enc_(enc), opts_(opts) {
    cache_w_ = attention_cache(t_, enc_.low, b_.attn_w);
    cache_m_ = attention_cache(t_, enc_.high, b_.attn_m);
  }

  AgentState initial_state() {
    AgentState s;
    s.h_w = t_.constant(Tensor::zeros(1, cfg_.worker_hidden));
    s.c_w = t_.constant(Tensor::zeros(1, cfg_.worker_hidden));
    s.h_m = t_.constant(Tensor::zeros(1, cfg_.manager_hidden));
    s.c_m = t_.constant(Tensor::zeros(1, cfg_.manager_hidden));
    s.h_i = t_.constant(Tensor::zeros(1, cfg_.critic_hidden));
    s.prev_token = kBos;
    s.manager_due = true;
    return s;
  }

  // Manager: attends over the high-level states with query h^M_{t-1}, steps
  // its LSTM on [c^M, h^W_{t-1}], and projects the new hidden state to a
  // goal. Legal only at t=1 or right after an end-of-segment signal.
  void manager_step(AgentState& s, double explore_sigma = 0.0, Pcg32* explore_rng = nullptr,
                    Tensor* attn_out = nullptr) {
    check(s.manager_due, "manager_step called mid-segment");
    Value alpha = attention_scores(t_, s.h_m, cache_m_, b_.attn_m);
    if (attn_out) *attn_out = t_.val(alpha);
    Value c_m = context_vector(t_, alpha, cache_m_.states);
    auto out = lstm_step(t_, t_.concat(1, {c_m, s.h_w}), s.h_m, s.c_m, b_.manager);
    s.h_m = out.h;
    s.c_m = out.c;
    Value h = maybe_dropout(s.h_m);
    s.goal = t_.add(t_.matmul(h, b_.goal_w), b_.goal_b);
    if (explore_rng != nullptr && explore_sigma > 0.0) {
      Tensor eps(1, cfg_.goal_dim);
      for (double& x : eps.v) x = explore_sigma * explore_rng->next_gaussian();
      s.goal = t_.add(s.goal, t_.constant(std::move(eps)));
    }
    s.manager_due = false;
  }

  // Worker: attends over the low-level states with query h^W_{t-1}, steps its
  // LSTM on [c^W, g, embedding(prev token)], and returns pi over the
  // vocabulary.
  Value worker_step(AgentState& s, int prev_token, Tensor* attn_out = nullptr) {
    check(!s.manager_due, "worker_step called without an active goal");
    check(prev_token >= 0 && prev_token < cfg_.vocab_size, "worker_step: token id ",
          prev_token, " outside vocabulary of size ", cfg_.vocab_size);
    Value alpha = attention_scores(t_, s.h_w, cache_w_, b_.attn_w);
    if (attn_out) *attn_out = t_.val(alpha);
    Value c_w = context_vector(t_, alpha, cache_w_.states);
    Value emb = maybe_dropout(t_.embed(b_.embed, prev_token));
    auto out = lstm_step(t_, t_.concat(1, {c_w, s.goal, emb}), s.h_w, s.c_w, b_.worker);
    s.h_w = out.h;
    s.c_w = out.c;
    Value h = maybe_dropout(s.h_w);
    Value inner = t_.tanh(t_.add(t_.matmul(h, b_.wproj1_w), b_.wproj1_b));
    Value logits = t_.add(t_.matmul(inner, b_.wproj2_w), b_.wproj2_b);
    return t_.softmax(logits);
  }

  // Critic: advances its GRU on the emitted token's own embedding and returns
  // the end-of-segment probability.
  Value critic_step(AgentState& s, int token) {
    check(token >= 0 && token < cfg_.vocab_size, "critic_step: token id ", token,
          " outside vocabulary of size ", cfg_.vocab_size);
    Value emb = t_.embed(b_.critic_embed, token);
    s.h_i = gru_step(t_, emb, s.h_i, b_.critic);
    return t_.sigmoid(t_.add(t_.matmul(s.h_i, b_.critic_out_w), b_.critic_out_b));
  }

  Tape& tape() { return t_; }
  const Binding& binding() const { return b_; }
  const ModelConfig& config() const { return cfg_; }
  int frames() const { return enc_.frames; }

 private:
  Value maybe_dropout(Value v) {
    if (opts_.mode == Mode::kTrain && opts_.dropout > 0.0 && opts_.rng != nullptr)
      return dropout(t_, v, opts_.dropout, Mode::kTrain, *opts_.rng);
    return v;
  }

  Tape& t_;
  const Binding& b_;
  ModelConfig cfg_;
  EncoderOutputs enc_;
  StepOptions opts_;
  AttentionCache cache_w_, cache_m_;
};

// ---------------------------------------------------------------------------
// Inference.

enum class DecodeMode { kGreedy, kSample, kBeam };

struct DecodeOptions {
  DecodeMode mode = DecodeMode::kGreedy;
  int beam = 1;
  std::uint64_t seed = 0;      // sample mode
  int max_len = 0;             // 0 -> model config
  bool length_norm = false;    // beam scoring: divide by caption length
  bool collect_attention = false;
  bool collect_top5 = false;
};

struct TokenProb {
  int token = 0;
  double prob = 0.0;
};

struct DecodeResult {
  std::vector<int> tokens;  // includes the end token when emitted
  std::vector<std::pair<int, int>> segments;
  double log_prob = 0.0;
  std::vector<std::array<TokenProb, 5>> top5;        // per step, when requested
  std::vector<Tensor> worker_attn;                   // per step (1,n)
  std::vector<int> worker_attn_segment;              // segment index per step
  std::vector<Tensor> manager_attn;                  // per goal emission
  std::vector<int> manager_attn_step;                // step of each goal emission
};

namespace detail {

inline std::array<TokenProb, 5> top5_of(const Tensor& pi) {
  std::vector<TokenProb> all(pi.cols);
  for (int v = 0; v < pi.cols; ++v) all[v] = {v, pi.v[v]};
  std::sort(all.begin(), all.end(), [](const TokenProb& a, const TokenProb& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    return a.token < b.token;
  });
  std::array<TokenProb, 5> out{};
  for (int i = 0; i < 5 && i < pi.cols; ++i) out[i] = all[i];
  return out;
}

inline int argmax_token(const Tensor& pi) {
  int best = 0;
  for (int v = 1; v < pi.cols; ++v)
    if (pi.v[v] > pi.v[best]) best = v;
  return best;
}

inline int sample_token(const Tensor& pi, Pcg32& rng) {
  double u = rng.next_double();
  double acc = 0.0;
  for (int v = 0; v < pi.cols; ++v) {
    acc += pi.v[v];
    if (u < acc) return v;
  }
  return pi.cols - 1;
}

}  // namespace detail

// Greedy and ancestral-sampling decoding (single hypothesis). Goal
// exploration is disabled at decode time.
inline DecodeResult decode_sequential(AgentCtx& ctx, DecodeMode mode, std::uint64_t seed,
                                      int max_len, const DecodeOptions& opts) {
  Pcg32 rng = make_rng(seed, /*salt=*/0xDEC);
  Tape& t = ctx.tape();
  DecodeResult res;
  AgentState s = ctx.initial_state();
  for (int step = 0; step < max_len; ++step) {
    if (s.manager_due) {
      Tensor mattn;
      ctx.manager_step(s, 0.0, nullptr, opts.collect_attention ? &mattn : nullptr);
      if (opts.collect_attention) {
        res.manager_attn.push_back(std::move(mattn));
        res.manager_attn_step.push_back(step);
      }
    }
    Tensor wattn;
    Value pi = ctx.worker_step(s, s.prev_token, opts.collect_attention ? &wattn : nullptr);
    if (opts.collect_attention) {
      res.worker_attn.push_back(std::move(wattn));
      res.worker_attn_segment.push_back(s.segment_index());
    }
    const Tensor& p = t.val(pi);
    int token = (mode == DecodeMode::kSample) ? detail::sample_token(p, rng)
                                              : detail::argmax_token(p);
    res.log_prob += std::log(std::max(p.v[token], 1e-300));
    if (opts.collect_top5) res.top5.push_back(detail::top5_of(p));
    Value pz = ctx.critic_step(s, token);
    bool z = t.val(pz).v[0] > 0.5;
    if (token == kEos) z = true;  // end of sentence closes the final segment
    s.tokens.push_back(token);
    s.boundaries.push_back(z ? 1 : 0);
    s.prev_token = token;
    s.manager_due = z;
    if (token == kEos) break;
  }
  res.tokens = s.tokens;
  res.segments = segments_from_boundaries(s.boundaries);
  return res;
}

// Beam search. Hypotheses carry full independent decoder states; scoring is
// the sum of token log-probabilities (optionally length-normalized).
inline DecodeResult decode_beam(AgentCtx& ctx, int beam, int max_len,
                                const DecodeOptions& opts) {
  check(beam >= 1, "beam width must be >= 1, got ", beam);
  Tape& t = ctx.tape();

  struct Hyp {
    AgentState state;
    double logp = 0.0;
    std::vector<std::array<TokenProb, 5>> top5;
    std::vector<Tensor> wattn;
    std::vector<int> wattn_seg;
    std::vector<Tensor> mattn;
    std::vector<int> mattn_step;
  };

  std::vector<Hyp> live(1);
  live[0].state = ctx.initial_state();
  std::vector<Hyp> done;

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    struct Cand {
      double score;
      int hyp;
      int token;
    };
    std::vector<Cand> cands;
    std::vector<Value> pis(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      AgentState& s = live[h].state;
      if (s.manager_due) {
        Tensor mattn;
        ctx.manager_step(s, 0.0, nullptr, opts.collect_attention ? &mattn : nullptr);
        if (opts.collect_attention) {
          live[h].mattn.push_back(std::move(mattn));
          live[h].mattn_step.push_back(step);
        }
      }
      Tensor wattn;
      pis[h] = ctx.worker_step(s, s.prev_token, opts.collect_attention ? &wattn : nullptr);
      if (opts.collect_attention) {
        live[h].wattn.push_back(std::move(wattn));
        live[h].wattn_seg.push_back(s.segment_index());
      }
      const Tensor& p = t.val(pis[h]);
      for (int v = 0; v < p.cols; ++v)
        cands.push_back({live[h].logp + std::log(std::max(p.v[v], 1e-300)), static_cast<int>(h), v});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.token != b.token) return a.token < b.token;
      return a.hyp < b.hyp;
    });

    std::vector<Hyp> next;
    int selected = 0;
    for (const Cand& c : cands) {
      if (selected >= beam) break;
      ++selected;
      Hyp child = live[c.hyp];
      AgentState& s = child.state;
      const Tensor& p = t.val(pis[c.hyp]);
      child.logp = c.score;
      if (opts.collect_top5) child.top5.push_back(detail::top5_of(p));
      Value pz = ctx.critic_step(s, c.token);
      bool z = t.val(pz).v[0] > 0.5;
      if (c.token == kEos) z = true;
      s.tokens.push_back(c.token);
      s.boundaries.push_back(z ? 1 : 0);
      s.prev_token = c.token;
      s.manager_due = z;
      if (c.token == kEos) {
        done.push_back(std::move(child));
      } else {
        next.push_back(std::move(child));
      }
    }
    live = std::move(next);
  }

  for (Hyp& h : live) done.push_back(std::move(h));  // max-length truncations
  check(!done.empty(), "beam search produced no hypotheses");
  auto score = [&](const Hyp& h) {
    if (!opts.length_norm || h.state.tokens.empty()) return h.logp;
    return h.logp / static_cast<double>(h.state.tokens.size());
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < done.size(); ++i)
    if (score(done[i]) > score(done[best])) best = i;

  Hyp& win = done[best];
  DecodeResult res;
  res.tokens = win.state.tokens;
  res.segments = segments_from_boundaries(win.state.boundaries);
  res.log_prob = win.logp;
  res.top5 = std::move(win.top5);
  res.worker_attn = std::move(win.wattn);
  res.worker_attn_segment = std::move(win.wattn_seg);
  res.manager_attn = std::move(win.mattn);
  res.manager_attn_step = std::move(win.mattn_step);
  return res;
}

inline DecodeResult decode(const Model& model, const Tensor& features,
                           const DecodeOptions& opts = {}) {
  Tape tape;
  Binding bind(tape, model);
  Value feats = tape.constant(features);
  EncoderOutputs enc = encode(tape, feats, bind.enc);
  AgentCtx ctx(tape, bind, model.cfg, enc);
  int max_len = opts.max_len > 0 ? opts.max_len : model.cfg.max_len;
  check(max_len > 0, "decode: max length must be positive");
  if (opts.mode == DecodeMode::kBeam) return decode_beam(ctx, opts.beam, max_len, opts);
  return decode_sequential(ctx, opts.mode, opts.seed, max_len, opts);
}

}  // namespace hrlcap

#endif  // HRLCAP_AGENT_HPP_
