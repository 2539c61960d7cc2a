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

#ifndef HRLCAP_TRAINING_HPP_
#define HRLCAP_TRAINING_HPP_

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hrlcap/agent.hpp"
#include "hrlcap/dataset.hpp"
#include "hrlcap/rewards.hpp"
#include "hrlcap/vocab.hpp"

namespace hrlcap {

struct TrainConfig {
  int batch = 64;
  double clip = 10.0;
  double dropout = 0.5;
  double rho = 0.95;
  double eps = 1e-6;
  double xe_lr = 1.0;
  double rl_lr = 0.1;
  int lr_patience = 4;
  double lr_factor = 0.5;
  int ss_ramp_epochs = 20;
  double ss_max = 0.25;
  double gamma = 0.95;
  double sigma = 0.1;
  bool rl_update_encoders = true;
  int xe_epochs = 20;
  int hrl_epochs = 10;
  std::string schedule = "W:1,M:1";
  int critic_epochs = 10;
  int max_len = 30;
  int max_frames = 50;
  std::uint64_t seed = 1;
  int checkpoint_every = 1;
};

// ---------------------------------------------------------------------------
// Prepared training data: features in memory, targets encoded, critic labels
// attached, references tokenized.

struct TrainVideo {
  std::string id;
  Tensor features;
  std::vector<int> target;             // encoded words of the training caption
  std::vector<std::uint8_t> ztargets;  // per-token boundary labels + eos slot
  RefSet refs;
};

struct PreparedData {
  std::vector<TrainVideo> train, val;
  Vocabulary vocab;
  IdfTable idf;  // built from the training-split references only
};

enum class ChunkPolicy { kRequired, kHeuristicFallback, kUnused };

inline std::vector<TrainVideo> prepare_split(const DatasetManifest& m, const Vocabulary& vocab,
                                             const TrainConfig& cfg, ChunkPolicy chunk_policy) {
  std::vector<TrainVideo> out;
  out.reserve(m.records.size());
  for (const VideoRecord& r : m.records) {
    TrainVideo v;
    v.id = r.video_id;
    v.features = read_features(m.resolve_features(r));
    if (v.features.rows > cfg.max_frames) {
      Tensor cut(cfg.max_frames, v.features.cols);
      std::copy(v.features.v.begin(),
                v.features.v.begin() + static_cast<std::size_t>(cfg.max_frames) * v.features.cols,
                cut.v.begin());
      v.features = std::move(cut);
    }
    for (const std::string& ref : r.references) v.refs.push_back(tokenize(ref));
    TokenList words = v.refs[0];
    check(!words.empty(), "record ", r.video_id, " has an empty training caption");
    ChunkRanges chunks;
    if (!r.chunks.empty() && !r.chunks[0].empty()) {
      chunks = r.chunks[0];
    } else if (chunk_policy == ChunkPolicy::kHeuristicFallback) {
      chunks = heuristic_chunks(words);
    } else if (chunk_policy == ChunkPolicy::kRequired) {
      fail("record ", r.video_id, " carries no chunk annotations (required here)");
    }
    int len = static_cast<int>(words.size());
    std::vector<std::uint8_t> z;
    if (!chunks.empty())
      z = segment_targets(len, chunks);
    else
      z.assign(len + 1, 0), z[len] = 1;
    // truncate to the caption limit, keeping one slot for <eos>
    int keep = std::min(len, cfg.max_len - 1);
    if (keep < len) {
      std::fprintf(stderr, "warning: caption of %s truncated from %d to %d tokens\n",
                   r.video_id.c_str(), len, keep);
      words.resize(keep);
      z.resize(keep + 1);
      z[keep] = 1;
    }
    v.target = vocab.encode(words);
    v.ztargets = std::move(z);
    out.push_back(std::move(v));
  }
  return out;
}

inline IdfTable idf_from_manifest(const DatasetManifest& m) {
  std::vector<RefSet> refs_by_video;
  for (const VideoRecord& r : m.records) {
    RefSet refs;
    for (const std::string& s : r.references) refs.push_back(tokenize(s));
    refs_by_video.push_back(std::move(refs));
  }
  return IdfTable::build(refs_by_video);
}

inline PreparedData prepare_data(const DatasetManifest& train, const DatasetManifest& val,
                                 const Vocabulary& vocab, const TrainConfig& cfg,
                                 ChunkPolicy chunk_policy = ChunkPolicy::kHeuristicFallback) {
  PreparedData d;
  d.vocab = vocab;
  d.train = prepare_split(train, vocab, cfg, chunk_policy);
  d.val = prepare_split(val, vocab, cfg, ChunkPolicy::kUnused);
  d.idf = idf_from_manifest(train);
  return d;
}

// ---------------------------------------------------------------------------
// Cross-entropy imitation (warm start). The Manager is latent: it is stepped
// by the ground-truth chunk gating and trained end-to-end through the loss.

struct XeLossOut {
  Value loss;  // sum of per-token losses for one video
  int tokens = 0;
};

inline XeLossOut xe_loss_for_video(AgentCtx& ctx, const TrainVideo& v, double tf_prob,
                                   Pcg32* rng) {
  Tape& t = ctx.tape();
  AgentState s = ctx.initial_state();
  Value total = t.scalar(0.0);
  int fed = kBos;
  int steps = static_cast<int>(v.target.size()) + 1;  // words + <eos>
  for (int i = 0; i < steps; ++i) {
    int target = (i < static_cast<int>(v.target.size())) ? v.target[i] : kEos;
    if (s.manager_due) ctx.manager_step(s);
    Value pi = ctx.worker_step(s, fed);
    total = t.add(total, t.neg(t.log(t.slice(pi, 0, 1, target, target + 1))));
    bool feed_truth = true;
    if (rng != nullptr && tf_prob < 1.0) feed_truth = rng->next_double() < tf_prob;
    fed = feed_truth ? target : detail::sample_token(t.val(pi), *rng);
    s.manager_due = v.ztargets[i] != 0;
  }
  return {total, steps};
}

// One minibatch update; returns the mean per-token loss.
inline double xe_step(Model& model, std::span<const TrainVideo* const> batch, double tf_prob,
                      AdadeltaState& opt, Pcg32& rng, const TrainConfig& cfg) {
  check(!batch.empty(), "xe_step: empty batch");
  check(tf_prob >= 0.0 && tf_prob <= 1.0, "teacher-forcing probability must lie in [0,1]");
  Tape tape;
  Binding bind(tape, model, owned_by_xe);
  StepOptions step_opts{Mode::kTrain, cfg.dropout, &rng};
  Value total = tape.scalar(0.0);
  int total_tokens = 0;
  for (const TrainVideo* v : batch) {
    EncoderOutputs enc = encode(tape, tape.constant(v->features), bind.enc);
    AgentCtx ctx(tape, bind, model.cfg, enc, step_opts);
    XeLossOut out = xe_loss_for_video(ctx, *v, tf_prob, &rng);
    total = tape.add(total, out.loss);
    total_tokens += out.tokens;
  }
  double loss_value = tape.val(total).v[0];
  Value objective = tape.scale(total, 1.0 / static_cast<double>(batch.size()));
  tape.backward(objective);
  NamedGrads grads = clip_gradients(bind.grads(tape), cfg.clip);
  adadelta_step(model.params, grads, opt);
  return loss_value / total_tokens;
}

// ---------------------------------------------------------------------------
// Internal critic training (maximum likelihood on ground-truth boundary
// labels). Once trained the critic stays frozen.

inline Value critic_loss_for_video(AgentCtx& ctx, const TrainVideo& v) {
  Tape& t = ctx.tape();
  AgentState s = ctx.initial_state();
  Value total = t.scalar(0.0);
  int steps = static_cast<int>(v.target.size()) + 1;
  for (int i = 0; i < steps; ++i) {
    int token = (i < static_cast<int>(v.target.size())) ? v.target[i] : kEos;
    Value p = ctx.critic_step(s, token);
    Value lik = v.ztargets[i] ? p : t.sub(t.scalar(1.0), p);
    total = t.add(total, t.neg(t.log(lik)));
  }
  return total;
}

inline double critic_accuracy(const Model& model, const std::vector<TrainVideo>& videos) {
  long correct = 0, count = 0;
  for (const TrainVideo& v : videos) {
    Tape tape;
    Binding bind(tape, model);
    // the critic never looks at the video; a 1-frame stub keeps the context small
    EncoderOutputs enc = encode(tape, tape.constant(Tensor::zeros(1, model.cfg.feat_dim)), bind.enc);
    AgentCtx ctx(tape, bind, model.cfg, enc);
    AgentState s = ctx.initial_state();
    int steps = static_cast<int>(v.target.size()) + 1;
    for (int i = 0; i < steps; ++i) {
      int token = (i < static_cast<int>(v.target.size())) ? v.target[i] : kEos;
      double p = tape.val(ctx.critic_step(s, token)).v[0];
      bool fired = p > 0.5;
      correct += (fired == (v.ztargets[i] != 0)) ? 1 : 0;
      ++count;
    }
  }
  return count == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(count);
}

struct CriticTrainResult {
  double heldout_accuracy = 0.0;
  std::vector<double> epoch_loss;
};

inline CriticTrainResult train_critic(Model& model, const std::vector<TrainVideo>& train,
                                      const std::vector<TrainVideo>& heldout,
                                      const TrainConfig& cfg) {
  for (const TrainVideo& v : train)
    check(v.ztargets.size() == v.target.size() + 1, "train_critic: record ", v.id,
          " is missing boundary labels");
  AdadeltaState opt;
  opt.rho = cfg.rho;
  opt.eps = cfg.eps;
  Pcg32 rng = make_rng(cfg.seed, 0xC817);
  CriticTrainResult res;
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.critic_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(static_cast<std::uint32_t>(i))]);
    double epoch_loss = 0.0;
    long epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      Tape tape;
      Binding bind(tape, model, owned_by_critic);
      EncoderOutputs enc =
          encode(tape, tape.constant(Tensor::zeros(1, model.cfg.feat_dim)), bind.enc);
      AgentCtx ctx(tape, bind, model.cfg, enc);
      Value total = tape.scalar(0.0);
      std::size_t end = std::min(order.size(), start + cfg.batch);
      for (std::size_t i = start; i < end; ++i) {
        const TrainVideo& v = train[order[i]];
        total = tape.add(total, critic_loss_for_video(ctx, v));
        epoch_tokens += static_cast<long>(v.target.size()) + 1;
      }
      epoch_loss += tape.val(total).v[0];
      Value objective = tape.scale(total, 1.0 / static_cast<double>(end - start));
      tape.backward(objective);
      NamedGrads grads = clip_gradients(bind.grads(tape), cfg.clip);
      adadelta_step(model.params, grads, opt);
    }
    res.epoch_loss.push_back(epoch_tokens ? epoch_loss / epoch_tokens : 0.0);
  }
  model.critic_trained = true;
  res.heldout_accuracy = critic_accuracy(model, heldout);
  return res;
}

// ---------------------------------------------------------------------------
// Policy-gradient phases.

struct RolloutStep {
  Value logpi;  // log pi(a_t) of the taken action
  Value h_w;    // worker hidden after the step
  int token = 0;
};

struct Rollout {
  std::vector<RolloutStep> steps;
  std::vector<std::uint8_t> boundaries;
  std::vector<Value> h_m;       // manager hidden per emitted goal
  std::vector<int> goal_steps;  // step index of each goal emission
  bool ended_with_eos = false;
};

inline Rollout rollout_episode(AgentCtx& ctx, bool sample_actions, Pcg32* sample_rng,
                               double explore_sigma, Pcg32* explore_rng, int max_len) {
  Tape& t = ctx.tape();
  Rollout r;
  AgentState s = ctx.initial_state();
  for (int step = 0; step < max_len; ++step) {
    if (s.manager_due) {
      ctx.manager_step(s, explore_sigma, explore_rng);
      r.h_m.push_back(s.h_m);
      r.goal_steps.push_back(step);
    }
    Value pi = ctx.worker_step(s, s.prev_token);
    const Tensor& p = t.val(pi);
    int token = sample_actions && sample_rng ? detail::sample_token(p, *sample_rng)
                                             : detail::argmax_token(p);
    Value logpi = t.log(t.slice(pi, 0, 1, token, token + 1));
    r.steps.push_back({logpi, s.h_w, token});
    Value pz = ctx.critic_step(s, token);
    bool z = t.val(pz).v[0] > 0.5;
    if (token == kEos) z = true;
    s.tokens.push_back(token);
    s.boundaries.push_back(z ? 1 : 0);
    s.prev_token = token;
    s.manager_due = z;
    if (token == kEos) {
      r.ended_with_eos = true;
      break;
    }
  }
  r.boundaries = s.boundaries;
  return r;
}

// Immediate delta-CIDEr rewards per action. Word actions earn the change in
// CIDEr-D; the end-of-sentence action earns zero (the scored text is
// unchanged).
inline std::vector<double> action_rewards(const Rollout& r, const Vocabulary& vocab,
                                          const CiderProfile& profile, const IdfTable& idf) {
  std::vector<double> f(r.steps.size(), 0.0);
  TokenList prefix;
  double prev = 0.0;
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    int tok = r.steps[i].token;
    if (tok == kEos) continue;  // scored text unchanged
    prefix.push_back(vocab.token(tok));
    double cur = cider_d(cider_vec(prefix, idf), profile);
    f[i] = cur - prev;
    prev = cur;
  }
  return f;
}

// Worker phase: REINFORCE with a learned linear baseline. Manager and critic
// frozen, goal exploration disabled. Returns the mean policy loss.
inline double worker_pg_step(Model& model, std::span<const TrainVideo* const> batch,
                             AdadeltaState& opt, Pcg32& rng, const TrainConfig& cfg,
                             const Vocabulary& vocab, const IdfTable& idf) {
  check(!batch.empty(), "worker_pg_step: empty batch");
  auto trainable = [&](const std::string& n) {
    if (!cfg.rl_update_encoders && n.rfind("enc.", 0) == 0) return false;
    return owned_by_worker_phase(n) || n.rfind("baseline_w.", 0) == 0;
  };
  Tape tape;
  Binding bind(tape, model, trainable);
  Value policy_total = tape.scalar(0.0);
  Value baseline_total = tape.scalar(0.0);
  for (const TrainVideo* v : batch) {
    EncoderOutputs enc = encode(tape, tape.constant(v->features), bind.enc);
    AgentCtx ctx(tape, bind, model.cfg, enc);
    Rollout r = rollout_episode(ctx, /*sample=*/true, &rng, 0.0, nullptr, cfg.max_len);
    if (r.steps.empty()) continue;
    CiderProfile profile = make_cider_profile(v->refs, idf);
    std::vector<double> rewards = action_rewards(r, vocab, profile, idf);
    std::vector<double> returns = discounted_returns(rewards, cfg.gamma);
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
      // baseline reads the worker hidden state through a gradient cut
      Value hb = tape.detach(r.steps[i].h_w);
      Value b = tape.add(tape.matmul(hb, bind.baseline_w_w), bind.baseline_w_b);
      double advantage = returns[i] - tape.val(b).v[0];
      policy_total = tape.add(policy_total, tape.scale(r.steps[i].logpi, -advantage));
      Value diff = tape.sub(b, tape.scalar(returns[i]));
      baseline_total = tape.add(baseline_total, tape.mul(diff, diff));
    }
  }
  double mean_policy_loss = tape.val(policy_total).v[0] / static_cast<double>(batch.size());
  Value objective = tape.scale(tape.add(policy_total, baseline_total),
                               1.0 / static_cast<double>(batch.size()));
  tape.backward(objective);
  NamedGrads grads = clip_gradients(bind.grads(tape), cfg.clip);
  adadelta_step(model.params, grads, opt);
  return mean_policy_loss;
}

// Manager phase: deterministic policy gradient from greedily decoded
// captions, exploration noise on the goals, per-segment delta-CIDEr returns
// through the frozen Worker's log-probabilities.
inline double manager_dpg_step(Model& model, std::span<const TrainVideo* const> batch,
                               AdadeltaState& opt, Pcg32& rng, const TrainConfig& cfg,
                               const Vocabulary& vocab, const IdfTable& idf) {
  check(!batch.empty(), "manager_dpg_step: empty batch");
  auto trainable = [](const std::string& n) {
    return owned_by_manager_phase(n) || n.rfind("baseline_m.", 0) == 0;
  };
  Tape tape;
  Binding bind(tape, model, trainable);
  Value policy_total = tape.scalar(0.0);
  Value baseline_total = tape.scalar(0.0);
  for (const TrainVideo* v : batch) {
    EncoderOutputs enc = encode(tape, tape.constant(v->features), bind.enc);
    AgentCtx ctx(tape, bind, model.cfg, enc);
    Rollout r = rollout_episode(ctx, /*sample=*/false, nullptr, cfg.sigma, &rng, cfg.max_len);
    if (r.steps.empty()) continue;

    auto segments = segments_from_boundaries(r.boundaries);
    check(segments.size() == r.h_m.size(), "manager rollout: ", segments.size(),
          " segments but ", r.h_m.size(), " goals");
    CiderProfile profile = make_cider_profile(v->refs, idf);

    // per-segment rewards over the scored words (<eos> adds nothing)
    TokenList words;
    for (const RolloutStep& st : r.steps)
      if (st.token != kEos) words.push_back(vocab.token(st.token));
    std::vector<double> seg_rewards(segments.size(), 0.0);
    double prev = 0.0;
    for (std::size_t si = 0; si < segments.size(); ++si) {
      int word_end = std::min<int>(segments[si].second, static_cast<int>(words.size()));
      TokenList prefix(words.begin(), words.begin() + word_end);
      double cur = prefix.empty() ? 0.0 : cider_d(cider_vec(prefix, idf), profile);
      seg_rewards[si] = cur - prev;
      prev = cur;
    }
    std::vector<double> seg_returns = discounted_returns(seg_rewards, cfg.gamma);

    for (std::size_t si = 0; si < segments.size(); ++si) {
      Value hb = tape.detach(r.h_m[si]);
      Value b = tape.add(tape.matmul(hb, bind.baseline_m_w), bind.baseline_m_b);
      double advantage = seg_returns[si] - tape.val(b).v[0];
      Value seg_logpi = tape.scalar(0.0);
      for (int i = segments[si].first; i < segments[si].second; ++i)
        seg_logpi = tape.add(seg_logpi, r.steps[i].logpi);
      policy_total = tape.add(policy_total, tape.scale(seg_logpi, -advantage));
      Value diff = tape.sub(b, tape.scalar(seg_returns[si]));
      baseline_total = tape.add(baseline_total, tape.mul(diff, diff));
    }
  }
  double mean_policy_loss = tape.val(policy_total).v[0] / static_cast<double>(batch.size());
  Value objective = tape.scale(tape.add(policy_total, baseline_total),
                               1.0 / static_cast<double>(batch.size()));
  tape.backward(objective);
  NamedGrads grads = clip_gradients(bind.grads(tape), cfg.clip);
  adadelta_step(model.params, grads, opt);
  return mean_policy_loss;
}

// One mean-squared-error step of a baseline regressor on (hidden state,
// return) pairs. No gradient reaches any policy parameter: only the two
// baseline tensors are bound as trainable.
inline double baseline_fit(Model& model, const std::string& which,
                           const std::vector<Tensor>& states, const std::vector<double>& returns,
                           AdadeltaState& opt, double clip = 10.0) {
  check(which == "baseline_w" || which == "baseline_m", "baseline_fit: unknown estimator ",
        which);
  check(states.size() == returns.size() && !states.empty(),
        "baseline_fit: need matching nonempty states and returns");
  Tape tape;
  Binding bind(tape, model, [&](const std::string& n) { return n.rfind(which + ".", 0) == 0; });
  Value w = bind.at(which + ".w");
  Value b = bind.at(which + ".b");
  Value total = tape.scalar(0.0);
  for (std::size_t i = 0; i < states.size(); ++i) {
    Value pred = tape.add(tape.matmul(tape.constant(states[i]), w), b);
    Value diff = tape.sub(pred, tape.scalar(returns[i]));
    total = tape.add(total, tape.mul(diff, diff));
  }
  Value objective = tape.scale(total, 1.0 / static_cast<double>(states.size()));
  double loss = tape.val(objective).v[0];
  tape.backward(objective);
  NamedGrads grads = clip_gradients(bind.grads(tape), clip);
  adadelta_step(model.params, grads, opt);
  return loss;
}

// ---------------------------------------------------------------------------
// Validation scoring and the learning-rate schedule.

struct EvalScores {
  double cider = 0.0, bleu4 = 0.0, rougel = 0.0;
};

inline EvalScores corpus_scores(const std::vector<TokenList>& candidates,
                                const std::vector<RefSet>& refs, const IdfTable& idf) {
  check(candidates.size() == refs.size(), "corpus_scores: candidate/reference count mismatch");
  EvalScores s;
  BleuStats pooled;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    s.cider += cider_d(candidates[i], refs[i], idf);
    s.rougel += rouge_l(candidates[i], refs[i]);
    pooled.accumulate(bleu_stats(candidates[i], refs[i]));
  }
  s.cider /= static_cast<double>(candidates.size());
  s.rougel /= static_cast<double>(candidates.size());
  s.bleu4 = bleu_from_stats(pooled);
  return s;
}

inline EvalScores evaluate(const Model& model, const std::vector<TrainVideo>& val,
                           const Vocabulary& vocab, const IdfTable& idf, int max_len) {
  std::vector<TokenList> cands;
  std::vector<RefSet> refs;
  DecodeOptions opts;
  opts.mode = DecodeMode::kGreedy;
  opts.max_len = max_len;
  for (const TrainVideo& v : val) {
    DecodeResult r = decode(model, v.features, opts);
    cands.push_back(vocab.decode_words(r.tokens));
    refs.push_back(v.refs);
  }
  return corpus_scores(cands, refs, idf);
}

// Learning-rate scale from the validation history: halves whenever the best
// score is not surpassed for `patience` consecutive epochs.
inline double lr_schedule_update(const std::vector<double>& val_history, int patience = 4,
                                 double factor = 0.5) {
  double scale = 1.0;
  double best = -1e300;
  int stagnant = 0;
  for (double v : val_history) {
    if (v > best) {
      best = v;
      stagnant = 0;
    } else if (++stagnant >= patience) {
      scale *= factor;
      stagnant = 0;
    }
  }
  return scale;
}

// ---------------------------------------------------------------------------
// The alternating training loop (cross-entropy warm start, then worker /
// manager phases), with checkpointing and bitwise-identical resume.

struct EpochStats {
  int epoch = 0;
  std::string phase;  // "xe", "worker", "manager"
  double loss = 0.0;
  double cider = 0.0, bleu4 = 0.0, rougel = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

inline void write_curve_csv(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream os(path, std::ios::trunc);
  check(os.good(), "cannot open learning-curve file ", path);
  os << "epoch,phase,loss,cider,bleu4,rougel,lr,seconds\n";
  char buf[256];
  for (const EpochStats& e : history) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", e.epoch,
                  e.phase.c_str(), e.loss, e.cider, e.bleu4, e.rougel, e.lr, e.seconds);
    os << buf;
  }
}

struct TrainResult {
  std::vector<EpochStats> history;
  double best_cider = -1.0;
  int best_epoch = -1;
  std::string best_path, last_path, curve_path;
};

class Trainer {
 public:
  Trainer(Model model, PreparedData data, TrainConfig cfg, std::string out_dir)
      : model_(std::move(model)),
        data_(std::move(data)),
        cfg_(std::move(cfg)),
        out_dir_(std::move(out_dir)),
        rng_(make_rng(cfg_.seed, 0x7121)) {
    std::filesystem::create_directories(out_dir_);
    opt_.rho = cfg_.rho;
    opt_.eps = cfg_.eps;
  }

  // Phase plan: cfg.xe_epochs of "xe", then cfg.hrl_epochs drawn cyclically
  // from the schedule string, e.g. "W:1,M:1" or "W:2,M:1".
  std::vector<std::string> phase_plan() const {
    std::vector<std::string> plan(cfg_.xe_epochs, "xe");
    std::vector<std::string> cycle;
    std::string item;
    std::string sched = cfg_.schedule + ",";
    for (char c : sched) {
      if (c == ',') {
        if (!item.empty()) {
          std::size_t colon = item.find(':');
          check(colon != std::string::npos, "bad schedule item `", item, "`");
          std::string kind = item.substr(0, colon);
          int reps = std::stoi(item.substr(colon + 1));
          check((kind == "W" || kind == "M") && reps >= 1, "bad schedule item `", item, "`");
          for (int i = 0; i < reps; ++i) cycle.push_back(kind == "W" ? "worker" : "manager");
        }
        item.clear();
      } else if (!std::isspace(static_cast<unsigned char>(c))) {
        item.push_back(c);
      }
    }
    check(!cycle.empty() || cfg_.hrl_epochs == 0, "schedule `", cfg_.schedule, "` is empty");
    for (int i = 0; i < cfg_.hrl_epochs; ++i) plan.push_back(cycle[i % cycle.size()]);
    return plan;
  }

  TrainResult run() {
    check(model_.critic_trained, "hrl_train: no pretrained internal critic is loaded");
    std::vector<std::string> plan = phase_plan();
    TrainResult res;
    res.best_path = out_dir_ + "/ckpt_best.bin";
    res.last_path = out_dir_ + "/ckpt_last.bin";
    res.curve_path = out_dir_ + "/curve.csv";

    for (int epoch = next_epoch_; epoch < static_cast<int>(plan.size()); ++epoch) {
      const std::string& phase = plan[epoch];
      auto t0 = std::chrono::steady_clock::now();

      // at the warm-start -> RL transition, restart from the best XE model
      if (phase != "xe" && !rl_started_) {
        if (best_cider_ >= 0.0 && std::filesystem::exists(res.best_path)) {
          Model best = Model::load(res.best_path);
          model_.params = best.params;
        }
        opt_ = AdadeltaState{};
        opt_.rho = cfg_.rho;
        opt_.eps = cfg_.eps;
        rl_started_ = true;
      }

      double lr = phase == "xe" ? cfg_.xe_lr * lr_schedule_update(xe_cider_history_,
                                                                  cfg_.lr_patience, cfg_.lr_factor)
                                : cfg_.rl_lr;
      opt_.lr_scale = lr;

      // the minibatch order is rebuilt from scratch so an interrupted run
      // resumes with exactly the batches the uninterrupted run would see
      std::vector<const TrainVideo*> order;
      order.reserve(data_.train.size());
      for (const TrainVideo& v : data_.train) order.push_back(&v);
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng_.below(static_cast<std::uint32_t>(i))]);

      double loss_sum = 0.0;
      int batches = 0;
      for (std::size_t start = 0; start < order.size(); start += cfg_.batch) {
        std::size_t end = std::min(order.size(), start + cfg_.batch);
        std::span<const TrainVideo* const> batch(order.data() + start, end - start);
        if (phase == "xe") {
          double ss = cfg_.ss_ramp_epochs > 0
                          ? cfg_.ss_max * std::min(1.0, static_cast<double>(epoch) /
                                                            cfg_.ss_ramp_epochs)
                          : cfg_.ss_max;
          loss_sum += xe_step(model_, batch, 1.0 - ss, opt_, rng_, cfg_);
        } else if (phase == "worker") {
          loss_sum += worker_pg_step(model_, batch, opt_, rng_, cfg_, data_.vocab, data_.idf);
        } else {
          loss_sum += manager_dpg_step(model_, batch, opt_, rng_, cfg_, data_.vocab, data_.idf);
        }
        ++batches;
      }

      EvalScores scores = evaluate(model_, data_.val, data_.vocab, data_.idf, cfg_.max_len);
      auto t1 = std::chrono::steady_clock::now();

      EpochStats st;
      st.epoch = epoch;
      st.phase = phase;
      st.loss = batches ? loss_sum / batches : 0.0;
      st.cider = scores.cider;
      st.bleu4 = scores.bleu4;
      st.rougel = scores.rougel;
      st.lr = lr;
      st.seconds = std::chrono::duration<double>(t1 - t0).count();
      history_.push_back(st);
      if (phase == "xe") xe_cider_history_.push_back(scores.cider);

      if (scores.cider > best_cider_) {
        best_cider_ = scores.cider;
        best_epoch_ = epoch;
        model_.save(res.best_path);
      }
      next_epoch_ = epoch + 1;
      if (cfg_.checkpoint_every > 0 && (epoch + 1) % cfg_.checkpoint_every == 0)
        save_state(res.last_path);
      write_curve_csv(res.curve_path, history_);
      std::fprintf(stderr, "epoch %d [%s] loss %.4f cider %.4f bleu4 %.4f rougel %.4f lr %.3g (%.1fs)\n",
                   epoch, phase.c_str(), st.loss, st.cider, st.bleu4, st.rougel, lr, st.seconds);
    }
    save_state(res.last_path);
    write_curve_csv(res.curve_path, history_);
    res.history = history_;
    res.best_cider = best_cider_;
    res.best_epoch = best_epoch_;
    return res;
  }

  // Serialize everything needed to continue bitwise-identically: parameters,
  // optimizer accumulators, generator state, history.
  void save_state(const std::string& path) const {
    std::map<std::string, Tensor> m = model_.to_map();
    for (const auto& [name, t] : opt_.sq_grad) m.emplace("opt.sq_grad." + name, t);
    for (const auto& [name, t] : opt_.sq_update) m.emplace("opt.sq_update." + name, t);
    auto u64_tensor = [](std::uint64_t x) {
      return Tensor(1, 2, {static_cast<double>(x >> 32), static_cast<double>(x & 0xffffffffULL)});
    };
    m.emplace("state.rng_state", u64_tensor(rng_.state()));
    m.emplace("state.rng_inc", u64_tensor(rng_.inc()));
    m.emplace("state.next_epoch", Tensor::scalar(next_epoch_));
    m.emplace("state.best_cider", Tensor::scalar(best_cider_));
    m.emplace("state.best_epoch", Tensor::scalar(best_epoch_));
    m.emplace("state.rl_started", Tensor::scalar(rl_started_ ? 1 : 0));
    Tensor hist(static_cast<int>(history_.size()), 8);
    for (int i = 0; i < hist.rows; ++i) {
      const EpochStats& e = history_[i];
      double phase_code = e.phase == "xe" ? 0 : (e.phase == "worker" ? 1 : 2);
      double row[8] = {static_cast<double>(e.epoch), phase_code, e.loss, e.cider,
                       e.bleu4, e.rougel, e.lr, e.seconds};
      for (int j = 0; j < 8; ++j) hist.at(i, j) = row[j];
    }
    m.emplace("state.history", std::move(hist));
    save_tensor_map(path, m);
  }

  void resume(const std::string& path) {
    std::map<std::string, Tensor> m = load_tensor_map(path);
    Model loaded = Model::from_map(m);
    check(loaded.cfg.vocab_size == model_.cfg.vocab_size,
          "resume: checkpoint vocabulary size differs from the dataset");
    model_ = std::move(loaded);
    opt_ = AdadeltaState{};
    opt_.rho = cfg_.rho;
    opt_.eps = cfg_.eps;
    for (const auto& [name, t] : m) {
      if (name.rfind("opt.sq_grad.", 0) == 0) opt_.sq_grad.emplace(name.substr(12), t);
      if (name.rfind("opt.sq_update.", 0) == 0) opt_.sq_update.emplace(name.substr(14), t);
    }
    auto u64_of = [&](const std::string& k) {
      const Tensor& t = m.at(k);
      return (static_cast<std::uint64_t>(t.v[0]) << 32) | static_cast<std::uint64_t>(t.v[1]);
    };
    rng_.restore(u64_of("state.rng_state"), u64_of("state.rng_inc"));
    next_epoch_ = static_cast<int>(m.at("state.next_epoch").v[0]);
    best_cider_ = m.at("state.best_cider").v[0];
    best_epoch_ = static_cast<int>(m.at("state.best_epoch").v[0]);
    rl_started_ = m.at("state.rl_started").v[0] != 0;
    history_.clear();
    xe_cider_history_.clear();
    const Tensor& hist = m.at("state.history");
    for (int i = 0; i < hist.rows; ++i) {
      EpochStats e;
      e.epoch = static_cast<int>(hist.at(i, 0));
      e.phase = hist.at(i, 1) == 0 ? "xe" : (hist.at(i, 1) == 1 ? "worker" : "manager");
      e.loss = hist.at(i, 2);
      e.cider = hist.at(i, 3);
      e.bleu4 = hist.at(i, 4);
      e.rougel = hist.at(i, 5);
      e.lr = hist.at(i, 6);
      e.seconds = hist.at(i, 7);
      history_.push_back(e);
      if (e.phase == "xe") xe_cider_history_.push_back(e.cider);
    }
  }

  const Model& model() const { return model_; }
  Model& model() { return model_; }
  const std::vector<EpochStats>& history() const { return history_; }

 private:
  Model model_;
  PreparedData data_;
  TrainConfig cfg_;
  std::string out_dir_;
  Pcg32 rng_;
  AdadeltaState opt_;
  std::vector<EpochStats> history_;
  std::vector<double> xe_cider_history_;
  double best_cider_ = -1.0;
  int best_epoch_ = -1;
  int next_epoch_ = 0;
  bool rl_started_ = false;
};

}  // namespace hrlcap

#endif  // HRLCAP_TRAINING_HPP_
