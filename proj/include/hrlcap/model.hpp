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

#ifndef HRLCAP_MODEL_HPP_
#define HRLCAP_MODEL_HPP_

#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hrlcap/attention.hpp"
#include "hrlcap/checkpoint.hpp"
#include "hrlcap/encoder.hpp"
#include "hrlcap/optim.hpp"
#include "hrlcap/rnn.hpp"

namespace hrlcap {

// Reserved vocabulary ids.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;

struct ModelConfig {
  int vocab_size = 0;

  int feat_dim = 16;
  int enc_proj = 16;
  int enc_low = 16;   // per-direction hidden size of the Bi-LSTM
  int enc_high = 16;

  int worker_hidden = 32;
  int manager_hidden = 16;
  int embed_dim = 16;
  int goal_dim = 16;
  int worker_proj = 0;  // inner width of the word projection; 0 -> embed_dim
  int attn_w_dim = 0;   // 0 -> encoder low-state width (2 * enc_low)
  int attn_m_dim = 0;   // 0 -> enc_high

  int critic_hidden = 16;
  int critic_embed = 8;

  int max_len = 30;
  double dropout = 0.5;
  double init_bound = 0.1;

  int low_width() const { return 2 * enc_low; }
  int attn_w() const { return attn_w_dim > 0 ? attn_w_dim : low_width(); }
  int attn_m() const { return attn_m_dim > 0 ? attn_m_dim : enc_high; }
  int wproj() const { return worker_proj > 0 ? worker_proj : embed_dim; }
  int worker_input() const { return low_width() + goal_dim + embed_dim; }
  int manager_input() const { return enc_high + worker_hidden; }
};

struct NamedShape {
  std::string name;
  int rows, cols;
};

inline std::vector<NamedShape> model_shape_table(const ModelConfig& c) {
  std::vector<NamedShape> t;
  auto lstm = [&](const std::string& p, int in, int h) {
    t.push_back({p + ".w_x", in, 4 * h});
    t.push_back({p + ".w_h", h, 4 * h});
    t.push_back({p + ".b", 1, 4 * h});
  };
  auto gru = [&](const std::string& p, int in, int h) {
    t.push_back({p + ".w_x_zr", in, 2 * h});
    t.push_back({p + ".w_h_zr", h, 2 * h});
    t.push_back({p + ".b_zr", 1, 2 * h});
    t.push_back({p + ".w_x_c", in, h});
    t.push_back({p + ".w_h_c", h, h});
    t.push_back({p + ".b_c", 1, h});
  };
  auto attn = [&](const std::string& p, int d_state, int d_query, int k) {
    t.push_back({p + ".w", k, 1});
    t.push_back({p + ".w_a", d_state, k});
    t.push_back({p + ".u_a", d_query, k});
    t.push_back({p + ".b_a", 1, k});
  };

  t.push_back({"enc.proj.w", c.feat_dim, c.enc_proj});
  t.push_back({"enc.proj.b", 1, c.enc_proj});
  lstm("enc.fwd", c.enc_proj, c.enc_low);
  lstm("enc.bwd", c.enc_proj, c.enc_low);
  lstm("enc.high", c.low_width(), c.enc_high);

  attn("attn_w", c.low_width(), c.worker_hidden, c.attn_w());
  attn("attn_m", c.enc_high, c.manager_hidden, c.attn_m());

  t.push_back({"worker.embed", c.vocab_size, c.embed_dim});
  lstm("worker.lstm", c.worker_input(), c.worker_hidden);
  t.push_back({"worker.proj1.w", c.worker_hidden, c.wproj()});
  t.push_back({"worker.proj1.b", 1, c.wproj()});
  t.push_back({"worker.proj2.w", c.wproj(), c.vocab_size});
  t.push_back({"worker.proj2.b", 1, c.vocab_size});

  lstm("manager.lstm", c.manager_input(), c.manager_hidden);
  t.push_back({"manager.goal.w", c.manager_hidden, c.goal_dim});
  t.push_back({"manager.goal.b", 1, c.goal_dim});

  t.push_back({"critic.embed", c.vocab_size, c.critic_embed});
  gru("critic.gru", c.critic_embed, c.critic_hidden);
  t.push_back({"critic.out.w", c.critic_hidden, 1});
  t.push_back({"critic.out.b", 1, 1});

  t.push_back({"baseline_w.w", c.worker_hidden, 1});
  t.push_back({"baseline_w.b", 1, 1});
  t.push_back({"baseline_m.w", c.manager_hidden, 1});
  t.push_back({"baseline_m.b", 1, 1});
  return t;
}

// The whole agent: one flat parameter map plus its configuration. The map is
// the single source of truth; forward passes bind entries onto a tape.
class Model {
 public:
  ModelConfig cfg;
  ParamMap params;
  bool critic_trained = false;

  static Model init(const ModelConfig& cfg, std::uint64_t seed) {
    check(cfg.vocab_size > 4, "model config needs vocab_size > 4, got ", cfg.vocab_size);
    Model m;
    m.cfg = cfg;
    Pcg32 rng = make_rng(seed, /*salt=*/0xA11);
    for (const NamedShape& s : model_shape_table(cfg))
      m.params.emplace(s.name, uniform_init(s.rows, s.cols, cfg.init_bound, rng));
    return m;
  }

  std::map<std::string, Tensor> to_map() const {
    std::map<std::string, Tensor> out = params;
    auto meta = [&](const std::string& k, double v) {
      out.emplace("meta." + k, Tensor::scalar(v));
    };
    meta("format", 1);
    meta("vocab_size", cfg.vocab_size);
    meta("feat_dim", cfg.feat_dim);
    meta("enc_proj", cfg.enc_proj);
    meta("enc_low", cfg.enc_low);
    meta("enc_high", cfg.enc_high);
    meta("worker_hidden", cfg.worker_hidden);
    meta("manager_hidden", cfg.manager_hidden);
    meta("embed_dim", cfg.embed_dim);
    meta("goal_dim", cfg.goal_dim);
    meta("worker_proj", cfg.worker_proj);
    meta("attn_w_dim", cfg.attn_w_dim);
    meta("attn_m_dim", cfg.attn_m_dim);
    meta("critic_hidden", cfg.critic_hidden);
    meta("critic_embed", cfg.critic_embed);
    meta("max_len", cfg.max_len);
    meta("dropout", cfg.dropout);
    meta("init_bound", cfg.init_bound);
    meta("critic_trained", critic_trained ? 1 : 0);
    return out;
  }

  static Model from_map(const std::map<std::string, Tensor>& m) {
    auto meta = [&](const std::string& k) {
      auto it = m.find("meta." + k);
      check(it != m.end(), "model map is missing meta.", k);
      return it->second.v[0];
    };
    check(static_cast<int>(meta("format")) == 1, "unsupported model format tag");
    ModelConfig c;
    c.vocab_size = static_cast<int>(meta("vocab_size"));
    c.feat_dim = static_cast<int>(meta("feat_dim"));
    c.enc_proj = static_cast<int>(meta("enc_proj"));
    c.enc_low = static_cast<int>(meta("enc_low"));
    c.enc_high = static_cast<int>(meta("enc_high"));
    c.worker_hidden = static_cast<int>(meta("worker_hidden"));
    c.manager_hidden = static_cast<int>(meta("manager_hidden"));
    c.embed_dim = static_cast<int>(meta("embed_dim"));
    c.goal_dim = static_cast<int>(meta("goal_dim"));
    c.worker_proj = static_cast<int>(meta("worker_proj"));
    c.attn_w_dim = static_cast<int>(meta("attn_w_dim"));
    c.attn_m_dim = static_cast<int>(meta("attn_m_dim"));
    c.critic_hidden = static_cast<int>(meta("critic_hidden"));
    c.critic_embed = static_cast<int>(meta("critic_embed"));
    c.max_len = static_cast<int>(meta("max_len"));
    c.dropout = meta("dropout");
    c.init_bound = meta("init_bound");

    Model model;
    model.cfg = c;
    if (auto it = m.find("meta.critic_trained"); it != m.end())
      model.critic_trained = it->second.v[0] != 0;
    for (const NamedShape& s : model_shape_table(c)) {
      auto it = m.find(s.name);
      check(it != m.end(), "model map is missing parameter ", s.name);
      check(it->second.rows == s.rows && it->second.cols == s.cols,
            "model parameter ", s.name, " has shape ", shape_str(it->second),
            ", expected ", s.rows, "x", s.cols);
      model.params.emplace(s.name, it->second);
    }
    return model;
  }

  void save(const std::string& path) const { save_tensor_map(path, to_map()); }
  static Model load(const std::string& path) { return from_map(load_tensor_map(path)); }

  // Overwrite the parameters selected by `pred` from another map (used to
  // install a separately trained critic).
  void adopt(const ParamMap& src, const std::function<bool(const std::string&)>& pred) {
    for (auto& [name, tensor] : params) {
      if (!pred(name)) continue;
      auto it = src.find(name);
      check(it != src.end(), "adopt: source map is missing ", name);
      check(it->second.same_shape(tensor), "adopt: shape mismatch for ", name);
      tensor = it->second;
    }
  }
};

// One forward pass worth of parameter leaves. Parameters bound as trainable
// report gradients; everything else participates in the forward computation
// but is skipped by backward's gradient map.
class Binding {
 public:
  Binding(Tape& tape, const Model& model,
          std::function<bool(const std::string&)> trainable = nullptr) {
    for (const auto& [name, tensor] : model.params) {
      bool t = trainable ? trainable(name) : false;
      bound_.emplace(name, tape.parameter(tensor, t));
      if (t) trainable_.insert(name);
    }
    wire(model.cfg);
  }

  // Bind from already-created leaves in model_shape_table order (the
  // finite-difference harness perturbs these directly).
  Binding(const ModelConfig& cfg, const std::vector<Value>& leaves) {
    auto table = model_shape_table(cfg);
    check(leaves.size() == table.size(), "binding: expected ", table.size(), " leaves, got ",
          leaves.size());
    for (std::size_t i = 0; i < table.size(); ++i) bound_.emplace(table[i].name, leaves[i]);
    wire(cfg);
  }

 private:
  void wire(const ModelConfig& c) {
    enc.proj_w = at("enc.proj.w");
    enc.proj_b = at("enc.proj.b");
    enc.fwd = lstm("enc.fwd", c.enc_low);
    enc.bwd = lstm("enc.bwd", c.enc_low);
    enc.high = lstm("enc.high", c.enc_high);
    attn_w = attn("attn_w");
    attn_m = attn("attn_m");
    embed = at("worker.embed");
    worker = lstm("worker.lstm", c.worker_hidden);
    wproj1_w = at("worker.proj1.w");
    wproj1_b = at("worker.proj1.b");
    wproj2_w = at("worker.proj2.w");
    wproj2_b = at("worker.proj2.b");
    manager = lstm("manager.lstm", c.manager_hidden);
    goal_w = at("manager.goal.w");
    goal_b = at("manager.goal.b");
    critic_embed = at("critic.embed");
    critic = gru("critic.gru", c.critic_hidden);
    critic_out_w = at("critic.out.w");
    critic_out_b = at("critic.out.b");
    baseline_w_w = at("baseline_w.w");
    baseline_w_b = at("baseline_w.b");
    baseline_m_w = at("baseline_m.w");
    baseline_m_b = at("baseline_m.b");
  }

 public:
  Value at(const std::string& name) const {
    auto it = bound_.find(name);
    check(it != bound_.end(), "binding has no parameter ", name);
    return it->second;
  }

  // Pull gradients for the trainable subset after tape.backward().
  NamedGrads grads(const Tape& tape) const {
    NamedGrads g;
    for (const std::string& name : trainable_) g.emplace(name, tape.grad_of(bound_.at(name)));
    return g;
  }

  const std::set<std::string>& trainable_names() const { return trainable_; }

  EncoderVars enc;
  AttentionVars attn_w, attn_m;
  LstmVars worker, manager;
  GruVars critic;
  Value embed, critic_embed;
  Value wproj1_w, wproj1_b, wproj2_w, wproj2_b;
  Value goal_w, goal_b;
  Value critic_out_w, critic_out_b;
  Value baseline_w_w, baseline_w_b, baseline_m_w, baseline_m_b;

 private:
  LstmVars lstm(const std::string& p, int hidden) const {
    return {at(p + ".w_x"), at(p + ".w_h"), at(p + ".b"), hidden};
  }
  GruVars gru(const std::string& p, int hidden) const {
    return {at(p + ".w_x_zr"), at(p + ".w_h_zr"), at(p + ".b_zr"),
            at(p + ".w_x_c"),  at(p + ".w_h_c"),  at(p + ".b_c"),  hidden};
  }
  AttentionVars attn(const std::string& p) const {
    return {at(p + ".w"), at(p + ".w_a"), at(p + ".u_a"), at(p + ".b_a")};
  }

  std::map<std::string, Value> bound_;
  std::set<std::string> trainable_;
};

// Phase ownership predicates.
inline bool owned_by_xe(const std::string& n) {
  return n.rfind("critic.", 0) != 0 && n.rfind("baseline_", 0) != 0;
}
inline bool owned_by_worker_phase(const std::string& n) {
  return n.rfind("enc.", 0) == 0 || n.rfind("attn_w.", 0) == 0 || n.rfind("worker.", 0) == 0;
}
inline bool owned_by_manager_phase(const std::string& n) {
  return n.rfind("manager.", 0) == 0 || n.rfind("attn_m.", 0) == 0;
}
inline bool owned_by_critic(const std::string& n) { return n.rfind("critic.", 0) == 0; }

}  // namespace hrlcap

#endif  // HRLCAP_MODEL_HPP_
