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

#ifndef HRLCAP_CONFIG_HPP_
#define HRLCAP_CONFIG_HPP_

#include <cstdlib>
#include <fstream>
#include <map>
#include <string>

#include "hrlcap/common.hpp"
#include "hrlcap/model.hpp"

namespace hrlcap {

// Flat `key = value` configuration. Every key has a documented default;
// unknown keys are rejected. Environment variables HRLCAP_<KEY> (upper-cased
// key) override both defaults and file values.
class Config {
 public:
  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d{
        // model dimensions (paper-scale values; synth preset shrinks them)
        {"feat_dim", "2048"},
        {"enc_proj", "512"},
        {"enc_low", "512"},
        {"enc_high", "256"},
        {"worker_hidden", "1024"},
        {"manager_hidden", "256"},
        {"embed_dim", "512"},
        {"goal_dim", "16"},
        {"worker_proj", "0"},   // 0 -> embed_dim
        {"attn_w_dim", "0"},    // 0 -> low encoder state width
        {"attn_m_dim", "0"},    // 0 -> high encoder state width
        {"critic_hidden", "128"},
        {"critic_embed", "128"},
        // sequence limits
        {"max_len", "30"},
        {"max_frames", "50"},
        // optimization
        {"batch", "64"},
        {"clip", "10"},
        {"dropout", "0.5"},
        {"rho", "0.95"},
        {"epsilon", "1e-6"},
        {"lr", "1"},
        {"rl_lr", "0.1"},
        {"lr_patience", "4"},
        {"lr_factor", "0.5"},
        {"init_bound", "0.1"},
        // scheduled sampling ramp: 0 -> ss_max over ss_ramp_epochs
        {"ss_ramp_epochs", "20"},
        {"ss_max", "0.25"},
        // reinforcement learning
        {"gamma", "0.95"},
        {"sigma", "0.1"},
        {"rl_update_encoders", "1"},
        // loop control
        {"xe_epochs", "20"},
        {"hrl_epochs", "10"},
        {"schedule", "W:1,M:1"},
        {"critic_epochs", "10"},
        {"min_count", "1"},
        {"beam", "5"},
        {"seed", "1"},
        {"checkpoint_every", "1"},
    };
    return d;
  }

  Config() : kv_(defaults()) {}

  static Config load(const std::string& path) {
    std::ifstream is(path);
    check(is.good(), "config: cannot open ", path);
    Config c;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      std::string s = line.substr(0, line.find('#'));
      auto trim = [](std::string x) {
        std::size_t a = x.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        std::size_t b = x.find_last_not_of(" \t\r");
        return x.substr(a, b - a + 1);
      };
      s = trim(s);
      if (s.empty()) continue;
      std::size_t eq = s.find('=');
      check(eq != std::string::npos, "config ", path, " line ", line_no,
            ": expected `key = value`, got: ", line);
      c.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    return c;
  }

  void set(const std::string& key, const std::string& value) {
    check(defaults().count(key) == 1, "config: unknown key `", key, "`");
    check(!value.empty(), "config: empty value for key `", key, "`");
    kv_[key] = value;
  }

  // HRLCAP_MAX_LEN=40 overrides max_len, and so on for every known key.
  void apply_env_overrides() {
    for (const auto& [key, unused] : defaults()) {
      std::string env = "HRLCAP_";
      for (char ch : key) env.push_back(static_cast<char>(std::toupper(ch)));
      if (const char* v = std::getenv(env.c_str())) set(key, v);
    }
  }

  const std::string& gets(const std::string& key) const {
    auto it = kv_.find(key);
    check(it != kv_.end(), "config: unknown key `", key, "`");
    return it->second;
  }
  int geti(const std::string& key) const {
    try {
      return std::stoi(gets(key));
    } catch (const std::exception&) {
      fail("config: key `", key, "` has non-integer value `", gets(key), "`");
    }
  }
  double getd(const std::string& key) const {
    try {
      return std::stod(gets(key));
    } catch (const std::exception&) {
      fail("config: key `", key, "` has non-numeric value `", gets(key), "`");
    }
  }
  bool getb(const std::string& key) const {
    const std::string& v = gets(key);
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    fail("config: key `", key, "` has non-boolean value `", v, "`");
  }
  std::uint64_t getu64(const std::string& key) const {
    try {
      return std::stoull(gets(key));
    } catch (const std::exception&) {
      fail("config: key `", key, "` has non-integer value `", gets(key), "`");
    }
  }

  // Named presets for the paper's two dataset scales and the synthetic task.
  void apply_preset(const std::string& name) {
    if (name == "msrvtt") {
      // the documented defaults
    } else if (name == "charades") {
      set("max_frames", "150");
      set("max_len", "60");
      set("critic_hidden", "64");
      set("critic_embed", "64");
    } else if (name == "synth") {
      set("feat_dim", "16");
      set("enc_proj", "16");
      set("enc_low", "16");
      set("enc_high", "16");
      set("worker_hidden", "32");
      set("manager_hidden", "16");
      set("embed_dim", "16");
      set("critic_hidden", "16");
      set("critic_embed", "8");
      set("max_len", "24");
      set("max_frames", "30");
      set("batch", "16");
      set("ss_ramp_epochs", "10");
      set("xe_epochs", "14");
      set("hrl_epochs", "8");
      set("critic_epochs", "6");
    } else {
      fail("config: unknown preset `", name, "` (expected msrvtt, charades or synth)");
    }
  }

  ModelConfig model_config(int vocab_size) const {
    ModelConfig m;
    m.vocab_size = vocab_size;
    m.feat_dim = geti("feat_dim");
    m.enc_proj = geti("enc_proj");
    m.enc_low = geti("enc_low");
    m.enc_high = geti("enc_high");
    m.worker_hidden = geti("worker_hidden");
    m.manager_hidden = geti("manager_hidden");
    m.embed_dim = geti("embed_dim");
    m.goal_dim = geti("goal_dim");
    m.worker_proj = geti("worker_proj");
    m.attn_w_dim = geti("attn_w_dim");
    m.attn_m_dim = geti("attn_m_dim");
    m.critic_hidden = geti("critic_hidden");
    m.critic_embed = geti("critic_embed");
    m.max_len = geti("max_len");
    m.dropout = getd("dropout");
    m.init_bound = getd("init_bound");
    return m;
  }

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace hrlcap

#endif  // HRLCAP_CONFIG_HPP_
