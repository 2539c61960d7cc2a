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

#ifndef HRLCAP_REWARDS_HPP_
#define HRLCAP_REWARDS_HPP_

#include <utility>
#include <vector>

#include "hrlcap/metrics.hpp"

namespace hrlcap {

// Immediate reward for extending a partial caption: the change in CIDEr-D.
// The empty caption scores zero, so the first token's reward is well defined.
inline double delta_reward(const TokenList& prefix, const TokenList& extension,
                           const CiderProfile& profile, const IdfTable& idf) {
  double before = prefix.empty() ? 0.0 : cider_d(cider_vec(prefix, idf), profile);
  TokenList extended = prefix;
  extended.insert(extended.end(), extension.begin(), extension.end());
  double after = extended.empty() ? 0.0 : cider_d(cider_vec(extended, idf), profile);
  return after - before;
}

inline double delta_reward(const TokenList& prefix, const TokenList& extension,
                           const RefSet& references, const IdfTable& idf) {
  return delta_reward(prefix, extension, make_cider_profile(references, idf), idf);
}

// Per-token immediate rewards f(a_t) over a full caption. Telescopes: the sum
// equals the CIDEr-D of the whole caption.
inline std::vector<double> token_delta_rewards(const TokenList& tokens,
                                               const CiderProfile& profile,
                                               const IdfTable& idf) {
  std::vector<double> f(tokens.size(), 0.0);
  double prev = 0.0;
  TokenList prefix;
  prefix.reserve(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    prefix.push_back(tokens[t]);
    double cur = cider_d(cider_vec(prefix, idf), profile);
    f[t] = cur - prev;
    prev = cur;
  }
  return f;
}

// Per-segment immediate rewards f(e_t); segments are half-open token-index
// ranges partitioning the caption.
inline std::vector<double> segment_delta_rewards(
    const TokenList& tokens, const std::vector<std::pair<int, int>>& segments,
    const CiderProfile& profile, const IdfTable& idf) {
  std::vector<double> f(segments.size(), 0.0);
  double prev = 0.0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    auto [b, e] = segments[s];
    check(0 <= b && b <= e && e <= static_cast<int>(tokens.size()),
          "segment range [", b, ",", e, ") out of bounds");
    TokenList prefix(tokens.begin(), tokens.begin() + e);
    double cur = prefix.empty() ? 0.0 : cider_d(cider_vec(prefix, idf), profile);
    f[s] = cur - prev;
    prev = cur;
  }
  return f;
}

// R_t = sum_k gamma^k f_{t+k}, by backward recursion; R past the end is zero.
inline std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma) {
  check(gamma >= 0.0 && gamma <= 1.0, "discount must lie in [0,1], got ", gamma);
  std::vector<double> r(rewards.size(), 0.0);
  double acc = 0.0;
  for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t) {
    acc = rewards[t] + gamma * acc;
    r[t] = acc;
  }
  return r;
}

// Everything the two policy-gradient phases need about one episode.
struct RewardTrace {
  std::vector<double> token_rewards;    // f(a_t), one per emitted word
  std::vector<double> segment_rewards;  // f(e_t), one per segment
  std::vector<double> token_returns;    // R(a_t)
  std::vector<double> segment_returns;  // R(e_t)
  std::vector<double> token_baselines;
  std::vector<double> segment_baselines;
  double gamma = 0.95;
};

}  // namespace hrlcap

#endif  // HRLCAP_REWARDS_HPP_
