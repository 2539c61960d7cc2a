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

#ifndef HRLCAP_VOCAB_HPP_
#define HRLCAP_VOCAB_HPP_

#include <algorithm>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "hrlcap/metrics.hpp"
#include "hrlcap/model.hpp"

namespace hrlcap {

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kBosToken = "<bos>";
inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kUnkToken = "<unk>";

// Token <-> id bijection with four reserved ids. Ordering of real tokens is
// stable: frequency descending, then lexicographic.
class Vocabulary {
 public:
  Vocabulary() { tokens_ = {kPadToken, kBosToken, kEosToken, kUnkToken}; rebuild_index(); }

  static Vocabulary build(const std::vector<TokenList>& captions, int min_count = 1) {
    check(min_count >= 1, "vocabulary min-count must be >= 1, got ", min_count);
    std::unordered_map<std::string, int> counts;
    for (const TokenList& c : captions)
      for (const std::string& t : c) counts[t] += 1;
    std::vector<std::pair<std::string, int>> kept;
    for (const auto& [tok, n] : counts)
      if (n >= min_count) kept.push_back({tok, n});
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocabulary v;
    for (const auto& [tok, n] : kept) v.tokens_.push_back(tok);
    v.rebuild_index();
    return v;
  }

  int size() const { return static_cast<int>(tokens_.size()); }

  int id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  const std::string& token(int id) const {
    check(id >= 0 && id < size(), "vocabulary id ", id, " out of range [0,", size(), ")");
    return tokens_[id];
  }

  std::vector<int> encode(const TokenList& toks) const {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const std::string& t : toks) out.push_back(id(t));
    return out;
  }

  TokenList decode_words(const std::vector<int>& ids) const {
    TokenList out;
    for (int i : ids)
      if (i >= kUnk) out.push_back(token(i));  // drop pad/bos/eos
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    check(os.good(), "vocabulary: cannot open ", path, " for writing");
    for (const std::string& t : tokens_) os << t << "\n";
    check(os.good(), "vocabulary: write to ", path, " failed");
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream is(path);
    check(is.good(), "vocabulary: cannot open ", path);
    Vocabulary v;
    v.tokens_.clear();
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty()) v.tokens_.push_back(line);
    }
    check(v.tokens_.size() >= 4 && v.tokens_[kPad] == kPadToken && v.tokens_[kBos] == kBosToken &&
              v.tokens_[kEos] == kEosToken && v.tokens_[kUnk] == kUnkToken,
          "vocabulary file ", path, " does not start with the reserved tokens");
    v.rebuild_index();
    return v;
  }

 private:
  void rebuild_index() {
    ids_.clear();
    for (int i = 0; i < size(); ++i) ids_.emplace(tokens_[i], i);
    check(ids_.size() == tokens_.size(), "vocabulary contains duplicate tokens");
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace hrlcap

#endif  // HRLCAP_VOCAB_HPP_
