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

#ifndef HRLCAP_METRICS_HPP_
#define HRLCAP_METRICS_HPP_

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "hrlcap/common.hpp"

namespace hrlcap {

using TokenList = std::vector<std::string>;
using RefSet = std::vector<TokenList>;  // all references of one video

// Lowercase, strip punctuation characters, split on whitespace.
inline TokenList tokenize(const std::string& text) {
  TokenList out;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else if (!std::ispunct(ch)) {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

constexpr int kMaxNgram = 4;

namespace detail {
// n-gram keys are tokens joined with an unprintable separator.
inline std::string ngram_key(const TokenList& toks, std::size_t start, int n) {
  std::string key = toks[start];
  for (int i = 1; i < n; ++i) {
    key.push_back('\x1f');
    key += toks[start + i];
  }
  return key;
}
}  // namespace detail

using NgramMap = std::unordered_map<std::string, double>;

inline std::array<NgramMap, kMaxNgram> ngram_counts(const TokenList& toks) {
  std::array<NgramMap, kMaxNgram> out;
  for (int n = 1; n <= kMaxNgram; ++n) {
    if (static_cast<int>(toks.size()) < n) break;
    NgramMap& m = out[n - 1];
    for (std::size_t s = 0; s + n <= toks.size(); ++s) m[detail::ngram_key(toks, s, n)] += 1.0;
  }
  return out;
}

// Inverse document frequency over videos: a video counts once per n-gram no
// matter how many of its references contain it. Unseen n-grams at scoring
// time are treated as df = 1.
class IdfTable {
 public:
  static IdfTable build(const std::vector<RefSet>& refs_by_video) {
    check(!refs_by_video.empty(), "idf: empty corpus");
    bool any_ref = false;
    IdfTable table;
    table.corpus_size_ = static_cast<int>(refs_by_video.size());
    std::unordered_map<std::string, int> df;
    for (const RefSet& refs : refs_by_video) {
      if (!refs.empty()) any_ref = true;
      std::unordered_map<std::string, bool> seen;
      for (const TokenList& r : refs) {
        auto grams = ngram_counts(r);
        for (const NgramMap& m : grams)
          for (const auto& [key, cnt] : m) seen.emplace(key, true);
      }
      for (const auto& [key, b] : seen) df[key] += 1;
    }
    check(any_ref, "idf: corpus has no reference captions");
    double logn = std::log(static_cast<double>(table.corpus_size_));
    table.log_corpus_ = logn;
    table.idf_.reserve(df.size());
    for (const auto& [key, d] : df) table.idf_.emplace(key, logn - std::log(static_cast<double>(d)));
    return table;
  }

  double idf(const std::string& key) const {
    auto it = idf_.find(key);
    return it == idf_.end() ? log_corpus_ : it->second;
  }
  int corpus_size() const { return corpus_size_; }
  double log_corpus() const { return log_corpus_; }

 private:
  std::unordered_map<std::string, double> idf_;
  int corpus_size_ = 0;
  double log_corpus_ = 0.0;
};

// ---------------------------------------------------------------------------
// CIDEr-D: clipped tf-idf cosine per n-gram order with a Gaussian length
// penalty (sigma = 6), averaged over references and over n = 1..4, scaled by
// ten.

struct CiderVec {
  std::array<NgramMap, kMaxNgram> tfidf;
  std::array<double, kMaxNgram> norm{};
  int length = 0;
};

inline CiderVec cider_vec(const TokenList& toks, const IdfTable& idf) {
  CiderVec v;
  v.length = static_cast<int>(toks.size());
  auto grams = ngram_counts(toks);
  for (int n = 0; n < kMaxNgram; ++n) {
    for (auto& [key, cnt] : grams[n]) {
      double w = cnt * idf.idf(key);
      v.tfidf[n].emplace(key, w);
      v.norm[n] += w * w;
    }
    v.norm[n] = std::sqrt(v.norm[n]);
  }
  return v;
}

struct CiderProfile {
  std::vector<CiderVec> refs;
};

inline CiderProfile make_cider_profile(const RefSet& references, const IdfTable& idf) {
  check(!references.empty(), "cider_d needs at least one reference");
  CiderProfile p;
  p.refs.reserve(references.size());
  for (const TokenList& r : references) p.refs.push_back(cider_vec(r, idf));
  return p;
}

inline constexpr double kCiderSigma = 6.0;

inline double cider_d(const CiderVec& cand, const CiderProfile& profile) {
  if (cand.length == 0) return 0.0;
  double total = 0.0;
  for (const CiderVec& ref : profile.refs) {
    double delta = static_cast<double>(cand.length - ref.length);
    double penalty = std::exp(-delta * delta / (2.0 * kCiderSigma * kCiderSigma));
    for (int n = 0; n < kMaxNgram; ++n) {
      if (cand.norm[n] == 0.0 || ref.norm[n] == 0.0) continue;
      double dot = 0.0;
      for (const auto& [key, cw] : cand.tfidf[n]) {
        auto it = ref.tfidf[n].find(key);
        if (it != ref.tfidf[n].end()) dot += std::min(cw, it->second) * it->second;
      }
      total += dot / (cand.norm[n] * ref.norm[n]) * penalty;
    }
  }
  return 10.0 * total / (kMaxNgram * static_cast<double>(profile.refs.size()));
}

inline double cider_d(const TokenList& candidate, const RefSet& references, const IdfTable& idf) {
  CiderProfile profile = make_cider_profile(references, idf);
  return cider_d(cider_vec(candidate, idf), profile);
}

// ---------------------------------------------------------------------------
// BLEU: clipped modified n-gram precision, geometric mean over 1..N, brevity
// penalty against the closest reference length (ties resolved toward the
// shorter reference). Sentence-level use may enable add-one smoothing for
// n >= 2.

struct BleuStats {
  std::array<double, kMaxNgram> match{};
  std::array<double, kMaxNgram> total{};
  double cand_len = 0;
  double ref_len = 0;

  void accumulate(const BleuStats& o) {
    for (int n = 0; n < kMaxNgram; ++n) {
      match[n] += o.match[n];
      total[n] += o.total[n];
    }
    cand_len += o.cand_len;
    ref_len += o.ref_len;
  }
};

inline BleuStats bleu_stats(const TokenList& candidate, const RefSet& references, int max_n = 4) {
  check(!references.empty(), "bleu needs at least one reference");
  check(max_n >= 1 && max_n <= kMaxNgram, "bleu order must be in [1,4], got ", max_n);
  BleuStats st;
  st.cand_len = static_cast<double>(candidate.size());
  // closest reference length; ties -> shorter
  double best = -1, best_diff = 0;
  for (const TokenList& r : references) {
    double len = static_cast<double>(r.size());
    double diff = std::abs(len - st.cand_len);
    if (best < 0 || diff < best_diff || (diff == best_diff && len < best)) {
      best = len;
      best_diff = diff;
    }
  }
  st.ref_len = best;
  auto cand_grams = ngram_counts(candidate);
  std::vector<std::array<NgramMap, kMaxNgram>> ref_grams;
  ref_grams.reserve(references.size());
  for (const TokenList& r : references) ref_grams.push_back(ngram_counts(r));
  for (int n = 0; n < max_n; ++n) {
    for (const auto& [key, cnt] : cand_grams[n]) {
      double clip = 0.0;
      for (const auto& rg : ref_grams) {
        auto it = rg[n].find(key);
        if (it != rg[n].end()) clip = std::max(clip, it->second);
      }
      st.match[n] += std::min(cnt, clip);
      st.total[n] += cnt;
    }
  }
  return st;
}

inline double bleu_from_stats(const BleuStats& st, int max_n = 4, bool smooth = false) {
  double log_precision = 0.0;
  for (int n = 0; n < max_n; ++n) {
    double m = st.match[n], t = st.total[n];
    if (smooth && n >= 1) {
      m += 1.0;
      t += 1.0;
    }
    if (m <= 0.0 || t <= 0.0) return 0.0;
    log_precision += std::log(m / t);
  }
  log_precision /= max_n;
  double bp = (st.cand_len >= st.ref_len || st.cand_len == 0.0)
                  ? 1.0
                  : std::exp(1.0 - st.ref_len / st.cand_len);
  if (st.cand_len == 0.0) return 0.0;
  return bp * std::exp(log_precision);
}

inline double bleu(const TokenList& candidate, const RefSet& references, int max_n = 4,
                   bool smooth = false) {
  return bleu_from_stats(bleu_stats(candidate, references, max_n), max_n, smooth);
}

// ---------------------------------------------------------------------------
// ROUGE-L: LCS F-measure with beta = 1.2; precision and recall are each the
// maximum over references.

inline int lcs_length(const TokenList& a, const TokenList& b) {
  std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline constexpr double kRougeBeta = 1.2;

inline double rouge_l(const TokenList& candidate, const RefSet& references) {
  check(!references.empty(), "rouge_l needs at least one reference");
  if (candidate.empty()) return 0.0;
  double pmax = 0.0, rmax = 0.0;
  for (const TokenList& r : references) {
    if (r.empty()) continue;
    double lcs = static_cast<double>(lcs_length(candidate, r));
    pmax = std::max(pmax, lcs / static_cast<double>(candidate.size()));
    rmax = std::max(rmax, lcs / static_cast<double>(r.size()));
  }
  if (pmax == 0.0 || rmax == 0.0) return 0.0;
  double b2 = kRougeBeta * kRougeBeta;
  return (1.0 + b2) * pmax * rmax / (rmax + b2 * pmax);
}

}  // namespace hrlcap

#endif  // HRLCAP_METRICS_HPP_
