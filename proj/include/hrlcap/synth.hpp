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

#ifndef HRLCAP_SYNTH_HPP_
#define HRLCAP_SYNTH_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "hrlcap/dataset.hpp"
#include "hrlcap/random.hpp"
#include "hrlcap/vocab.hpp"

namespace hrlcap {

// Desk-scale stand-in for multi-action videos: each video is a sequence of
// activity segments; frames are a per-activity embedding plus Gaussian noise;
// the caption is the in-order concatenation of activity phrases and the chunk
// boundaries are the phrase boundaries.
struct SynthTaskSpec {
  int activities = 8;        // uses the first N phrases of the pool
  int min_segments = 2;
  int max_segments = 5;
  int min_frames = 3;        // frames per segment
  int max_frames = 6;
  int feat_dim = 16;
  double feature_noise = 0.3;
  int train_videos = 2000;
  int val_videos = 200;
  int test_videos = 200;
  std::uint64_t seed = 1;
};

inline const std::vector<std::string>& synth_phrase_pool() {
  // 2-4 tokens per phrase; lengths deliberately mixed so chunk boundaries
  // carry lexical rather than positional signal
  static const std::vector<std::string> pool{
      "opens the front door",      "pours some hot coffee",  "reads a thick book",
      "washes dirty dishes",       "throws that soft pillow", "turns off every light",
      "sits down quietly",         "walks across this room", "folds warm clean laundry",
      "grabs another small snack", "waves hello",            "stacks two heavy boxes",
      "wipes both kitchen counters", "lifts up their phone", "plays with green yarn",
      "sweeps under old tables"};
  return pool;
}

struct SynthVideo {
  std::string id;
  std::vector<int> activity_sequence;
  Tensor features;
  std::string caption;
  ChunkRanges chunks;
};

namespace detail {

inline SynthVideo make_synth_video(const SynthTaskSpec& spec,
                                   const std::vector<TokenList>& phrases,
                                   const std::vector<Tensor>& embeddings,
                                   const std::string& id, Pcg32& rng) {
  SynthVideo v;
  v.id = id;
  int k = spec.min_segments +
          static_cast<int>(rng.below(static_cast<std::uint32_t>(spec.max_segments - spec.min_segments + 1)));
  int prev = -1;
  for (int s = 0; s < k; ++s) {
    int a = static_cast<int>(rng.below(static_cast<std::uint32_t>(spec.activities)));
    while (spec.activities > 1 && a == prev)
      a = static_cast<int>(rng.below(static_cast<std::uint32_t>(spec.activities)));
    v.activity_sequence.push_back(a);
    prev = a;
  }
  std::vector<int> frames_per_segment;
  int total_frames = 0;
  for (int s = 0; s < k; ++s) {
    int m = spec.min_frames +
            static_cast<int>(rng.below(static_cast<std::uint32_t>(spec.max_frames - spec.min_frames + 1)));
    frames_per_segment.push_back(m);
    total_frames += m;
  }
  v.features = Tensor(total_frames, spec.feat_dim);
  int row = 0;
  for (int s = 0; s < k; ++s) {
    const Tensor& emb = embeddings[v.activity_sequence[s]];
    for (int f = 0; f < frames_per_segment[s]; ++f, ++row)
      for (int j = 0; j < spec.feat_dim; ++j)
        v.features.at(row, j) = emb.v[j] + spec.feature_noise * rng.next_gaussian();
  }
  int cursor = 0;
  for (int s = 0; s < k; ++s) {
    const TokenList& phrase = phrases[v.activity_sequence[s]];
    for (const std::string& w : phrase) {
      if (!v.caption.empty()) v.caption.push_back(' ');
      v.caption += w;
    }
    v.chunks.push_back({cursor, cursor + static_cast<int>(phrase.size())});
    cursor += static_cast<int>(phrase.size());
  }
  return v;
}

}  // namespace detail

struct SynthDataset {
  DatasetManifest train, val, test;
  Vocabulary vocab;
};

// Writes <out_dir>/{train,val,test}.jsonl, <out_dir>/features/*.vfeat and
// <out_dir>/vocab.txt. Pure function of (spec): identical spec produces a
// bit-identical dataset.
inline SynthDataset gen_synth(const SynthTaskSpec& spec, const std::string& out_dir) {
  check(spec.activities >= 2 &&
            spec.activities <= static_cast<int>(synth_phrase_pool().size()),
        "synth: activities must lie in [2,", synth_phrase_pool().size(), "], got ",
        spec.activities);
  check(spec.min_segments >= 1 && spec.max_segments >= spec.min_segments,
        "synth: bad segment range");
  check(spec.min_frames >= 1 && spec.max_frames >= spec.min_frames, "synth: bad frame range");
  check(spec.feature_noise >= 0.0, "synth: feature noise must be nonnegative");

  std::vector<TokenList> phrases;
  for (int a = 0; a < spec.activities; ++a) phrases.push_back(tokenize(synth_phrase_pool()[a]));

  Pcg32 emb_rng = make_rng(spec.seed, 0xE0B);
  std::vector<Tensor> embeddings;
  for (int a = 0; a < spec.activities; ++a) {
    Tensor e(1, spec.feat_dim);
    for (double& x : e.v) x = emb_rng.next_gaussian();
    embeddings.push_back(std::move(e));
  }

  std::filesystem::create_directories(std::filesystem::path(out_dir) / "features");

  SynthDataset ds;
  struct SplitSpec {
    const char* name;
    int count;
    std::uint64_t salt;
    DatasetManifest* manifest;
  };
  SplitSpec splits[] = {{"train", spec.train_videos, 0x51, &ds.train},
                        {"val", spec.val_videos, 0x52, &ds.val},
                        {"test", spec.test_videos, 0x53, &ds.test}};
  for (const SplitSpec& sp : splits) {
    Pcg32 rng = make_rng(spec.seed, sp.salt);
    sp.manifest->split = sp.name;
    sp.manifest->base_dir = out_dir;
    for (int i = 0; i < sp.count; ++i) {
      std::string id = std::string(sp.name) + "_" + std::to_string(i);
      SynthVideo v = detail::make_synth_video(spec, phrases, embeddings, id, rng);
      std::string rel = "features/" + id + ".vfeat";
      write_features((std::filesystem::path(out_dir) / rel).string(), v.features);
      VideoRecord r;
      r.video_id = v.id;
      r.feature_path = rel;
      r.references = {v.caption};
      r.chunks = {v.chunks};
      sp.manifest->records.push_back(std::move(r));
    }
    save_manifest(*sp.manifest, (std::filesystem::path(out_dir) / (std::string(sp.name) + ".jsonl")).string());
  }

  std::vector<TokenList> train_captions;
  for (const VideoRecord& r : ds.train.records)
    for (const std::string& ref : r.references) train_captions.push_back(tokenize(ref));
  ds.vocab = Vocabulary::build(train_captions, 1);
  ds.vocab.save((std::filesystem::path(out_dir) / "vocab.txt").string());
  return ds;
}

}  // namespace hrlcap

#endif  // HRLCAP_SYNTH_HPP_
