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

#ifndef HRLCAP_DATASET_HPP_
#define HRLCAP_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hrlcap/checkpoint.hpp"
#include "hrlcap/metrics.hpp"
#include "hrlcap/tensor.hpp"

namespace hrlcap {

using ChunkRanges = std::vector<std::pair<int, int>>;  // half-open token ranges

struct VideoRecord {
  std::string video_id;
  std::string feature_path;  // kept verbatim; resolved against the manifest dir
  std::vector<std::string> references;
  std::vector<ChunkRanges> chunks;               // per reference; empty if unannotated
  std::vector<std::vector<std::string>> chunk_labels;  // preserved, unused
};

struct DatasetManifest {
  std::string split;
  std::string base_dir;  // directory of the manifest file, for path resolution
  std::vector<VideoRecord> records;

  std::string resolve_features(const VideoRecord& r) const {
    std::filesystem::path p(r.feature_path);
    if (p.is_absolute() || base_dir.empty()) return r.feature_path;
    return (std::filesystem::path(base_dir) / p).string();
  }
};

inline void validate_chunks(const VideoRecord& r) {
  for (std::size_t i = 0; i < r.chunks.size(); ++i) {
    if (r.chunks[i].empty()) continue;
    int len = static_cast<int>(tokenize(r.references[i]).size());
    int cursor = 0;
    for (auto [b, e] : r.chunks[i]) {
      check(b == cursor && e > b, "manifest record ", r.video_id, ": chunks of reference ", i,
            " do not partition the caption (gap or empty range at ", b, ")");
      cursor = e;
    }
    check(cursor == len, "manifest record ", r.video_id, ": chunks of reference ", i,
          " cover ", cursor, " tokens but the caption has ", len);
  }
}

// Manifest: JSON-lines, one video per line, UTF-8. load -> save -> load is a
// fixed point.
inline DatasetManifest load_manifest(const std::string& path, bool check_features = true) {
  std::ifstream is(path);
  check(is.good(), "manifest: cannot open ", path);
  DatasetManifest m;
  m.base_dir = std::filesystem::path(path).parent_path().string();
  m.split = std::filesystem::path(path).stem().string();
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail("manifest ", path, " line ", line_no, ": malformed JSON: ", e.what());
    }
    VideoRecord r;
    try {
      r.video_id = j.at("video_id").get<std::string>();
      r.feature_path = j.at("features").get<std::string>();
      r.references = j.at("references").get<std::vector<std::string>>();
      if (j.contains("chunks")) {
        for (const auto& per_ref : j.at("chunks")) {
          ChunkRanges ranges;
          for (const auto& range : per_ref)
            ranges.push_back({range.at(0).get<int>(), range.at(1).get<int>()});
          r.chunks.push_back(std::move(ranges));
        }
      }
      if (j.contains("chunk_labels"))
        r.chunk_labels = j.at("chunk_labels").get<std::vector<std::vector<std::string>>>();
    } catch (const nlohmann::json::exception& e) {
      fail("manifest ", path, " line ", line_no, ": bad record: ", e.what());
    }
    check(!r.references.empty(), "manifest record ", r.video_id, " has no references");
    check(r.chunks.empty() || r.chunks.size() == r.references.size(), "manifest record ",
          r.video_id, ": chunks present for ", r.chunks.size(), " of ", r.references.size(),
          " references");
    check(ids.insert(r.video_id).second, "manifest ", path, ": duplicate video-id ", r.video_id);
    validate_chunks(r);
    if (check_features) {
      std::string fp = m.resolve_features(r);
      check(std::filesystem::exists(fp), "manifest record ", r.video_id,
            ": feature file not found: ", fp);
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  check(os.good(), "manifest: cannot open ", path, " for writing");
  for (const VideoRecord& r : m.records) {
    nlohmann::json j;
    j["video_id"] = r.video_id;
    j["features"] = r.feature_path;
    j["references"] = r.references;
    if (!r.chunks.empty()) {
      nlohmann::json chunks = nlohmann::json::array();
      for (const ChunkRanges& per_ref : r.chunks) {
        nlohmann::json ranges = nlohmann::json::array();
        for (auto [b, e] : per_ref) ranges.push_back({b, e});
        chunks.push_back(std::move(ranges));
      }
      j["chunks"] = std::move(chunks);
    }
    if (!r.chunk_labels.empty()) j["chunk_labels"] = r.chunk_labels;
    os << j.dump() << "\n";
  }
  check(os.good(), "manifest: write to ", path, " failed");
}

// z*_t = 1 iff token t closes a chunk; the appended end-of-sentence position
// always carries 1.
inline std::vector<std::uint8_t> segment_targets(int caption_len, const ChunkRanges& chunks) {
  std::vector<std::uint8_t> z(caption_len + 1, 0);
  int cursor = 0;
  for (auto [b, e] : chunks) {
    check(b == cursor && e > b && e <= caption_len, "segment_targets: chunks do not partition ",
          caption_len, " tokens");
    z[e - 1] = 1;
    cursor = e;
  }
  check(cursor == caption_len, "segment_targets: chunks cover ", cursor, " of ", caption_len,
        " tokens");
  z[caption_len] = 1;  // eos
  return z;
}

// Fallback when a fixture carries no chunk annotations: start a new chunk
// before each connective. Not faithful to parser-derived chunks; fixtures
// only.
inline ChunkRanges heuristic_chunks(const TokenList& tokens) {
  static const std::set<std::string> kSplitters{"then", "while", "after", "and", "before"};
  ChunkRanges out;
  int start = 0;
  for (int t = 1; t < static_cast<int>(tokens.size()); ++t) {
    if (kSplitters.count(tokens[t])) {
      out.push_back({start, t});
      start = t;
    }
  }
  if (start < static_cast<int>(tokens.size()))
    out.push_back({start, static_cast<int>(tokens.size())});
  return out;
}

// ---------------------------------------------------------------------------
// Frame-feature files: "VFEA" | u32 version | u32 n | u32 d | n*d f32
// little-endian, row-major per frame. CSV (one frame per line) is accepted
// for fixtures.

inline constexpr char kFeatureMagic[4] = {'V', 'F', 'E', 'A'};
inline constexpr std::uint32_t kFeatureVersion = 1;

inline void write_features(const std::string& path, const Tensor& feats) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  check(os.good(), "features: cannot open ", path, " for writing");
  detail::write_bytes(os, kFeatureMagic, 4);
  detail::write_le<std::uint32_t>(os, kFeatureVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(feats.rows));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(feats.cols));
  for (double x : feats.v) {
    float f = static_cast<float>(x);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    detail::write_le<std::uint32_t>(os, bits);
  }
  check(os.good(), "features: write to ", path, " failed");
}

inline Tensor read_features_csv(const std::string& path) {
  std::ifstream is(path);
  check(is.good(), "features: cannot open ", path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::string cell;
    for (char c : line) {
      if (c == ',' || c == ' ' || c == '\t') {
        if (!cell.empty()) row.push_back(std::stod(cell)), cell.clear();
      } else {
        cell.push_back(c);
      }
    }
    if (!cell.empty()) row.push_back(std::stod(cell));
    if (!row.empty()) rows.push_back(std::move(row));
  }
  check(!rows.empty(), "features: ", path, " holds no frames");
  Tensor t(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int i = 0; i < t.rows; ++i) {
    check(static_cast<int>(rows[i].size()) == t.cols, "features: ", path, " row ", i, " has ",
          rows[i].size(), " values, expected ", t.cols);
    for (int j = 0; j < t.cols; ++j) t.at(i, j) = rows[i][j];
  }
  return t;
}

inline Tensor read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "features: cannot open ", path);
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kFeatureMagic, 4) != 0) return read_features_csv(path);
  std::uint32_t version = detail::read_le<std::uint32_t>(is);
  check(version == kFeatureVersion, "features: unsupported version ", version, " in ", path);
  std::uint32_t n = detail::read_le<std::uint32_t>(is);
  std::uint32_t d = detail::read_le<std::uint32_t>(is);
  check(n > 0 && d > 0, "features: ", path, " declares empty shape ", n, "x", d);
  Tensor t(static_cast<int>(n), static_cast<int>(d));
  for (double& x : t.v) {
    std::uint32_t bits = detail::read_le<std::uint32_t>(is);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    x = static_cast<double>(f);
  }
  check(t.all_finite(), "features: ", path, " holds non-finite values");
  return t;
}

}  // namespace hrlcap

#endif  // HRLCAP_DATASET_HPP_
