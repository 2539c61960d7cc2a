#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "hrlcap/config.hpp"
#include "hrlcap/dataset.hpp"
#include "hrlcap/synth.hpp"
#include "hrlcap/vocab.hpp"

using namespace hrlcap;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("hrlcap_test_" + std::to_string(make_rng(::getpid(), ::clock()).next_u32()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("vocabulary build and reserved ids") {
  std::vector<TokenList> caps{tokenize("a man"), tokenize("a man runs"), tokenize("zebra runs")};
  Vocabulary v = Vocabulary::build(caps, 1);
  CHECK(v.size() == 4 + 4);
  CHECK(v.id("<pad>") == kPad);
  CHECK(v.id("<bos>") == kBos);
  CHECK(v.id("<eos>") == kEos);
  CHECK(v.id("<unk>") == kUnk);
  // frequency desc, lexicographic tie-break: a(2) man(2) runs(2) then zebra(1)
  CHECK(v.id("a") == 4);
  CHECK(v.id("man") == 5);
  CHECK(v.id("runs") == 6);
  CHECK(v.id("zebra") == 7);
  CHECK(v.id("missing") == kUnk);

  Vocabulary v2 = Vocabulary::build(caps, 2);
  CHECK(v2.id("zebra") == kUnk);  // below min-count
  CHECK(v2.size() == 4 + 3);

  Vocabulary v3 = Vocabulary::build(caps, 1);
  for (const auto& cap : caps)
    for (const auto& tok : cap) CHECK(v3.id(tok) == v.id(tok));

  TempDir tmp;
  std::string path = (tmp.path / "vocab.txt").string();
  v.save(path);
  Vocabulary loaded = Vocabulary::load(path);
  CHECK(loaded.size() == v.size());
  CHECK(loaded.id("zebra") == v.id("zebra"));
  CHECK_THROWS_AS(loaded.token(99), Error);
}

TEST_CASE("manifest round trip is a fixed point") {
  TempDir tmp;
  Tensor feats(3, 2, {1, 2, 3, 4, 5, 6});
  write_features((tmp.path / "v1.vfeat").string(), feats);

  DatasetManifest m;
  m.split = "train";
  m.base_dir = tmp.path.string();
  VideoRecord r;
  r.video_id = "v1";
  r.feature_path = "v1.vfeat";
  r.references = {"a person opens the door"};
  r.chunks = {{{0, 2}, {2, 5}}};
  r.chunk_labels = {{"NP", "VP"}};
  m.records.push_back(r);

  std::string p1 = (tmp.path / "train.jsonl").string();
  save_manifest(m, p1);
  DatasetManifest l1 = load_manifest(p1);
  std::string p2 = (tmp.path / "again.jsonl").string();
  save_manifest(l1, p2);
  DatasetManifest l2 = load_manifest(p2);

  std::ifstream f1(p1), f2(p2);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  REQUIRE(l2.records.size() == 1);
  CHECK(l2.records[0].video_id == "v1");
  CHECK(l2.records[0].chunks == l1.records[0].chunks);
  CHECK(l2.records[0].chunk_labels[0] == std::vector<std::string>{"NP", "VP"});
}

TEST_CASE("manifest rejects bad records") {
  TempDir tmp;
  Tensor feats(2, 2, {1, 2, 3, 4});
  write_features((tmp.path / "v1.vfeat").string(), feats);

  auto write_lines = [&](const std::string& name, const std::string& body) {
    std::ofstream os(tmp.path / name);
    os << body;
    return (tmp.path / name).string();
  };

  std::string dup = write_lines(
      "dup.jsonl",
      R"({"video_id":"v1","features":"v1.vfeat","references":["a b"]})"
      "\n"
      R"({"video_id":"v1","features":"v1.vfeat","references":["c d"]})"
      "\n");
  CHECK_THROWS_WITH(load_manifest(dup), Catch::Matchers::ContainsSubstring("duplicate"));

  std::string gap = write_lines(
      "gap.jsonl",
      R"({"video_id":"v2","features":"v1.vfeat","references":["a b c"],"chunks":[[[0,1],[2,3]]]})"
      "\n");
  CHECK_THROWS_WITH(load_manifest(gap), Catch::Matchers::ContainsSubstring("partition"));

  std::string missing = write_lines(
      "missing.jsonl",
      R"({"video_id":"v3","features":"absent.vfeat","references":["a b"]})"
      "\n");
  CHECK_THROWS_WITH(load_manifest(missing), Catch::Matchers::ContainsSubstring("not found"));

  std::string malformed = write_lines("bad.jsonl", "{nope\n");
  CHECK_THROWS_WITH(load_manifest(malformed), Catch::Matchers::ContainsSubstring("malformed"));
}

TEST_CASE("segment targets") {
  // chunks ["a person", "opens the door"]: final token of each chunk fires
  auto z = segment_targets(5, {{0, 2}, {2, 5}});
  CHECK(z == std::vector<std::uint8_t>{0, 1, 0, 0, 1, 1});

  auto single = segment_targets(3, {{0, 3}});
  CHECK(single == std::vector<std::uint8_t>{0, 0, 1, 1});
  CHECK(single.size() == 3 + 1);

  CHECK_THROWS_AS(segment_targets(4, {{0, 2}}), Error);
  CHECK_THROWS_AS(segment_targets(4, {{0, 2}, {3, 4}}), Error);
}

TEST_CASE("heuristic chunk fallback") {
  auto chunks = heuristic_chunks(tokenize("a man runs and jumps"));
  CHECK(chunks == ChunkRanges{{0, 3}, {3, 5}});
  auto no_split = heuristic_chunks(tokenize("a man runs"));
  CHECK(no_split == ChunkRanges{{0, 3}});
  // splitter as the first token opens no empty chunk
  auto leading = heuristic_chunks(tokenize("then he left"));
  CHECK(leading == ChunkRanges{{0, 3}});
}

TEST_CASE("feature files: binary round trip and csv fallback") {
  TempDir tmp;
  Pcg32 rng = make_rng(77);
  Tensor feats(4, 3);
  for (double& x : feats.v) x = rng.uniform(-2, 2);
  std::string bin = (tmp.path / "f.vfeat").string();
  write_features(bin, feats);
  Tensor loaded = read_features(bin);
  REQUIRE(loaded.rows == 4);
  REQUIRE(loaded.cols == 3);
  for (int i = 0; i < feats.size(); ++i)
    CHECK(loaded.v[i] == Catch::Approx(feats.v[i]).margin(1e-6));  // f32 storage

  std::string csv = (tmp.path / "f.csv").string();
  {
    std::ofstream os(csv);
    os << "1.5,2.0,-3.25\n0.5, 1.0, 2.5\n";
  }
  Tensor c = read_features(csv);
  REQUIRE(c.rows == 2);
  REQUIRE(c.cols == 3);
  CHECK(c.at(0, 2) == -3.25);
  CHECK(c.at(1, 1) == 1.0);
}

TEST_CASE("synthetic generation is deterministic and well-formed") {
  TempDir a, b;
  SynthTaskSpec spec;
  spec.activities = 6;
  spec.train_videos = 12;
  spec.val_videos = 4;
  spec.test_videos = 4;
  spec.seed = 42;
  SynthDataset da = gen_synth(spec, a.path.string());
  SynthDataset db = gen_synth(spec, b.path.string());

  REQUIRE(da.train.records.size() == 12);
  for (std::size_t i = 0; i < da.train.records.size(); ++i) {
    const VideoRecord& ra = da.train.records[i];
    const VideoRecord& rb = db.train.records[i];
    CHECK(ra.references == rb.references);
    CHECK(ra.chunks == rb.chunks);
    Tensor fa = read_features(da.train.resolve_features(ra));
    Tensor fb = read_features(db.train.resolve_features(rb));
    CHECK(bitwise_equal(fa, fb));
    // caption token count equals the sum of phrase lengths
    int len = static_cast<int>(tokenize(ra.references[0]).size());
    CHECK(ra.chunks[0].back().second == len);
    // 2..5 segments of 3..6 frames
    int segs = static_cast<int>(ra.chunks[0].size());
    CHECK(segs >= 2);
    CHECK(segs <= 5);
    CHECK(fa.rows >= 3 * segs);
    CHECK(fa.rows <= 6 * segs);
  }

  // zero noise: every frame of an activity is bit-identical
  TempDir c;
  spec.feature_noise = 0.0;
  spec.train_videos = 3;
  SynthDataset dc = gen_synth(spec, c.path.string());
  Tensor f = read_features(dc.train.resolve_features(dc.train.records[0]));
  const ChunkRanges& chunks = dc.train.records[0].chunks[0];
  (void)chunks;
  // frames within the first segment are identical
  bool same = true;
  for (int j = 0; j < f.cols; ++j) same = same && (f.at(0, j) == f.at(1, j));
  CHECK(same);
}

TEST_CASE("config parsing, presets and env overrides") {
  TempDir tmp;
  std::string path = (tmp.path / "run.conf").string();
  {
    std::ofstream os(path);
    os << "# a comment\n"
          "goal_dim = 32\n"
          "gamma=0.9   # trailing comment\n"
          "\n"
          "schedule = W:2,M:1\n";
  }
  Config c = Config::load(path);
  CHECK(c.geti("goal_dim") == 32);
  CHECK(c.getd("gamma") == 0.9);
  CHECK(c.gets("schedule") == "W:2,M:1");
  // untouched keys keep their documented defaults
  CHECK(c.geti("batch") == 64);
  CHECK(c.getd("dropout") == 0.5);
  CHECK(c.geti("beam") == 5);
  CHECK(c.getd("clip") == 10.0);
  CHECK(c.getd("sigma") == 0.1);

  {
    std::ofstream os(path);
    os << "not_a_key = 3\n";
  }
  CHECK_THROWS_WITH(Config::load(path), Catch::Matchers::ContainsSubstring("unknown key"));

  ::setenv("HRLCAP_GOAL_DIM", "64", 1);
  Config e;
  e.apply_env_overrides();
  CHECK(e.geti("goal_dim") == 64);
  ::unsetenv("HRLCAP_GOAL_DIM");

  // paper-scale presets
  Config msr;
  msr.apply_preset("msrvtt");
  CHECK(msr.geti("enc_low") == 512);
  CHECK(msr.geti("enc_high") == 256);
  CHECK(msr.geti("worker_hidden") == 1024);
  CHECK(msr.geti("embed_dim") == 512);
  CHECK(msr.geti("max_len") == 30);
  CHECK(msr.geti("max_frames") == 50);
  CHECK(msr.geti("critic_hidden") == 128);
  Config cha;
  cha.apply_preset("charades");
  CHECK(cha.geti("max_len") == 60);
  CHECK(cha.geti("max_frames") == 150);
  CHECK(cha.geti("critic_hidden") == 64);
  CHECK_THROWS_AS(cha.apply_preset("bogus"), Error);
}
