#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "hrlcap/agent.hpp"

using namespace hrlcap;

namespace {

ModelConfig tiny_config(int vocab = 9) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.feat_dim = 3;
  c.enc_proj = 4;
  c.enc_low = 2;
  c.enc_high = 3;
  c.worker_hidden = 5;
  c.manager_hidden = 4;
  c.embed_dim = 4;
  c.goal_dim = 3;
  c.critic_hidden = 3;
  c.critic_embed = 2;
  c.max_len = 12;
  c.dropout = 0.0;
  return c;
}

Tensor tiny_features(int n, int d, std::uint64_t seed) {
  Pcg32 rng = make_rng(seed, 77);
  Tensor f(n, d);
  for (double& x : f.v) x = rng.uniform(-1.0, 1.0);
  return f;
}

}  // namespace

TEST_CASE("manager step with zero goal projection emits the zero goal") {
  Model m = Model::init(tiny_config(), 1);
  m.params["manager.goal.w"].fill(0.0);
  m.params["manager.goal.b"].fill(0.0);
  Tape tape;
  Binding bind(tape, m);
  EncoderOutputs enc = encode(tape, tape.constant(tiny_features(4, 3, 2)), bind.enc);
  AgentCtx ctx(tape, bind, m.cfg, enc);
  AgentState s = ctx.initial_state();
  ctx.manager_step(s);
  for (double g : tape.val(s.goal).v) CHECK(g == 0.0);
  CHECK(tape.val(s.goal).cols == m.cfg.goal_dim);
  // calling again mid-segment violates the gating contract
  CHECK_THROWS_WITH(ctx.manager_step(s), Catch::Matchers::ContainsSubstring("mid-segment"));
}

TEST_CASE("default goal dimension is 16") {
  ModelConfig c;
  CHECK(c.goal_dim == 16);
}

TEST_CASE("worker step: uniform distribution under zero parameters") {
  Model m = Model::init(tiny_config(), 3);
  for (auto& [name, tensor] : m.params)
    if (name.rfind("worker.proj", 0) == 0) tensor.fill(0.0);
  Tape tape;
  Binding bind(tape, m);
  EncoderOutputs enc = encode(tape, tape.constant(tiny_features(3, 3, 4)), bind.enc);
  AgentCtx ctx(tape, bind, m.cfg, enc);
  AgentState s = ctx.initial_state();
  ctx.manager_step(s);
  Value pi = ctx.worker_step(s, kBos);
  const Tensor& p = tape.val(pi);
  REQUIRE(p.cols == 9);
  for (int v = 0; v < 9; ++v) CHECK(p.v[v] == Catch::Approx(1.0 / 9).margin(1e-12));
  CHECK_THROWS_WITH(ctx.worker_step(s, 9), Catch::Matchers::ContainsSubstring("vocabulary"));
}

TEST_CASE("worker distribution sums to one on random models") {
  Model m = Model::init(tiny_config(), 5);
  Tape tape;
  Binding bind(tape, m);
  EncoderOutputs enc = encode(tape, tape.constant(tiny_features(5, 3, 6)), bind.enc);
  AgentCtx ctx(tape, bind, m.cfg, enc);
  AgentState s = ctx.initial_state();
  ctx.manager_step(s);
  for (int tok : {kBos, 4, 7}) {
    const Tensor& p = tape.val(ctx.worker_step(s, tok));
    double sum = 0.0;
    for (double x : p.v) sum += x;
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("critic step") {
  Model m = Model::init(tiny_config(), 7);
  for (auto& [name, tensor] : m.params)
    if (name.rfind("critic.", 0) == 0) tensor.fill(0.0);
  Tape tape;
  Binding bind(tape, m);
  EncoderOutputs enc = encode(tape, tape.constant(tiny_features(3, 3, 8)), bind.enc);
  AgentCtx ctx(tape, bind, m.cfg, enc);
  AgentState s = ctx.initial_state();
  CHECK(tape.val(ctx.critic_step(s, 4)).v[0] == 0.5);

  Model m2 = Model::init(tiny_config(), 9);
  Tape tape2;
  Binding bind2(tape2, m2);
  EncoderOutputs enc2 = encode(tape2, tape2.constant(tiny_features(3, 3, 8)), bind2.enc);
  AgentCtx ctx2(tape2, bind2, m2.cfg, enc2);
  AgentState s2 = ctx2.initial_state();
  for (int tok : {1, 5, 2, 8}) {
    double p = tape2.val(ctx2.critic_step(s2, tok)).v[0];
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("explore_goal") {
  Pcg32 rng = make_rng(17);
  Tensor g = Tensor::row({0.5, -1.0, 2.0, 0.0});

  Tensor same = explore_goal(g, 0.0, rng);
  CHECK(bitwise_equal(same, g));

  Pcg32 r1 = make_rng(18), r2 = make_rng(18);
  Tensor a = explore_goal(g, 0.3, r1);
  Tensor b = explore_goal(g, 0.3, r2);
  CHECK(bitwise_equal(a, b));

  // E ||eps||^2 = d sigma^2
  double sigma = 0.25;
  int d = 16, draws = 100000 / 16;
  Tensor zero = Tensor::zeros(1, d);
  double acc = 0.0;
  Pcg32 mc = make_rng(19);
  for (int i = 0; i < draws; ++i) {
    Tensor e = explore_goal(zero, sigma, mc);
    for (double x : e.v) acc += x * x;
  }
  double mean = acc / draws;
  CHECK(mean == Catch::Approx(d * sigma * sigma).epsilon(0.03));
}

TEST_CASE("critic gating drives manager re-goaling") {
  // bias the critic to fire every step: one goal per token
  Model m = Model::init(tiny_config(), 21);
  m.params["critic.out.b"] = Tensor::scalar(10.0);
  DecodeOptions opts;
  opts.mode = DecodeMode::kGreedy;
  opts.collect_attention = true;
  Tensor feats = tiny_features(4, 3, 22);
  DecodeResult res = decode(m, feats, opts);
  CHECK(res.manager_attn.size() == res.tokens.size());
  CHECK(res.segments.size() == res.tokens.size());

  // bias it to never fire: a single goal at t=1 and one final segment
  m.params["critic.out.b"] = Tensor::scalar(-10.0);
  DecodeResult res2 = decode(m, feats, opts);
  CHECK(res2.manager_attn.size() == 1);
  CHECK(res2.segments.size() == 1);
  CHECK(res2.segments[0].first == 0);
  CHECK(res2.segments[0].second == static_cast<int>(res2.tokens.size()));
}

TEST_CASE("goal is constant within a segment") {
  Model m = Model::init(tiny_config(), 23);
  Tape tape;
  Binding bind(tape, m);
  EncoderOutputs enc = encode(tape, tape.constant(tiny_features(4, 3, 24)), bind.enc);
  AgentCtx ctx(tape, bind, m.cfg, enc);
  AgentState s = ctx.initial_state();
  std::vector<int> goal_node_per_step;
  for (int step = 0; step < 8; ++step) {
    if (s.manager_due) ctx.manager_step(s);
    goal_node_per_step.push_back(s.goal.id);
    Value pi = ctx.worker_step(s, s.prev_token);
    int token = detail::argmax_token(tape.val(pi));
    bool z = tape.val(ctx.critic_step(s, token)).v[0] > 0.5;
    if (token == kEos) z = true;
    s.tokens.push_back(token);
    s.boundaries.push_back(z ? 1 : 0);
    s.prev_token = token;
    s.manager_due = z;
    if (token == kEos) break;
  }
  // within each segment the goal node is literally the same value
  int start = 0;
  for (std::size_t t = 0; t < s.tokens.size(); ++t) {
    if (s.boundaries[t] || t + 1 == s.tokens.size()) {
      for (int i = start; i <= static_cast<int>(t); ++i)
        CHECK(goal_node_per_step[i] == goal_node_per_step[start]);
      start = static_cast<int>(t) + 1;
    }
  }
}

TEST_CASE("beam(1) equals greedy decoding exactly") {
  for (std::uint64_t seed : {31, 32, 33, 34, 35}) {
    Model m = Model::init(tiny_config(), seed);
    Tensor feats = tiny_features(3 + seed % 3, 3, seed);
    DecodeOptions greedy;
    greedy.mode = DecodeMode::kGreedy;
    DecodeOptions beam;
    beam.mode = DecodeMode::kBeam;
    beam.beam = 1;
    DecodeResult a = decode(m, feats, greedy);
    DecodeResult b = decode(m, feats, beam);
    CHECK(a.tokens == b.tokens);
    CHECK(a.segments == b.segments);
    CHECK(a.log_prob == Catch::Approx(b.log_prob).margin(1e-12));
  }
}

TEST_CASE("decode respects max length and never emits past the end token") {
  Model m = Model::init(tiny_config(), 41);
  Tensor feats = tiny_features(4, 3, 42);
  for (auto mode : {DecodeMode::kGreedy, DecodeMode::kSample, DecodeMode::kBeam}) {
    DecodeOptions opts;
    opts.mode = mode;
    opts.beam = 3;
    opts.seed = 7;
    opts.max_len = 6;
    DecodeResult r = decode(m, feats, opts);
    CHECK(r.tokens.size() <= 6);
    for (std::size_t i = 0; i < r.tokens.size(); ++i) {
      if (r.tokens[i] == kEos) CHECK(i + 1 == r.tokens.size());
    }
    // segments partition the emitted tokens
    int covered = 0;
    for (auto [b, e] : r.segments) {
      CHECK(b == covered);
      covered = e;
    }
    CHECK(covered == static_cast<int>(r.tokens.size()));
  }
}

TEST_CASE("sampled decode is reproducible under a seed") {
  Model m = Model::init(tiny_config(), 51);
  Tensor feats = tiny_features(5, 3, 52);
  DecodeOptions opts;
  opts.mode = DecodeMode::kSample;
  opts.seed = 99;
  DecodeResult a = decode(m, feats, opts);
  DecodeResult b = decode(m, feats, opts);
  CHECK(a.tokens == b.tokens);
  CHECK(a.log_prob == b.log_prob);
  opts.seed = 100;
  DecodeResult c = decode(m, feats, opts);
  bool differs = (c.tokens != a.tokens);
  // different seed will usually differ on an untrained model; do not require
  // it, but the distribution over 5 extra seeds should not all collapse
  if (!differs) {
    for (std::uint64_t s = 101; s <= 105 && !differs; ++s) {
      opts.seed = s;
      differs = decode(m, feats, opts).tokens != a.tokens;
    }
  }
  CHECK(differs);
}

TEST_CASE("cumulative log-probabilities are non-increasing with length") {
  Model m = Model::init(tiny_config(), 61);
  Tensor feats = tiny_features(4, 3, 62);
  DecodeOptions opts;
  opts.mode = DecodeMode::kGreedy;
  opts.collect_top5 = true;
  DecodeResult r = decode(m, feats, opts);
  REQUIRE(!r.top5.empty());
  double cum = 0.0;
  for (std::size_t t = 0; t < r.tokens.size(); ++t) {
    double prev = cum;
    // greedy choice is the top-1 entry
    CHECK(r.top5[t][0].token == r.tokens[t]);
    cum += std::log(r.top5[t][0].prob);
    CHECK(cum <= prev + 1e-15);
  }
  CHECK(cum == Catch::Approx(r.log_prob).margin(1e-9));
}

TEST_CASE("model checkpoint round trip preserves decode behavior") {
  Model m = Model::init(tiny_config(), 71);
  auto path = std::filesystem::temp_directory_path() / "hrlcap_model_test.bin";
  m.save(path.string());
  Model loaded = Model::load(path.string());
  std::filesystem::remove(path);
  CHECK(loaded.cfg.goal_dim == m.cfg.goal_dim);
  REQUIRE(loaded.params.size() == m.params.size());
  for (const auto& [name, tensor] : m.params) CHECK(bitwise_equal(tensor, loaded.params.at(name)));
  Tensor feats = tiny_features(4, 3, 72);
  DecodeResult a = decode(m, feats, {});
  DecodeResult b = decode(loaded, feats, {});
  CHECK(a.tokens == b.tokens);
}
