#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hrlcap/encoder.hpp"
#include "hrlcap/optim.hpp"
#include "hrlcap/random.hpp"
#include "hrlcap/rnn.hpp"

using namespace hrlcap;

namespace {

LstmVars zero_lstm(Tape& t, int in, int hidden) {
  return {t.parameter(Tensor::zeros(in, 4 * hidden)), t.parameter(Tensor::zeros(hidden, 4 * hidden)),
          t.parameter(Tensor::zeros(1, 4 * hidden)), hidden};
}

LstmVars random_lstm(Tape& t, int in, int hidden, Pcg32& rng) {
  return {t.parameter(uniform_init(in, 4 * hidden, 0.5, rng)),
          t.parameter(uniform_init(hidden, 4 * hidden, 0.5, rng)),
          t.parameter(uniform_init(1, 4 * hidden, 0.5, rng)), hidden};
}

struct EncParams {
  Tensor proj_w, proj_b;
  Tensor fw_x, fw_h, fb, bw_x, bw_h, bb, hw_x, hw_h, hb;
};

EncParams random_enc_params(int feat, int proj, int low, int high, Pcg32& rng) {
  EncParams p;
  p.proj_w = uniform_init(feat, proj, 0.5, rng);
  p.proj_b = uniform_init(1, proj, 0.5, rng);
  p.fw_x = uniform_init(proj, 4 * low, 0.5, rng);
  p.fw_h = uniform_init(low, 4 * low, 0.5, rng);
  p.fb = uniform_init(1, 4 * low, 0.5, rng);
  p.bw_x = uniform_init(proj, 4 * low, 0.5, rng);
  p.bw_h = uniform_init(low, 4 * low, 0.5, rng);
  p.bb = uniform_init(1, 4 * low, 0.5, rng);
  p.hw_x = uniform_init(2 * low, 4 * high, 0.5, rng);
  p.hw_h = uniform_init(high, 4 * high, 0.5, rng);
  p.hb = uniform_init(1, 4 * high, 0.5, rng);
  return p;
}

EncoderVars bind_enc(Tape& t, const EncParams& p, int low, int high) {
  EncoderVars v;
  v.proj_w = t.parameter(p.proj_w);
  v.proj_b = t.parameter(p.proj_b);
  v.fwd = {t.parameter(p.fw_x), t.parameter(p.fw_h), t.parameter(p.fb), low};
  v.bwd = {t.parameter(p.bw_x), t.parameter(p.bw_h), t.parameter(p.bb), low};
  v.high = {t.parameter(p.hw_x), t.parameter(p.hw_h), t.parameter(p.hb), high};
  return v;
}

}  // namespace

TEST_CASE("lstm step with zero parameters") {
  Tape t;
  LstmVars p = zero_lstm(t, 3, 1);
  Value x = t.constant(Tensor::row({0.3, -0.7, 0.1}));

  auto z = lstm_step(t, x, t.constant(Tensor::zeros(1, 1)), t.constant(Tensor::zeros(1, 1)), p);
  CHECK(t.val(z.h).v[0] == 0.0);
  CHECK(t.val(z.c).v[0] == 0.0);

  auto o = lstm_step(t, x, t.constant(Tensor::zeros(1, 1)), t.constant(Tensor::row({1.0})), p);
  CHECK(t.val(o.c).v[0] == Catch::Approx(0.5).margin(1e-15));
  CHECK(t.val(o.h).v[0] == Catch::Approx(0.5 * std::tanh(0.5)).margin(1e-15));
  CHECK(t.val(o.h).v[0] == Catch::Approx(0.2311).margin(5e-5));

  Pcg32 rng = make_rng(1);
  Tape t2;
  LstmVars pr = random_lstm(t2, 3, 5, rng);
  auto out = lstm_step(t2, t2.constant(Tensor::row({1, 2, 3})),
                       t2.constant(Tensor::zeros(1, 5)), t2.constant(Tensor::zeros(1, 5)), pr);
  CHECK(t2.val(out.h).cols == 5);
  CHECK(t2.val(out.c).cols == 5);

  CHECK_THROWS_AS(lstm_step(t2, t2.constant(Tensor::row({1, 2})),
                            t2.constant(Tensor::zeros(1, 5)), t2.constant(Tensor::zeros(1, 5)), pr),
                  Error);
}

TEST_CASE("gru step convention") {
  Tape t;
  GruVars p{t.parameter(Tensor::zeros(2, 4)), t.parameter(Tensor::zeros(2, 4)),
            t.parameter(Tensor::zeros(1, 4)), t.parameter(Tensor::zeros(2, 2)),
            t.parameter(Tensor::zeros(2, 2)), t.parameter(Tensor::zeros(1, 2)), 2};
  Value x = t.constant(Tensor::row({0.4, -0.9}));
  Value h0 = t.constant(Tensor::row({0.8, -0.6}));
  Value h1 = gru_step(t, x, h0, p);
  CHECK(t.val(h1).v[0] == Catch::Approx(0.4).margin(1e-15));
  CHECK(t.val(h1).v[1] == Catch::Approx(-0.3).margin(1e-15));

  Value hz = gru_step(t, x, t.constant(Tensor::zeros(1, 2)), p);
  CHECK(t.val(hz).v == std::vector<double>{0, 0});
}

TEST_CASE("gru gradient vs finite differences") {
  Pcg32 rng = make_rng(2);
  std::vector<Tensor> point{
      uniform_init(3, 8, 0.5, rng),  uniform_init(4, 8, 0.5, rng), uniform_init(1, 8, 0.5, rng),
      uniform_init(3, 4, 0.5, rng),  uniform_init(4, 4, 0.5, rng), uniform_init(1, 4, 0.5, rng),
      uniform_init(1, 3, 1.0, rng),  uniform_init(1, 4, 1.0, rng)};
  Tensor w = uniform_init(1, 4, 1.0, rng);
  double err = finite_difference_check(
      [&](Tape& t, const std::vector<Value>& v) {
        GruVars p{v[0], v[1], v[2], v[3], v[4], v[5], 4};
        Value h = gru_step(t, v[6], v[7], p);
        return t.sum(t.mul(h, t.constant(w)));
      },
      point, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("encode shapes and determinism") {
  Pcg32 rng = make_rng(3);
  EncParams p = random_enc_params(3, 4, 2, 5, rng);
  Tensor feats = uniform_init(4, 3, 1.0, rng);

  Tape t;
  EncoderVars v = bind_enc(t, p, 2, 5);
  EncoderOutputs out = encode(t, t.constant(feats), v);
  CHECK(t.val(out.low).rows == 4);
  CHECK(t.val(out.low).cols == 4);  // 2 per direction, concatenated
  CHECK(t.val(out.high).rows == 4);
  CHECK(t.val(out.high).cols == 5);
  CHECK(out.frames == 4);

  // purity: an independent record produces bitwise-identical states
  Tape t2;
  EncoderVars v2 = bind_enc(t2, p, 2, 5);
  EncoderOutputs out2 = encode(t2, t2.constant(feats), v2);
  CHECK(bitwise_equal(t.val(out.low), t2.val(out2.low)));
  CHECK(bitwise_equal(t.val(out.high), t2.val(out2.high)));

  Tape t3;
  EncoderVars v3 = bind_enc(t3, p, 2, 5);
  CHECK_THROWS_WITH(encode(t3, t3.constant(Tensor(0, 3)), v3),
                    Catch::Matchers::ContainsSubstring("empty"));
}

TEST_CASE("reversing frames reverses the backward-direction states") {
  // With the two direction LSTMs tied, the backward half of the reversed
  // input equals the forward half of the original in reverse frame order.
  Pcg32 rng = make_rng(4);
  EncParams p = random_enc_params(3, 4, 2, 3, rng);
  p.bw_x = p.fw_x;
  p.bw_h = p.fw_h;
  p.bb = p.fb;
  int n = 5;
  Tensor feats = uniform_init(n, 3, 1.0, rng);
  Tensor rev(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) rev.at(i, j) = feats.at(n - 1 - i, j);

  Tape ta, tb;
  EncoderVars va = bind_enc(ta, p, 2, 3);
  EncoderVars vb = bind_enc(tb, p, 2, 3);
  const Tensor& low = ta.val(encode(ta, ta.constant(feats), va).low);
  const Tensor& low_rev = tb.val(encode(tb, tb.constant(rev), vb).low);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) {
      // backward half (cols 2..4) of reversed input vs forward half (cols
      // 0..2) of the original at the mirrored frame
      CHECK(low_rev.at(i, 2 + j) == low.at(n - 1 - i, j));
    }
}

TEST_CASE("five-step unrolled encoder matches finite differences") {
  Pcg32 rng = make_rng(5);
  EncParams p = random_enc_params(2, 3, 2, 2, rng);
  Tensor feats = uniform_init(5, 2, 1.0, rng);
  Tensor wlow = uniform_init(5, 4, 1.0, rng);
  Tensor whigh = uniform_init(5, 2, 1.0, rng);

  std::vector<Tensor> point{p.proj_w, p.proj_b, p.fw_x, p.fw_h, p.fb,
                            p.bw_x,   p.bw_h,   p.bb,   p.hw_x, p.hw_h, p.hb};
  double err = finite_difference_check(
      [&](Tape& t, const std::vector<Value>& v) {
        EncoderVars e;
        e.proj_w = v[0];
        e.proj_b = v[1];
        e.fwd = {v[2], v[3], v[4], 2};
        e.bwd = {v[5], v[6], v[7], 2};
        e.high = {v[8], v[9], v[10], 2};
        EncoderOutputs out = encode(t, t.constant(feats), e);
        return t.add(t.sum(t.mul(out.low, t.constant(wlow))),
                     t.sum(t.mul(out.high, t.constant(whigh))));
      },
      point, 1e-5);
  CHECK(err < 1e-4);
}
