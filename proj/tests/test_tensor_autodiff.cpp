#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "hrlcap/checkpoint.hpp"
#include "hrlcap/graph.hpp"
#include "hrlcap/optim.hpp"
#include "hrlcap/random.hpp"
#include "hrlcap/tensor.hpp"

using namespace hrlcap;

namespace {

Tensor random_tensor(int r, int c, Pcg32& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (double& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("primitive forward values") {
  Tape tape;
  Value a = tape.constant(Tensor(2, 2, {1, 2, 3, 4}));
  Value b = tape.constant(Tensor(2, 1, {1, 1}));
  Value c = tape.matmul(a, b);
  CHECK(tape.val(c).v == std::vector<double>{3, 7});

  Value s = tape.softmax(tape.constant(Tensor::row({0, 0, 0, 0})));
  for (double x : tape.val(s).v) CHECK(x == Catch::Approx(0.25).margin(1e-15));

  Value t = tape.tanh(tape.scalar(0.5));
  CHECK(tape.val(t).v[0] == Catch::Approx(0.46211715726000974).epsilon(1e-12));
  Value g = tape.sigmoid(tape.scalar(0.0));
  CHECK(tape.val(g).v[0] == 0.5);
}

TEST_CASE("apply_primitive dispatch matches builders") {
  Tape tape;
  Value a = tape.constant(Tensor(2, 2, {1, 2, 3, 4}));
  Value b = tape.constant(Tensor(2, 1, {1, 1}));
  std::vector<Value> in{a, b};
  Value c = apply_primitive(tape, Primitive::kMatmul, in);
  CHECK(tape.val(c).v == std::vector<double>{3, 7});

  PrimitiveAttrs attrs;
  attrs.index = 1;
  std::vector<Value> tab{a};
  Value e = apply_primitive(tape, Primitive::kEmbeddingLookup, tab, attrs);
  CHECK(tape.val(e).v == std::vector<double>{3, 4});
}

TEST_CASE("shape and index errors name the operands") {
  Tape tape;
  Value a = tape.constant(Tensor(2, 3, {1, 2, 3, 4, 5, 6}));
  Value b = tape.constant(Tensor(2, 1, {1, 1}));
  CHECK_THROWS_WITH(tape.matmul(a, b),
                    Catch::Matchers::ContainsSubstring("2x3") &&
                        Catch::Matchers::ContainsSubstring("2x1"));
  CHECK_THROWS_WITH(tape.embed(a, 5), Catch::Matchers::ContainsSubstring("index 5"));
  CHECK_THROWS_AS(tape.log(tape.scalar(0.0)), Error);
  CHECK_THROWS_WITH(tape.backward(a), Catch::Matchers::ContainsSubstring("scalar"));
}

TEST_CASE("backward: sum of squares") {
  Tape tape;
  Value x = tape.parameter(Tensor::row({1, 2}));
  Value loss = tape.sum(tape.mul(x, x));
  tape.backward(loss);
  Tensor g = tape.grad_of(x);
  CHECK(g.v[0] == Catch::Approx(2.0));
  CHECK(g.v[1] == Catch::Approx(4.0));
}

TEST_CASE("backward: softmax cross-entropy at uniform logits") {
  // loss = -log softmax(x)[target]; at uniform logits the input gradient is
  // pi - onehot.
  Tape tape;
  Value x = tape.parameter(Tensor::row({0, 0, 0, 0}));
  Value pi = tape.softmax(x);
  int target = 2;
  Value picked = tape.slice(pi, 0, 1, target, target + 1);
  Value loss = tape.neg(tape.log(picked));
  tape.backward(loss);
  Tensor g = tape.grad_of(x);
  for (int i = 0; i < 4; ++i) {
    double expected = 0.25 - (i == target ? 1.0 : 0.0);
    CHECK(g.v[i] == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("backward skips non-parameter leaves and repeated calls agree") {
  Tape tape;
  Value x = tape.parameter(Tensor::row({1.5, -0.5}));
  Value k = tape.constant(Tensor::row({2.0, 3.0}));
  Value loss = tape.sum(tape.mul(x, k));
  GradientMap g1 = tape.backward(loss);
  REQUIRE(g1.size() == 1);
  CHECK(g1.begin()->second.v == std::vector<double>{2.0, 3.0});
  GradientMap g2 = tape.backward(loss);
  CHECK(g2.begin()->second.v == g1.begin()->second.v);
}

TEST_CASE("finite differences agree for every primitive") {
  Pcg32 rng = make_rng(7);
  double step = 1e-5;

  auto fd = [&](const LossBuilder& f, std::vector<Tensor> point) {
    double err = finite_difference_check(f, std::move(point), step);
    CHECK(err < 1e-4);
  };

  Tensor w = random_tensor(3, 4, rng);
  fd([&](Tape& t, const std::vector<Value>& v) {
       return t.sum(t.mul(t.matmul(v[0], v[1]), t.constant(w)));
     },
     {random_tensor(3, 2, rng), random_tensor(2, 4, rng)});

  fd([&](Tape& t, const std::vector<Value>& v) { return t.sum(t.add(v[0], v[1])); },
     {random_tensor(2, 3, rng), random_tensor(2, 3, rng)});
  Tensor w43 = random_tensor(4, 3, rng);
  fd([&](Tape& t, const std::vector<Value>& v) {
       return t.sum(t.mul(t.add(v[0], v[1]), t.constant(w43)));
     },
     {random_tensor(4, 3, rng), random_tensor(1, 3, rng)});  // row broadcast
  fd([&](Tape& t, const std::vector<Value>& v) { return t.sum(t.mul(v[0], v[1])); },
     {random_tensor(2, 3, rng), Tensor::scalar(0.7)});  // scalar broadcast

  Tensor w53 = random_tensor(5, 3, rng);
  fd([&](Tape& t, const std::vector<Value>& v) {
       return t.sum(t.mul(t.concat(0, {v[0], v[1]}), t.constant(w53)));
     },
     {random_tensor(2, 3, rng), random_tensor(3, 3, rng)});
  Tensor w25 = random_tensor(2, 5, rng);
  fd([&](Tape& t, const std::vector<Value>& v) {
       return t.sum(t.mul(t.concat(1, {v[0], v[1]}), t.constant(w25)));
     },
     {random_tensor(2, 2, rng), random_tensor(2, 3, rng)});

  Tensor w23 = random_tensor(2, 3, rng);
  for (auto unary : {&Tape::tanh, &Tape::sigmoid}) {
    fd([&, unary](Tape& t, const std::vector<Value>& v) {
         return t.sum(t.mul((t.*unary)(v[0]), t.constant(w23)));
       },
       {random_tensor(2, 3, rng)});
  }

  Tensor w24 = random_tensor(2, 4, rng);
  fd([&](Tape& t, const std::vector<Value>& v) {
       return t.sum(t.mul(t.softmax(v[0]), t.constant(w24)));
     },
     {random_tensor(2, 4, rng)});

  fd([&](Tape& t, const std::vector<Value>& v) {
       return t.sum(t.log(t.sigmoid(v[0])));
     },
     {random_tensor(2, 3, rng)});

  Tensor w13 = random_tensor(1, 3, rng);
  fd([&](Tape& t, const std::vector<Value>& v) {
       return t.sum(t.mul(t.embed(v[0], 2), t.constant(w13)));
     },
     {random_tensor(4, 3, rng)});

  Tensor w22 = random_tensor(2, 2, rng);
  fd([&](Tape& t, const std::vector<Value>& v) {
       return t.sum(t.mul(t.slice(v[0], 1, 3, 0, 2), t.constant(w22)));
     },
     {random_tensor(3, 3, rng)});

  fd([&](Tape& t, const std::vector<Value>& v) { return t.sum(v[0]); },
     {random_tensor(3, 2, rng)});

  Tensor w32 = random_tensor(3, 2, rng);
  fd([&](Tape& t, const std::vector<Value>& v) {
       return t.sum(t.mul(t.transpose(v[0]), t.constant(w32)));
     },
     {random_tensor(2, 3, rng)});
}

TEST_CASE("finite_difference_check examples") {
  double err = finite_difference_check(
      [](Tape& t, const std::vector<Value>& v) { return t.tanh(v[0]); },
      {Tensor::scalar(0.5)}, 1e-5);
  CHECK(err < 1e-6);
  {
    Tape tape;
    Value x = tape.parameter(Tensor::scalar(0.5));
    Value y = tape.tanh(x);
    tape.backward(y);
    double th = std::tanh(0.5);
    CHECK(tape.grad_of(x).v[0] == Catch::Approx(1.0 - th * th).epsilon(1e-12));
    CHECK(1.0 - th * th == Catch::Approx(0.786448).margin(5e-7));
  }

  double const_err = finite_difference_check(
      [](Tape& t, const std::vector<Value>& v) {
        (void)v;
        return t.scalar(3.0);
      },
      {Tensor::scalar(1.0)}, 1e-5);
  CHECK(const_err == 0.0);

  CHECK_THROWS_AS(finite_difference_check(
                      [](Tape& t, const std::vector<Value>& v) { return t.log(v[0]); },
                      {Tensor::scalar(1.0)}, 0.0),
                  Error);
}

TEST_CASE("softmax rows sum to one within 1e-12") {
  Pcg32 rng = make_rng(11);
  Tape tape;
  Value s = tape.softmax(tape.constant(random_tensor(5, 7, rng, -30.0, 30.0)));
  const Tensor& y = tape.val(s);
  for (int r = 0; r < y.rows; ++r) {
    double sum = 0.0;
    for (int c = 0; c < y.cols; ++c) {
      CHECK(y.at(r, c) >= 0.0);
      sum += y.at(r, c);
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("clip_gradients") {
  Tensor g = Tensor::row({-15, 3});
  clip_gradients(g, 10.0);
  CHECK(g.v == std::vector<double>{-10, 3});

  Tensor z = Tensor::zeros(2, 2);
  clip_gradients(z, 10.0);
  CHECK(z.v == std::vector<double>{0, 0, 0, 0});

  Tensor b = Tensor::row({10.0001});
  clip_gradients(b, 10.0);
  CHECK(b.v[0] == 10.0);

  Pcg32 rng = make_rng(3);
  Tensor r = random_tensor(4, 4, rng, -40.0, 40.0);
  Tensor once = r;
  clip_gradients(once, 10.0);
  Tensor twice = once;
  clip_gradients(twice, 10.0);
  CHECK(bitwise_equal(once, twice));
  for (int i = 0; i < r.size(); ++i) {
    if (std::abs(r.v[i]) <= 10.0) CHECK(once.v[i] == r.v[i]);
  }
}

TEST_CASE("adadelta first step and determinism") {
  ParamMap params;
  params["w"] = Tensor::scalar(1.0);
  NamedGrads grads;
  grads["w"] = Tensor::scalar(1.0);
  AdadeltaState state;

  adadelta_step(params, grads, state);
  double expected_delta = -std::sqrt(1e-6) / std::sqrt(0.05 + 1e-6);
  CHECK(params["w"].v[0] == Catch::Approx(1.0 + expected_delta).epsilon(1e-12));
  CHECK(expected_delta == Catch::Approx(-0.004472).margin(5e-7));

  ParamMap p2;
  p2["w"] = Tensor::scalar(1.0);
  NamedGrads g0;
  g0["w"] = Tensor::scalar(0.0);
  AdadeltaState s2;
  adadelta_step(p2, g0, s2);
  CHECK(p2["w"].v[0] == 1.0);

  // identical state + grads twice -> identical results
  ParamMap pa, pb;
  pa["w"] = Tensor::row({0.5, -0.25});
  pb["w"] = Tensor::row({0.5, -0.25});
  NamedGrads g;
  g["w"] = Tensor::row({0.3, -0.8});
  AdadeltaState sa, sb;
  adadelta_step(pa, g, sa);
  adadelta_step(pb, g, sb);
  CHECK(bitwise_equal(pa["w"], pb["w"]));
  CHECK(bitwise_equal(sa.sq_grad["w"], sb.sq_grad["w"]));
}

TEST_CASE("uniform_init bounds, reproducibility, mean") {
  Tensor a = uniform_init(100, 10, 0.1, 42);
  Tensor b = uniform_init(100, 10, 0.1, 42);
  CHECK(bitwise_equal(a, b));
  for (double x : a.v) {
    CHECK(x >= -0.1);
    CHECK(x <= 0.1);
  }
  Tensor big = uniform_init(1000, 100, 0.1, 7);
  double mean = 0.0;
  for (double x : big.v) mean += x;
  mean /= big.size();
  CHECK(std::abs(mean) <= 0.002);
}

TEST_CASE("dropout rules") {
  Pcg32 rng = make_rng(5);
  Tensor x = random_tensor(20, 20, rng, 0.5, 1.5);

  Tensor eval_out = dropout(x, 0.5, Mode::kEval, 1);
  CHECK(bitwise_equal(eval_out, x));

  Tensor train_out = dropout(x, 0.5, Mode::kTrain, 1);
  for (int i = 0; i < x.size(); ++i) {
    bool zero = train_out.v[i] == 0.0;
    bool doubled = train_out.v[i] == 2.0 * x.v[i];
    CHECK((zero || doubled));
  }
  Tensor again = dropout(x, 0.5, Mode::kTrain, 1);
  CHECK(bitwise_equal(train_out, again));

  Tensor ones = Tensor::full(400, 250, 1.0);
  Tensor kept = dropout(ones, 0.5, Mode::kTrain, 9);
  int keep = 0;
  for (double v : kept.v)
    if (v != 0.0) ++keep;
  double frac = static_cast<double>(keep) / kept.size();
  CHECK(frac == Catch::Approx(0.5).margin(0.01));

  // graph variant: identity in eval mode, mask multiplies in train mode
  Tape tape;
  Pcg32 grng = make_rng(6);
  Value v = tape.parameter(Tensor::row({1.0, 2.0, 3.0, 4.0}));
  Value d = dropout(tape, v, 0.5, Mode::kTrain, grng);
  Value loss = tape.sum(d);
  tape.backward(loss);
  const Tensor& dv = tape.val(d);
  Tensor g = tape.grad_of(v);
  for (int i = 0; i < 4; ++i) {
    if (dv.v[i] == 0.0)
      CHECK(g.v[i] == 0.0);
    else
      CHECK(g.v[i] == 2.0);
  }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  Pcg32 rng = make_rng(13);
  std::map<std::string, Tensor> m;
  m["alpha"] = random_tensor(3, 5, rng, -100.0, 100.0);
  m["beta/gamma"] = random_tensor(1, 1, rng);
  m["edge"] = Tensor::row({0.0, -0.0, 1e-308, -1e308, 3.141592653589793});

  auto path = std::filesystem::temp_directory_path() / "hrlcap_ckpt_test.bin";
  save_tensor_map(path.string(), m);
  auto loaded = load_tensor_map(path.string());
  REQUIRE(loaded.size() == m.size());
  for (const auto& [name, t] : m) {
    REQUIRE(loaded.count(name) == 1);
    CHECK(bitwise_equal(loaded.at(name), t));
  }
  std::filesystem::remove(path);
}

TEST_CASE("rng reproducibility given seed and call order") {
  Pcg32 a = make_rng(123, 4);
  Pcg32 b = make_rng(123, 4);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u32() == b.next_u32());
  CHECK(a.next_gaussian() == b.next_gaussian());

  Pcg32 c = make_rng(124, 4);
  bool all_same = true;
  for (int i = 0; i < 16; ++i) all_same = all_same && (a.next_u32() == c.next_u32());
  CHECK_FALSE(all_same);
}
