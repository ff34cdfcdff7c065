#include <doctest.h>

#include <cmath>
#include <numeric>

#include "adam.hpp"
#include "context.hpp"
#include "error.hpp"
#include "frequency_model.hpp"
#include "lstm.hpp"
#include "model.hpp"
#include "prng.hpp"

using namespace ckz;
using namespace ckz::probmodel;

namespace {

Context random_context(Xoshiro256& rng, size_t alphabet) {
  Context c;
  for (auto& s : c) s = static_cast<uint8_t>(rng.below(alphabet));
  return c;
}

LstmConfig tiny_config() {
  LstmConfig c;
  c.embed = 8;
  c.hidden = 8;
  c.batch = 8;
  return c;
}

}  // namespace

TEST_CASE("extract_context") {
  const std::vector<uint8_t> plane{1, 2, 3, 4, 5, 6, 7, 8, 9};
  const SymbolPlaneView view{plane, {3, 3}};
  CHECK(extract_context(view, 1, 1) == Context{1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(extract_context(view, 0, 0) == Context{0, 0, 0, 0, 1, 2, 0, 4, 5});
  CHECK(extract_context(view, 2, 2) == Context{5, 6, 0, 8, 9, 0, 0, 0, 0});
  CHECK(extract_context(view, 5) == Context{2, 3, 0, 5, 6, 0, 8, 9, 0});
  CHECK_THROWS_AS(extract_context(view, 3, 0), Error);
  const SymbolPlaneView zero{{}, {3, 3}};
  for (size_t i = 0; i < 9; ++i) CHECK(extract_context(zero, i) == Context{});
}

TEST_CASE("plane_shape") {
  CHECK(plane_shape({4, 5}).rows == 4);
  CHECK(plane_shape({4, 5}).cols == 5);
  CHECK(plane_shape({7}).rows == 1);
  CHECK(plane_shape({7}).cols == 7);
  CHECK(plane_shape({2, 3, 4}).rows == 2);
  CHECK(plane_shape({2, 3, 4}).cols == 12);
  CHECK(plane_shape({}).size() == 1);
}

TEST_CASE("frequency model") {
  FrequencyModel m(4);
  CHECK(m.predict() == std::vector<double>{0.25, 0.25, 0.25, 0.25});
  m.update(std::vector<uint8_t>{0, 0, 0});
  CHECK(m.counts() == std::vector<uint32_t>{4, 1, 1, 1});
  CHECK(FrequencyModel(std::vector<uint32_t>{3, 1}).predict() == std::vector<double>{0.75, 0.25});

  SUBCASE("rescale halves with a floor of one") {
    // total reaches 2^24 + 1 on the second update: floor halves, then min 1
    FrequencyModel big(std::vector<uint32_t>{(1u << 24) - 3, 1, 1});
    big.update(std::vector<uint8_t>{0});
    CHECK(big.counts() == std::vector<uint32_t>{(1u << 24) - 2, 1, 1});
    big.update(std::vector<uint8_t>{2});
    CHECK(big.counts() == std::vector<uint32_t>{(1u << 23) - 1, 1, 1});
  }
}

TEST_CASE("adam_step") {
  AdamHyper h{0.001, 0.0, 0.9999, 1e-5};
  SUBCASE("hand example") {
    std::vector<double> p{1.0}, g{1.0}, m{0.0}, v{0.0};
    adam_step<double>(p, g, m, v, 1, h);
    CHECK(p[0] == doctest::Approx(1.0 - 0.001 / (1.0 + 1e-5)).epsilon(1e-12));
    CHECK(p[0] == doctest::Approx(0.999001).epsilon(1e-6));
    CHECK(m[0] == 1.0);
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::vector<float> p{1.5f, -2.0f}, g{0, 0}, m{0, 0}, v{0, 0};
    adam_step<float>(p, g, m, v, 3, h);
    CHECK(p == std::vector<float>{1.5f, -2.0f});
  }
  SUBCASE("deterministic") {
    std::vector<float> p1{0.3f, 0.7f}, p2 = p1, g{0.1f, -0.4f}, m1{0.2f, 0.1f}, m2 = m1, v1{0.01f, 0.02f}, v2 = v1;
    adam_step<float>(p1, g, m1, v1, 5, h);
    adam_step<float>(p2, g, m2, v2, 5, h);
    CHECK(p1 == p2);
    CHECK(v1 == v2);
  }
  SUBCASE("errors") {
    std::vector<float> p{1}, g{NAN}, m{0}, v{0};
    CHECK_THROWS_AS(adam_step<float>(p, g, m, v, 1, h), Error);
    std::vector<float> ok{0};
    CHECK_THROWS_AS(adam_step<float>(p, ok, m, v, 0, h), Error);
  }
}

TEST_CASE("model initialisation") {
  const ProbabilityModel f(ModelKind::Frequency, 4, LstmConfig{}, 0);
  CHECK(f.predict(Context{1, 2, 3}) == std::vector<double>{0.25, 0.25, 0.25, 0.25});

  const LstmModel a(16, tiny_config(), 5), b(16, tiny_config(), 5), c(16, tiny_config(), 6);
  const auto pa = a.network().params(), pb = b.network().params(), pc = c.network().params();
  CHECK(std::equal(pa.begin(), pa.end(), pb.begin(), pb.end()));
  CHECK(!std::equal(pa.begin(), pa.end(), pc.begin(), pc.end()));
  for (float x : pa) CHECK(std::abs(x) <= 1.0f);
}

TEST_CASE("LSTM predictions are valid distributions") {
  Xoshiro256 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const size_t alphabet = size_t{1} << (1 + rng.below(4));
    const ProbabilityModel m(ModelKind::Lstm, alphabet, tiny_config(), rng.next());
    const Context ctx = random_context(rng, alphabet);
    const auto p = m.predict(ctx);
    REQUIRE(p.size() == alphabet);
    double sum = 0;
    for (double x : p) {
      CHECK(x > 0.0);
      sum += x;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(m.predict(ctx) == p);
  }
}

TEST_CASE("batch prediction matches single predictions") {
  Xoshiro256 rng(2);
  const ProbabilityModel m(ModelKind::Lstm, 16, LstmConfig{}, 3);
  std::vector<Context> ctx(17);
  for (auto& c : ctx) c = random_context(rng, 16);
  const BatchPrediction batch = m.predict_batch(ctx);
  for (size_t i = 0; i < ctx.size(); ++i) {
    const auto single = m.predict(ctx[i]);
    const auto row = batch.row(i);
    CHECK(std::equal(single.begin(), single.end(), row.begin(), row.end()));
  }
}

TEST_CASE("LSTM overfits a repeated sample") {
  LstmConfig cfg = tiny_config();
  cfg.lr = 0.01f;
  ProbabilityModel m(ModelKind::Lstm, 4, cfg, 9);
  const std::vector<Context> ctx(8, Context{1, 2, 3, 0, 1, 2, 3, 0, 1});
  const std::vector<uint8_t> sym(8, 2);
  double prev = 1e9;
  for (int i = 0; i < 50; ++i) {
    const BatchPrediction p = m.predict_batch(ctx);
    const double loss = -std::log(p.row(0)[2]);
    CHECK(loss < prev);
    prev = loss;
    m.update(p, sym);
  }
}

TEST_CASE("update is deterministic") {
  Xoshiro256 rng(4);
  ProbabilityModel a(ModelKind::Lstm, 16, LstmConfig{}, 1), b(ModelKind::Lstm, 16, LstmConfig{}, 1);
  for (int step = 0; step < 5; ++step) {
    std::vector<Context> ctx(64);
    std::vector<uint8_t> sym(64);
    for (size_t i = 0; i < 64; ++i) {
      ctx[i] = random_context(rng, 16);
      sym[i] = static_cast<uint8_t>(rng.below(16));
    }
    a.update(a.predict_batch(ctx), sym);
    b.update(b.predict_batch(ctx), sym);
    CHECK(a.digest() == b.digest());
  }
  ProbabilityModel f1(ModelKind::Frequency, 16, LstmConfig{}, 1), f2(ModelKind::Frequency, 16, LstmConfig{}, 1);
  const std::vector<Context> ctx(3);
  const std::vector<uint8_t> sym{1, 2, 3};
  f1.update(f1.predict_batch(ctx), sym);
  f2.update(f2.predict_batch(ctx), sym);
  CHECK(f1.digest() == f2.digest());
  CHECK(f1.digest() != ProbabilityModel(ModelKind::Frequency, 16, LstmConfig{}, 1).digest());
}

TEST_CASE("LSTM gradients match central finite differences") {
  const LstmShape shape{4, 8, 8, 2};
  Xoshiro256 rng(12);
  for (int point = 0; point < 3; ++point) {
    LstmNetwork<double> net(shape);
    for (auto& p : net.params()) p = rng.uniform(-0.5, 0.5);
    std::vector<Context> ctx(3);
    std::vector<uint8_t> sym(3);
    for (size_t i = 0; i < ctx.size(); ++i) {
      ctx[i] = random_context(rng, 4);
      sym[i] = static_cast<uint8_t>(rng.below(4));
    }
    LstmActivations<double> act;
    net.forward(ctx, act);
    std::vector<double> grad(net.parameter_count());
    net.backward(act, sym, grad);

    const double h = 1e-3;
    double diff2 = 0, norm_a = 0, norm_n = 0;
    for (size_t i = 0; i < net.parameter_count(); ++i) {
      const double saved = net.params()[i];
      net.params()[i] = saved + h;
      net.forward(ctx, act);
      const double up = LstmNetwork<double>::loss(act, sym, 4);
      net.params()[i] = saved - h;
      net.forward(ctx, act);
      const double down = LstmNetwork<double>::loss(act, sym, 4);
      net.params()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      diff2 += (numeric - grad[i]) * (numeric - grad[i]);
      norm_a += grad[i] * grad[i];
      norm_n += numeric * numeric;
    }
    const double rel = std::sqrt(diff2) / std::max(std::sqrt(norm_a), std::sqrt(norm_n));
    CHECK(rel <= 1e-4);
  }
}
