// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "arith.hpp"
#include "codec.hpp"
#include "harness.hpp"
#include "lstm.hpp"
#include "oracles.hpp"
#include "prng.hpp"
#include "transform.hpp"

using namespace ckz;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Lossless layer over 100 random series with the desk-scale LSTM.
Outcome round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  codec::CodecConfig cfg;  // default: LSTM, E = H = 64, B = 64
  size_t series_ok = 0, records = 0;
  std::string first_failure;
  for (uint64_t seed = 1; seed <= 100; ++seed) {
    const CheckpointSeries series = harness::random_series(seed);
    cfg.seed = seed;
    codec::Encoder enc(cfg);
    codec::Decoder dec(cfg);
    bool ok = true;
    for (const Checkpoint& ckpt : series) {
      const codec::QuantizedCheckpoint q = enc.quantize(ckpt);
      const codec::Record rec = enc.encode(q);
      dec.decompress(rec);
      ++records;
      for (const auto& [name, t] : q.tensors) {
        for (size_t r = 0; r < 3; ++r) ok &= t.planes[r].symbols == dec.last_symbols().tensors.at(name).planes[r].symbols;
      }
      ok &= enc.digest() == dec.digest();
    }
    if (ok) {
      ++series_ok;
    } else if (first_failure.empty()) {
      first_failure = fmt(" first failure: seed %llu", static_cast<unsigned long long>(seed));
    }
  }
  const double secs = seconds_since(t0);
  return {series_ok == 100 && secs < 120.0,
          fmt("%zu/100 series, %zu records bit-identical with matching digests, %.1f s (limit 120 s)%s", series_ok,
              records, secs, first_failure.c_str())};
}

// 2. Code length vs entropy on i.i.d. sources plus the exact-rational oracle.
Outcome coder_optimality() {
  Xoshiro256 rng(2024);
  double worst_excess = -1e9;
  bool ok = true;
  for (int d = 0; d < 5; ++d) {
    const size_t alphabet = 4 + rng.below(29);
    std::vector<double> p(alphabet);
    double sum = 0;
    for (auto& x : p) sum += (x = std::pow(rng.uniform(), 1 + 4 * rng.uniform()) + 1e-4);
    for (auto& x : p) x /= sum;
    const double h = oracle::entropy_bits(p);
    const arith::FrequencyTable table = arith::quantize_probabilities(p);
    std::vector<double> cdf(alphabet);
    std::partial_sum(p.begin(), p.end(), cdf.begin());
    arith::Encoder enc;
    const size_t n = 100000;
    std::vector<size_t> xs(n);
    for (auto& x : xs) {
      const double u = rng.uniform();
      x = std::min<size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin(), alphabet - 1);
      enc.encode(table, x);
    }
    const auto bytes = enc.finish();
    arith::Decoder dec(bytes);
    for (size_t x : xs) ok &= dec.decode(table) == x;
    const double bits = 8.0 * static_cast<double>(bytes.size());
    const double bound = 0.01 * n * h + 64;
    ok &= std::abs(bits - n * h) <= bound;
    worst_excess = std::max(worst_excess, (bits - n * h) / (n * h));
  }
  size_t agree = 0;
  const size_t streams = 500;
  for (size_t s = 0; s < streams; ++s) {
    const size_t n = rng.below(33);
    std::vector<std::vector<uint32_t>> cums;
    std::vector<arith::FrequencyTable> tables;
    std::vector<size_t> xs;
    arith::Encoder enc;
    for (size_t i = 0; i < n; ++i) {
      std::vector<double> p(2 + rng.below(15));
      double sum = 0;
      for (auto& x : p) sum += (x = rng.uniform() + 1e-3);
      for (auto& x : p) x /= sum;
      tables.push_back(arith::quantize_probabilities(p));
      cums.push_back(tables.back().cumulative());
      xs.push_back(rng.below(p.size()));
      enc.encode(tables.back(), xs.back());
    }
    const auto bytes = enc.finish();
    const auto code = oracle::rational_encode(cums, xs);
    arith::Decoder dec(bytes);
    std::vector<size_t> ours;
    for (size_t i = 0; i < n; ++i) ours.push_back(dec.decode(tables[i]));
    const bool same = ours == xs && oracle::rational_decode(cums, code, n) == xs &&
                      std::abs(static_cast<double>(bytes.size()) - std::ceil(code.bits / 8.0)) <= 2.0;
    agree += same;
  }
  ok &= agree == streams;
  return {ok, fmt("5 sources x 1e5 symbols within 1%% + 64 bits (worst relative excess %+.4f%%); "
                  "rational oracle agrees on %zu/%zu streams",
                  100 * worst_excess, agree, streams)};
}

// 3. LSTM gradients vs central finite differences.
Outcome gradient_check() {
  const probmodel::LstmShape shape{4, 8, 8, 2};
  Xoshiro256 rng(77);
  double worst = 0;
  for (int point = 0; point < 10; ++point) {
    probmodel::LstmNetwork<double> net(shape);
    for (auto& p : net.params()) p = rng.uniform(-0.5, 0.5);
    std::vector<probmodel::Context> ctx(4);
    std::vector<uint8_t> sym(4);
    for (size_t i = 0; i < ctx.size(); ++i) {
      for (auto& s : ctx[i]) s = static_cast<uint8_t>(rng.below(4));
      sym[i] = static_cast<uint8_t>(rng.below(4));
    }
    probmodel::LstmActivations<double> act;
    net.forward(ctx, act);
    std::vector<double> grad(net.parameter_count());
    net.backward(act, sym, grad);
    double diff2 = 0, na = 0, nn = 0;
    const double h = 1e-3;
    for (size_t i = 0; i < grad.size(); ++i) {
      const double saved = net.params()[i];
      net.params()[i] = saved + h;
      net.forward(ctx, act);
      const double up = probmodel::LstmNetwork<double>::loss(act, sym, 4);
      net.params()[i] = saved - h;
      net.forward(ctx, act);
      const double down = probmodel::LstmNetwork<double>::loss(act, sym, 4);
      net.params()[i] = saved;
      const double num = (up - down) / (2 * h);
      diff2 += (num - grad[i]) * (num - grad[i]);
      na += grad[i] * grad[i];
      nn += num * num;
    }
    worst = std::max(worst, std::sqrt(diff2) / std::max(std::sqrt(na), std::sqrt(nn)));
  }
  return {worst <= 1e-4, fmt("10 parameter points, worst relative error %.2e (limit 1e-4)", worst)};
}

// 4. Context gain on synthetic correlated planes.
Outcome context_gain() {
  const double h_cond = -0.9 * std::log2(0.9) - 0.1 * std::log2(0.1 / 15);
  const auto pairs = harness::synth_planes(4, 0.9, 25, 404);
  const auto lstm = harness::synth_code_lengths(pairs, 4, probmodel::ModelKind::Lstm, probmodel::LstmConfig{}, 1);
  const auto freq =
      harness::synth_code_lengths(pairs, 4, probmodel::ModelKind::Frequency, probmodel::LstmConfig{}, 1);
  // warm-up: the first half of the symbols
  auto late_mean = [](const std::vector<double>& v) {
    double s = 0;
    for (size_t i = v.size() / 2; i < v.size(); ++i) s += v[i];
    return s / static_cast<double>(v.size() - v.size() / 2);
  };
  const double l = late_mean(lstm), f = late_mean(freq);
  const bool ok = lstm.size() >= 100000 && l <= 1.15 * h_cond && l < f && f >= 3.6;
  return {ok, fmt("%zu symbols; after warm-up LSTM %.4f bits (limit %.4f = 1.15 x %.4f), context-free %.4f bits "
                  "(must be >= 3.6)",
                  lstm.size(), l, 1.15 * h_cond, h_cond, f)};
}

// 5. LSTM vs frequency payload on the late half of a real toy run.
Outcome toy_gain() {
  harness::ToyTrainConfig t;
  t.steps = 2000;
  t.checkpoint_every = 100;
  const CheckpointSeries series = harness::toy_train(t);
  codec::CodecConfig lstm_cfg;
  codec::CodecConfig freq_cfg;
  freq_cfg.model_kind = probmodel::ModelKind::Frequency;
  const auto a = codec::stats(codec::compress_series(series, lstm_cfg));
  const auto b = codec::stats(codec::compress_series(series, freq_cfg));
  size_t la = 0, lb = 0;
  for (size_t i = series.size() / 2; i < series.size(); ++i) {
    la += a[i].payload_bytes;
    lb += b[i].payload_bytes;
  }
  return {la <= lb, fmt("%zu checkpoints; late-half payload LSTM %zu bytes vs context-free %zu bytes (%+.1f%%)",
                        series.size(), la, lb, 100.0 * (double(lb) - double(la)) / double(lb))};
}

// 6. Masks and k-means against exhaustive oracles.
Outcome pruning_oracles() {
  Xoshiro256 rng(6006);
  size_t mask_ok = 0, kmeans_ok = 0, inertia_ok = 0, ties = 0;
  const size_t cases = 1000;
  for (size_t c = 0; c < cases; ++c) {
    const size_t n = 1 + rng.below(12);
    std::vector<float> w(n), m(n), res(n), v(n);
    const bool coarse = rng.below(4) == 0;  // sometimes force duplicates
    for (size_t i = 0; i < n; ++i) {
      w[i] = static_cast<float>(rng.uniform(-1, 1));
      m[i] = static_cast<float>(rng.uniform(0, 1e-4));
      res[i] = coarse ? static_cast<float>(rng.below(5)) * 0.01f - 0.02f : static_cast<float>(rng.uniform(-0.05, 0.05));
      v[i] = static_cast<float>(rng.uniform(-1e-3, 1e-3));
    }
    const double alpha = std::pow(10.0, rng.uniform(-6, -2)), beta = rng.uniform(0.2, 2.5);
    const int bits = 2 + static_cast<int>(rng.below(2));
    const auto wm = transform::prune_weights(res, m, w, alpha);
    const auto om = transform::prune_momentum(v, beta, wm);
    const auto ow = oracle::weight_mask(res, m, w, alpha);
    mask_ok += wm.bits == ow && om.bits == oracle::moment_mask(v, beta, ow);

    const auto q = transform::kmeans_quantize(res, wm, bits, c);
    std::vector<double> kept;
    std::vector<size_t> ours;
    for (size_t i = 0; i < n; ++i) {
      if (wm.bits[i]) {
        kept.push_back(res[i]);
        ours.push_back(q.symbols[i]);
      }
    }
    bool km = true;
    if (!kept.empty()) {
      const size_t distinct = std::set<double>(kept.begin(), kept.end()).size();
      const size_t k = std::min(transform::QuantizedPlane::center_slots(bits), distinct);
      const auto ex = oracle::exhaustive_kmeans(kept, k);
      const auto run = transform::kmeans_1d(kept, k, c);
      bool mono = true;
      for (const auto& r : run.runs) {
        for (size_t i = 1; i < r.inertia.size(); ++i) mono &= r.inertia[i] <= r.inertia[i - 1];
      }
      inertia_ok += mono;
      const double tol = 1e-9 * std::max(1e-12, ex.inertia) + 1e-15;
      if (ex.optimal_partitions > 1) {
        ++ties;
        km = std::abs(run.inertia - ex.inertia) <= tol + 1e-6 * ex.inertia;
      } else {
        km = oracle::same_partition(ours, ex.group);
      }
    } else {
      inertia_ok += 1;
      for (uint8_t s : q.symbols) km &= s == 0;
    }
    kmeans_ok += km;
  }
  const bool ok = mask_ok == cases && kmeans_ok == cases && inertia_ok == cases;
  return {ok, fmt("masks %zu/%zu, k-means assignments %zu/%zu (%zu tied optima compared by inertia), "
                  "monotone inertia %zu/%zu",
                  mask_ok, cases, kmeans_ok, cases, ties, inertia_ok, cases)};
}

// 7. Resume from restored checkpoints at three fixed seeds.
Outcome resume() {
  bool ok = true;
  std::string detail;
  for (uint64_t seed : {1, 2, 3}) {
    harness::ToyTrainConfig t;
    t.seed = seed;
    const auto lossy = harness::resume_experiment(t, 500, codec::CodecConfig{});
    const auto identity = harness::resume_experiment(t, 500, std::nullopt);
    const bool identical = identity.baseline_loss == identity.resumed_loss;
    ok &= lossy.relative_delta <= 0.05 && identical;
    detail += fmt("seed %llu: delta %.2f%% (baseline %.4f, resumed %.4f), identity %s; ",
                  static_cast<unsigned long long>(seed), 100 * lossy.relative_delta, lossy.final_baseline,
                  lossy.final_resumed, identical ? "bit-identical" : "DIFFERS");
  }
  detail += "limit 5%";
  return {ok, detail};
}

// 8. Identical checkpoints.
Outcome degenerate() {
  Xoshiro256 rng(8);
  Checkpoint base;
  auto add = [&](const std::string& name, Dims dims) {
    const size_t n = element_count(dims);
    std::vector<float> w(n), v(n), m(n);
    for (size_t i = 0; i < n; ++i) {
      w[i] = static_cast<float>(rng.uniform(-0.1, 0.1));
      v[i] = static_cast<float>(rng.uniform(-1e-3, 1e-3));
      m[i] = static_cast<float>(rng.uniform(0, 1e-6));
    }
    base.add(name, std::move(dims), w, v, m);
  };
  add("proj.weight", {96, 96});
  add("proj.bias", {96});
  CheckpointSeries series;
  for (uint64_t s = 1; s <= 4; ++s) {
    Checkpoint c = base;
    c.step = 100 * s;
    series.push_back(c);
  }
  const auto rows = codec::stats(codec::compress_series(series, codec::CodecConfig{}));
  bool ok = true;
  double worst = 0;
  for (size_t i = 1; i < rows.size(); ++i) {
    const double frac = double(rows[i].compressed_bytes) / double(rows[i].raw_bytes);
    worst = std::max(worst, frac);
    ok &= frac < 0.01;
  }
  return {ok, fmt("%zu non-initial records, largest %.3f%% of raw (%zu of %zu bytes); limit 1%%", rows.size() - 1,
                  100 * worst, rows.back().compressed_bytes, rows.back().raw_bytes)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"round-trip losslessness", round_trip},         {"arithmetic coder optimality", coder_optimality},
      {"LSTM gradient check", gradient_check},         {"context gain on synthetic planes", context_gain},
      {"toy-checkpoint contextual gain", toy_gain},    {"pruning/quantization oracles", pruning_oracles},
      {"near-lossless resume", resume},                {"degenerate-source compression", degenerate},
  };
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
