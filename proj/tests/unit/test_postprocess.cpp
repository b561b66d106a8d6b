#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "cellloc/error.hpp"
#include "cellloc/postprocess.hpp"

using namespace cellloc;

namespace {

Hmm make_hmm(std::size_t n, std::vector<double> a, std::vector<double> b,
             std::vector<double> pi0) {
  Hmm h;
  h.n = n;
  h.a = std::move(a);
  h.b = std::move(b);
  h.pi0 = std::move(pi0);
  h.forbidden.assign(n * n, 0);
  return h;
}

Hmm identity3(double self = 0.95) {
  const double o = (1 - self) / 2;
  return make_hmm(3, {self, o, o, o, self, o, o, o, self}, {1, 0, 0, 0, 1, 0, 0, 0, 1},
                  {1.0 / 3, 1.0 / 3, 1.0 / 3});
}

void check_rows(const std::vector<double>& m, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < n; ++j) s += m[i * n + j];
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

}  // namespace

TEST_CASE("median filter examples") {
  const std::vector<Label> y{0, 1, 0, 0};
  CHECK(median_filter(y, 2) == std::vector<Label>{0, 0, 0, 0});
  CHECK(median_filter(y, 0) == y);
  const std::vector<Label> c(9, 2);
  for (std::size_t m : {0, 1, 5, 10}) CHECK(median_filter(c, m) == c);
  CHECK_THROWS_AS(median_filter(std::vector<Label>{}, 1), DataError);
}

TEST_CASE("median filter matches sorted-window oracle") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const auto y = oracle::random_labels(rng, 1 + rng() % 60, 3);
    for (std::size_t m : {0, 1, 2, 5, 10}) CHECK(median_filter(y, m) == oracle::median(y, m));
  }
}

TEST_CASE("median filter locality and idempotence on constants") {
  std::mt19937_64 rng(4);
  auto y = oracle::random_labels(rng, 50, 3);
  const auto before = median_filter(y, 3);
  y[20] = (y[20] + 1) % 3;
  const auto after = median_filter(y, 3);
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (t < 20 || t > 23) CHECK(before[t] == after[t]);
  }
}

TEST_CASE("fit_hmm hand tallies") {
  HmmFitOptions raw = HmmFitOptions::cell_defaults(0.0);
  SUBCASE("bigrams of 0,0,1,1") {
    const std::vector<Label> truth{0, 0, 1, 1};
    const auto h = fit_hmm(truth, truth, raw);
    CHECK(h.trans(0, 0) == 0.5);
    CHECK(h.trans(0, 1) == 0.5);
    CHECK(h.trans(0, 2) == 0.0);
    CHECK(h.trans(1, 1) == 1.0);
  }
  SUBCASE("perfect predictions give identity emissions") {
    const std::vector<Label> truth{0, 1, 2, 2, 1, 0};
    const auto h = fit_hmm(truth, truth, raw);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(h.emit(i, j) == (i == j ? 1.0 : 0.0));
    CHECK(h.pi0 == std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
  }
  SUBCASE("confusion rows") {
    const std::vector<Label> truth{0, 0, 0, 0, 1, 1};
    const std::vector<Label> pred{0, 0, 0, 1, 1, 2};
    const auto h = fit_hmm(truth, pred, raw);
    CHECK(h.emit(0, 0) == 0.75);
    CHECK(h.emit(0, 1) == 0.25);
    CHECK(h.emit(1, 1) == 0.5);
    CHECK(h.emit(1, 2) == 0.5);
    // State 2 never occurs: uniform row.
    CHECK(h.emit(2, 0) == doctest::Approx(1.0 / 3));
  }
  SUBCASE("smoothing keeps rows stochastic and entries positive") {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 100; ++i) {
      const auto t = oracle::random_labels(rng, 2 + rng() % 40, 3);
      const auto p = oracle::random_labels(rng, t.size(), 3);
      const auto h = fit_hmm(t, p, {});
      check_rows(h.a, 3);
      check_rows(h.b, 3);
      for (double v : h.a) CHECK(v > 0.0);
      for (double v : h.b) CHECK(v > 0.0);
    }
  }
  SUBCASE("segments do not create bigrams across boundaries") {
    HmmCounts c(3);
    const std::vector<Label> a{0, 0}, b{2, 2};
    c.add_segment(a, a);
    c.add_segment(b, b);
    CHECK(c.transitions[0 * 3 + 2] == 0.0);
    CHECK(c.transitions[0] == 1.0);
    CHECK(c.transitions[8] == 1.0);
  }
  SUBCASE("structural zeros") {
    const std::vector<Label> truth{0, 0, 1, 1, 2, 2, 1, 0};
    const auto h = fit_hmm(truth, truth, HmmFitOptions::cell_defaults(1e-6, true));
    CHECK(h.trans(0, 2) == 0.0);
    CHECK(h.trans(2, 0) == 0.0);
    check_rows(h.a, 3);
    h.validate();
  }
  CHECK_THROWS(fit_hmm(std::vector<Label>{0, 1}, std::vector<Label>{0}, {}));
  CHECK_THROWS(fit_hmm(std::vector<Label>{0}, std::vector<Label>{0}, {}));
}

TEST_CASE("forward step examples") {
  SUBCASE("deterministic model") {
    const auto h = make_hmm(3, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {1, 0, 0, 0, 1, 0, 0, 0, 1},
                            {1.0 / 3, 1.0 / 3, 1.0 / 3});
    const auto s = forward_step(ForwardState::initial(h), h, 1);
    CHECK(s.pi == std::vector<double>{0, 1, 0});
    CHECK_THROWS_WITH(forward_step(s, h, 2), "observation impossible under model");
  }
  SUBCASE("two-state hand step") {
    const auto h = make_hmm(2, {.9, .1, .1, .9}, {.8, .2, .2, .8}, {.5, .5});
    const auto s = forward_step(ForwardState::initial(h), h, 0);
    CHECK(s.pi[0] == doctest::Approx(0.8));
    CHECK(s.pi[1] == doctest::Approx(0.2));
  }
  SUBCASE("uniform transitions give the emission column") {
    std::mt19937_64 rng(2);
    auto h = oracle::random_hmm(rng);
    h.a.assign(9, 1.0 / 3);
    auto s = forward_step(ForwardState::initial(h), h, 0);
    s = forward_step(s, h, 2);
    const double col = h.emit(0, 2) + h.emit(1, 2) + h.emit(2, 2);
    for (std::size_t j = 0; j < 3; ++j) CHECK(s.pi[j] == doctest::Approx(h.emit(j, 2) / col));
  }
}

TEST_CASE("forward filtering matches brute-force posteriors") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 300; ++trial) {
    const auto h = oracle::random_hmm(rng);
    const auto y = oracle::random_labels(rng, 1 + rng() % 6, 3);
    auto s = ForwardState::initial(h);
    for (std::size_t t = 1; t <= y.size(); ++t) {
      s = forward_step(s, h, y[t - 1]);
      const auto want = oracle::brute_posterior(h, y, t);
      double sum = 0;
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(std::abs(s.pi[j] - want[j]) <= 1e-9);
        sum += s.pi[j];
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("hmm_filter") {
  SUBCASE("identity emissions reproduce the input") {
    std::mt19937_64 rng(8);
    const auto y = oracle::random_labels(rng, 40, 3);
    CHECK(hmm_filter(y, identity3()) == y);
  }
  SUBCASE("isolated flip is suppressed") {
    auto h = identity3(0.97);
    h.b = {0.9, 0.05, 0.05, 0.05, 0.9, 0.05, 0.05, 0.05, 0.9};
    const std::vector<Label> y{1, 1, 1, 1, 2, 1, 1};
    CHECK(hmm_filter(y, h) == std::vector<Label>(7, 1));
  }
  SUBCASE("constant zero stays zero when b00 dominates its column") {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 200; ++i) {
      auto h = oracle::random_hmm(rng);
      h.pi0 = {1.0 / 3, 1.0 / 3, 1.0 / 3};
      const double top = std::max({h.b[0], h.b[3], h.b[6]});
      if (h.b[0] != top || h.b[3] == top || h.b[6] == top) continue;
      // Self-dominant transitions keep the argument monotone.
      h.a = {0.9, 0.05, 0.05, 0.05, 0.9, 0.05, 0.05, 0.05, 0.9};
      CHECK(hmm_filter(std::vector<Label>(20, 0), h) == std::vector<Label>(20, 0));
    }
  }
  SUBCASE("causal: prefixes filter identically") {
    std::mt19937_64 rng(13);
    const auto h = oracle::random_hmm(rng);
    const auto y = oracle::random_labels(rng, 30, 3);
    const auto full = hmm_filter(y, h);
    for (std::size_t len = 1; len <= y.size(); ++len) {
      const auto part = hmm_filter(std::span(y).first(len), h);
      CHECK(std::equal(part.begin(), part.end(), full.begin()));
    }
  }
  SUBCASE("fit on truth then filter reproduces the input") {
    const std::vector<Label> truth{0, 0, 0, 1, 1, 1, 2, 2, 2, 1, 1, 0, 0};
    const auto h = fit_hmm(truth, truth, {});
    CHECK(hmm_filter(truth, h) == truth);
  }
}

TEST_CASE("viterbi") {
  SUBCASE("identity emissions with positive transitions") {
    std::mt19937_64 rng(14);
    const auto y = oracle::random_labels(rng, 25, 3);
    CHECK(viterbi(y, identity3(0.6)) == y);
  }
  SUBCASE("single observation picks argmax of pi0 times emission") {
    std::mt19937_64 rng(15);
    for (int i = 0; i < 50; ++i) {
      const auto h = oracle::random_hmm(rng);
      const std::vector<Label> y{static_cast<Label>(rng() % 3)};
      std::size_t best = 0;
      for (std::size_t j = 1; j < 3; ++j) {
        if (h.pi0[j] * h.emit(j, y[0]) > h.pi0[best] * h.emit(best, y[0])) best = j;
      }
      CHECK(viterbi(y, h)[0] == static_cast<Label>(best));
    }
  }
  SUBCASE("path probability equals exhaustive maximum") {
    std::mt19937_64 rng(16);
    for (int i = 0; i < 300; ++i) {
      const auto h = oracle::random_hmm(rng);
      const auto y = oracle::random_labels(rng, 1 + rng() % 6, 3);
      const auto z = viterbi(y, h);
      CHECK(std::abs(path_log_probability(z, y, h) - std::log(oracle::brute_max_joint(h, y))) <=
            1e-9);
    }
  }
}

TEST_CASE("hmm json round trip and validation") {
  const std::vector<Label> truth{0, 0, 1, 1, 2, 2, 1, 0};
  const std::vector<Label> pred{0, 1, 1, 1, 2, 1, 1, 0};
  const auto h = fit_hmm(truth, pred, HmmFitOptions::cell_defaults(1e-6, true));
  CHECK(Hmm::from_json(h.to_json()) == h);
  auto bad = h;
  bad.a[0] += 0.1;
  CHECK_THROWS_AS(Hmm::from_json(bad.to_json()), DataError);
  auto zero_broken = h;
  zero_broken.a[2] = 0.1;
  zero_broken.a[0] -= 0.1;
  CHECK_THROWS_AS(zero_broken.validate(), DataError);
}
