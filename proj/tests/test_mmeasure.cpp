#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sipred/mmeasure.h"
#include "support/synth.h"

using namespace sipred;

namespace {

// Independent oracle: direct summation with explicit flooring.
double sym_kl_direct(std::vector<double> p, std::vector<double> q,
                     double floor) {
  auto prep = [floor](std::vector<double>& v) {
    double sum = 0.0;
    for (auto& x : v) {
      x = std::max(x, floor);
      sum += x;
    }
    for (auto& x : v) x /= sum;
  };
  prep(p);
  prep(q);
  double d = 0.0;
  for (size_t k = 0; k < p.size(); ++k) d += p[k] * std::log(p[k] / q[k]);
  for (size_t k = 0; k < q.size(); ++k) d += q[k] * std::log(q[k] / p[k]);
  return d;
}

}  // namespace

TEST_CASE("sym_kl") {
  SUBCASE("identity gives zero") {
    const std::vector<double> p = {0.2, 0.3, 0.5};
    CHECK(sym_kl(p, p) == 0.0);
  }

  SUBCASE("worked two-class example") {
    const std::vector<double> p = {0.9, 0.1};
    const std::vector<double> q = {0.5, 0.5};
    // 0.9 ln 1.8 + 0.1 ln 0.2 + 0.5 ln (0.5/0.9) + 0.5 ln 5 = 0.8789 nats
    CHECK(sym_kl(p, q) == doctest::Approx(0.8789).epsilon(1e-4));
    CHECK(sym_kl(p, q) ==
          doctest::Approx(sym_kl_direct(p, q, kDefaultProbFloor))
              .epsilon(1e-12));
  }

  SUBCASE("symmetric and nonnegative over random pairs") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
      const size_t k = 2 + static_cast<size_t>(rng.uniform_int(0, 40));
      const Posteriorgram a = testsynth::random_posteriorgram(1, k, rng.next_u64());
      const Posteriorgram b = testsynth::random_posteriorgram(1, k, rng.next_u64());
      const double ab = sym_kl(a.probs, b.probs);
      const double ba = sym_kl(b.probs, a.probs);
      REQUIRE(ab >= 0.0);
      REQUIRE(ab == doctest::Approx(ba).epsilon(1e-12));
    }
  }

  SUBCASE("hard zeros are floored, not infinite") {
    const std::vector<double> p = {1.0, 0.0};
    const std::vector<double> q = {0.0, 1.0};
    const double d = sym_kl(p, q);
    CHECK(std::isfinite(d));
    CHECK(d > 10.0);  // still a large distance
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(sym_kl(std::vector<double>{0.5, 0.5},
                           std::vector<double>{1.0}),
                    ValueError);
    CHECK_THROWS_AS(sym_kl(std::vector<double>{0.5, 0.5},
                           std::vector<double>{0.5, 0.5}, 0.0),
                    ValueError);
  }
}

TEST_CASE("mtd") {
  SUBCASE("constant posteriorgram has zero distance at every lag") {
    Posteriorgram p;
    p.frames = 120;
    p.classes = 5;
    p.probs.resize(120 * 5);
    for (size_t t = 0; t < 120; ++t) {
      for (size_t k = 0; k < 5; ++k) p.at(t, k) = 0.2;
    }
    for (double dt : {0.05, 0.2, 0.5}) {
      CHECK(mtd(p, dt) == 0.0);
    }
  }

  SUBCASE("alternating rows with odd lag hit D(a,b) exactly") {
    const std::vector<double> a = {0.7, 0.2, 0.1};
    const std::vector<double> b = {0.1, 0.3, 0.6};
    Posteriorgram p;
    p.frames = 101;
    p.classes = 3;
    p.probs.resize(101 * 3);
    for (size_t t = 0; t < 101; ++t) {
      const auto& row = (t % 2 == 0) ? a : b;
      for (size_t k = 0; k < 3; ++k) p.at(t, k) = row[k];
    }
    const double d = sym_kl(a, b);
    CHECK(mtd(p, 0.05) == doctest::Approx(d).epsilon(1e-12));  // lag 5
    CHECK(mtd(p, 0.15) == doctest::Approx(d).epsilon(1e-12));  // lag 15
  }

  SUBCASE("matches the brute-force double loop") {
    const Posteriorgram p = testsynth::random_posteriorgram(200, 42, 17);
    for (double dt : {0.05, 0.1, 0.35, 0.8}) {
      const size_t lag = static_cast<size_t>(std::lround(dt / 0.010));
      double acc = 0.0;
      for (size_t t = lag; t < p.frames; ++t) {
        std::vector<double> prev(p.probs.begin() + (t - lag) * p.classes,
                                 p.probs.begin() + (t - lag + 1) * p.classes);
        std::vector<double> cur(p.probs.begin() + t * p.classes,
                                p.probs.begin() + (t + 1) * p.classes);
        acc += sym_kl_direct(prev, cur, kDefaultProbFloor);
      }
      const double expected = acc / static_cast<double>(p.frames - lag);
      REQUIRE(mtd(p, dt) == doctest::Approx(expected).epsilon(1e-10));
    }
  }

  SUBCASE("lag below one frame or beyond the utterance") {
    const Posteriorgram p = testsynth::random_posteriorgram(50, 4, 5);
    CHECK_THROWS_AS(mtd(p, 0.004), ValueError);
    CHECK_THROWS_AS(mtd(p, 0.5), ValueError);  // 50 frames vs lag 50
    CHECK_NOTHROW(mtd(p, 0.49));
  }
}

TEST_CASE("mtd_profile") {
  SUBCASE("constant input yields the zero profile") {
    Posteriorgram p;
    p.frames = 100;
    p.classes = 4;
    p.probs.assign(400, 0.25);
    const MtdProfile profile = mtd_profile(p);
    REQUIRE(profile.delta_ts.size() == 16);
    REQUIRE(profile.values.size() == 16);
    CHECK(profile.delta_ts.front() == doctest::Approx(0.05));
    CHECK(profile.delta_ts.back() == doctest::Approx(0.80));
    for (double v : profile.values) REQUIRE(v == 0.0);
    CHECK(profile.scalar == 0.0);
  }

  SUBCASE("profile entries equal individual mtd calls") {
    const Posteriorgram p = testsynth::random_posteriorgram(150, 10, 23);
    const MtdProfile profile = mtd_profile(p);
    double sum = 0.0;
    for (size_t i = 0; i < 16; ++i) {
      REQUIRE(profile.values[i] ==
              doctest::Approx(mtd(p, profile.delta_ts[i])).epsilon(1e-14));
      sum += profile.values[i];
    }
    CHECK(profile.scalar == doctest::Approx(sum / 16.0).epsilon(1e-14));
  }

  SUBCASE("short utterances name the supported maximum") {
    const Posteriorgram p = testsynth::random_posteriorgram(60, 4, 2);
    CHECK_THROWS_WITH_AS(mtd_profile(p), doctest::Contains("0.55"),
                         ValueError);
  }

  SUBCASE("invariant under frame reversal") {
    const Posteriorgram p = testsynth::random_posteriorgram(120, 8, 29);
    Posteriorgram rev = p;
    for (size_t t = 0; t < p.frames; ++t) {
      for (size_t k = 0; k < p.classes; ++k) {
        rev.at(t, k) = p.at(p.frames - 1 - t, k);
      }
    }
    const MtdProfile a = mtd_profile(p);
    const MtdProfile b = mtd_profile(rev);
    for (size_t i = 0; i < 16; ++i) {
      REQUIRE(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-12));
    }
  }

  SUBCASE("invariant under class relabeling") {
    const Posteriorgram p = testsynth::random_posteriorgram(120, 8, 31);
    Posteriorgram perm = p;
    const size_t order[8] = {5, 2, 7, 0, 3, 6, 1, 4};
    for (size_t t = 0; t < p.frames; ++t) {
      for (size_t k = 0; k < 8; ++k) perm.at(t, k) = p.at(t, order[k]);
    }
    CHECK(mtd_profile(perm).scalar ==
          doctest::Approx(mtd_profile(p).scalar).epsilon(1e-12));
  }

  SUBCASE("temporally smoothed ensembles rise then saturate") {
    // Random-walk posteriorgrams: neighboring frames similar, distant frames
    // independent, so M grows with the lag and levels off.
    Rng rng(37);
    std::vector<double> mean_values(16, 0.0);
    const int ensemble = 30;
    for (int e = 0; e < ensemble; ++e) {
      Posteriorgram p;
      p.frames = 200;
      p.classes = 6;
      p.probs.resize(200 * 6);
      std::vector<double> logits(6, 0.0);
      for (size_t t = 0; t < 200; ++t) {
        double sum = 0.0;
        for (size_t k = 0; k < 6; ++k) {
          logits[k] += 0.5 * rng.gaussian();  // slow drift
          p.at(t, k) = std::exp(logits[k]);
          sum += p.at(t, k);
        }
        for (size_t k = 0; k < 6; ++k) p.at(t, k) /= sum;
      }
      const MtdProfile profile = mtd_profile(p);
      for (size_t i = 0; i < 16; ++i) mean_values[i] += profile.values[i];
    }
    for (auto& v : mean_values) v /= ensemble;

    // Rising: later lags exceed the first. Saturating: the late increments
    // are much smaller than the early ones.
    CHECK(mean_values[15] > mean_values[0]);
    const double early = mean_values[3] - mean_values[0];
    const double late = mean_values[15] - mean_values[12];
    CHECK(early > late);
  }
}
