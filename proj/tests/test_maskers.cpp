#include <doctest.h>

#include <cmath>

#include "sipred/dsp.h"
#include "sipred/maskers.h"
#include "support/stats.h"
#include "support/synth.h"

using namespace sipred;
using namespace sipred::teststats;

namespace {

// Slow-envelope "speech": white noise under a seeded 2-5 Hz modulation, loud
// enough in modulation for the envelope oracles to bite.
AudioBuffer modulated_noise(double duration_s, uint64_t seed) {
  AudioBuffer out = testsynth::white_noise(duration_s, seed, 0.1);
  Rng rng(seed ^ 0x5eedULL);
  const double f1 = rng.uniform(2.0, 3.0);
  const double f2 = rng.uniform(3.5, 5.0);
  const double ph1 = rng.uniform(0.0, 2.0 * M_PI);
  const double ph2 = rng.uniform(0.0, 2.0 * M_PI);
  for (size_t i = 0; i < out.samples.size(); ++i) {
    const double t = static_cast<double>(i) / out.sample_rate;
    const double env = 1.0 + 0.45 * std::sin(2.0 * M_PI * f1 * t + ph1) +
                       0.35 * std::sin(2.0 * M_PI * f2 * t + ph2);
    out.samples[i] *= env;
  }
  return out;
}

std::vector<double> smooth_envelope(const AudioBuffer& env, size_t window) {
  std::vector<double> out;
  for (size_t i = 0; i + window <= env.samples.size(); i += window) {
    double acc = 0.0;
    for (size_t j = 0; j < window; ++j) acc += env.samples[i + j];
    out.push_back(acc / static_cast<double>(window));
  }
  return out;
}

}  // namespace

TEST_CASE("estimate_ltas") {
  SUBCASE("white noise is flat within 1 dB per bin") {
    const AudioBuffer noise = testsynth::white_noise(60.0, 21, 0.1);
    const LtasProfile ltas = estimate_ltas(noise);
    double mean_db = 0.0;
    size_t n = 0;
    for (size_t k = 1; k + 1 < ltas.magnitudes.size(); ++k) {
      mean_db += 20.0 * std::log10(ltas.magnitudes[k]);
      ++n;
    }
    mean_db /= static_cast<double>(n);
    for (size_t k = 1; k + 1 < ltas.magnitudes.size(); ++k) {
      const double dev = 20.0 * std::log10(ltas.magnitudes[k]) - mean_db;
      REQUIRE(std::abs(dev) < 1.0);
    }
  }

  SUBCASE("pure tone concentrates in one bin") {
    const AudioBuffer tone = testsynth::sine(1000.0, 5.0, 0.5);
    const LtasProfile ltas = estimate_ltas(tone);
    size_t peak = 0;
    for (size_t k = 0; k < ltas.magnitudes.size(); ++k) {
      if (ltas.magnitudes[k] > ltas.magnitudes[peak]) peak = k;
    }
    CHECK(peak == 32);  // 1000 Hz at 31.25 Hz per bin
    double rest = 0.0, total = 0.0;
    for (size_t k = 0; k < ltas.magnitudes.size(); ++k) {
      const double p = ltas.magnitudes[k] * ltas.magnitudes[k];
      total += p;
      if (k + 2 < peak || k > peak + 2) rest += p;
    }
    CHECK(rest / total < 0.01);
  }

  SUBCASE("zero signal gives a zero profile") {
    AudioBuffer silent;
    silent.samples.assign(16000, 0.0);
    const LtasProfile ltas = estimate_ltas(silent);
    for (double m : ltas.magnitudes) REQUIRE(m == 0.0);
  }

  SUBCASE("too-short input is an error") {
    AudioBuffer buf;
    buf.samples.assign(8000, 0.1);
    CHECK_THROWS_AS(estimate_ltas(buf), ValueError);
  }
}

TEST_CASE("gen_ssn") {
  SUBCASE("matches a speech-like target within 2 dB per third octave") {
    const AudioBuffer speech = modulated_noise(20.0, 31);
    const LtasProfile target = estimate_ltas(speech);
    const AudioBuffer ssn = gen_ssn(target, 30.0, 7);
    const LtasProfile measured = estimate_ltas(ssn);
    const auto devs = third_octave_deviation_db(
        measured.magnitudes, target.magnitudes, 16000.0 / 512.0, 200.0,
        8000.0);
    REQUIRE(!devs.empty());
    for (double d : devs) REQUIRE(std::abs(d) <= 2.0);
  }

  SUBCASE("flat target keeps the noise Gaussian") {
    LtasProfile flat;
    flat.magnitudes.assign(257, 1.0);
    const AudioBuffer ssn = gen_ssn(flat, 10.0, 3);
    double m2 = 0.0, m4 = 0.0;
    for (double v : ssn.samples) {
      m2 += v * v;
      m4 += v * v * v * v;
    }
    m2 /= static_cast<double>(ssn.samples.size());
    m4 /= static_cast<double>(ssn.samples.size());
    const double kurtosis = m4 / (m2 * m2);
    CHECK(std::abs(kurtosis - 3.0) < 0.3);
  }

  SUBCASE("deterministic per seed") {
    LtasProfile flat;
    flat.magnitudes.assign(257, 0.5);
    const AudioBuffer a = gen_ssn(flat, 2.0, 9);
    const AudioBuffer b = gen_ssn(flat, 2.0, 9);
    const AudioBuffer c = gen_ssn(flat, 2.0, 10);
    CHECK(a.samples == b.samples);
    CHECK(a.samples != c.samples);
  }

  SUBCASE("zero-energy target is an error") {
    LtasProfile dead;
    dead.magnitudes.assign(257, 0.0);
    CHECK_THROWS_AS(gen_ssn(dead, 1.0, 0), ValueError);
  }
}

TEST_CASE("gen_sam_ssn") {
  const AudioBuffer ssn = testsynth::white_noise(10.0, 5, 0.1);

  SUBCASE("zero depth is the RMS-preserved identity") {
    const AudioBuffer out = gen_sam_ssn(ssn, 8.0, 0.0);
    REQUIRE(out.samples.size() == ssn.samples.size());
    for (size_t i = 0; i < out.samples.size(); ++i) {
      REQUIRE(out.samples[i] == doctest::Approx(ssn.samples[i]).epsilon(1e-12));
    }
  }

  SUBCASE("RMS is preserved") {
    const AudioBuffer out = gen_sam_ssn(ssn, 8.0, 1.0);
    CHECK(rms(out) == doctest::Approx(rms(ssn)).epsilon(1e-6));
  }

  SUBCASE("envelope modulation spectrum peaks at the SAM rate") {
    const AudioBuffer out = gen_sam_ssn(ssn, 8.0, 1.0);
    AudioBuffer env = hilbert_envelope(out);
    double mean = 0.0;
    for (double v : env.samples) mean += v;
    mean /= static_cast<double>(env.samples.size());
    for (auto& v : env.samples) v -= mean;
    const auto spectrum = rfft(env.samples, env.samples.size());
    const double bin_hz =
        static_cast<double>(env.sample_rate) / env.samples.size();
    size_t peak = 1;
    for (size_t k = 1; k < spectrum.size(); ++k) {
      const double f = k * bin_hz;
      if (f < 0.5 || f > 100.0) continue;
      if (std::abs(spectrum[k]) > std::abs(spectrum[peak])) peak = k;
    }
    CHECK(peak * bin_hz == doctest::Approx(8.0).epsilon(0.03));
  }

  SUBCASE("bad parameters") {
    CHECK_THROWS_AS(gen_sam_ssn(ssn, 0.0, 1.0), ValueError);
    CHECK_THROWS_AS(gen_sam_ssn(ssn, 8.0, 1.5), ValueError);
  }
}

TEST_CASE("hilbert_envelope") {
  SUBCASE("unit sine has unit envelope away from edges") {
    const AudioBuffer tone = testsynth::sine(500.0, 1.0);
    const AudioBuffer env = hilbert_envelope(tone);
    for (size_t i = 800; i + 800 < env.samples.size(); ++i) {
      REQUIRE(env.samples[i] == doctest::Approx(1.0).epsilon(1e-3));
    }
  }

  SUBCASE("scales with amplitude") {
    const AudioBuffer tone = testsynth::sine(500.0, 1.0, 0.3);
    const AudioBuffer env = hilbert_envelope(tone);
    for (size_t i = 800; i + 800 < env.samples.size(); ++i) {
      REQUIRE(env.samples[i] == doctest::Approx(0.3).epsilon(1e-3));
    }
  }

  SUBCASE("recovers an AM envelope within 2% in the interior") {
    AudioBuffer am;
    am.samples.resize(16000);
    for (size_t i = 0; i < am.samples.size(); ++i) {
      const double t = static_cast<double>(i) / 16000.0;
      am.samples[i] = (1.0 + 0.5 * std::sin(2.0 * M_PI * 4.0 * t)) *
                      std::sin(2.0 * M_PI * 1000.0 * t) * 0.5;
    }
    const AudioBuffer env = hilbert_envelope(am);
    for (size_t i = 1600; i + 1600 < env.samples.size(); i += 37) {
      const double t = static_cast<double>(i) / 16000.0;
      const double expected = 0.5 * (1.0 + 0.5 * std::sin(2.0 * M_PI * 4.0 * t));
      REQUIRE(env.samples[i] == doctest::Approx(expected).epsilon(0.02));
    }
  }
}

TEST_CASE("gen_bb_ssn") {
  const AudioBuffer ssn = testsynth::white_noise(8.0, 41, 0.1);

  SUBCASE("constant-envelope speech returns a scaled ssn") {
    const AudioBuffer tone = testsynth::sine(1000.0, 8.0, 0.4);
    const AudioBuffer out = gen_bb_ssn(ssn, tone);
    CHECK(rms(out) == doctest::Approx(rms(ssn)).epsilon(1e-9));
    // Envelope is ~0.4 in the interior, so after RMS equalization the
    // output tracks the ssn sample by sample.
    const double scale = out.samples[40000] / ssn.samples[40000];
    for (size_t i = 16000; i + 16000 < out.samples.size(); i += 997) {
      REQUIRE(out.samples[i] ==
              doctest::Approx(scale * ssn.samples[i]).epsilon(0.02));
    }
  }

  SUBCASE("output envelope tracks the speech envelope") {
    const AudioBuffer speech = modulated_noise(8.0, 43);
    const AudioBuffer out = gen_bb_ssn(ssn, speech);
    const auto env_speech = smooth_envelope(hilbert_envelope(speech), 250);
    const auto env_out = smooth_envelope(hilbert_envelope(out), 250);
    CHECK(pearson(env_speech, env_out) > 0.8);
  }

  SUBCASE("silent speech is flagged") {
    AudioBuffer silent;
    silent.samples.assign(ssn.samples.size(), 0.0);
    CHECK_THROWS_AS(gen_bb_ssn(ssn, silent), ValueError);
  }
}

TEST_CASE("erb band masks partition unity and reconstruct") {
  const auto masks = erb_band_masks(16000, 16000, 32);
  REQUIRE(masks.size() == 32);
  for (size_t k = 0; k < masks[0].size(); ++k) {
    double sum = 0.0;
    for (const auto& m : masks) sum += m[k];
    REQUIRE(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  const AudioBuffer noise = testsynth::white_noise(1.0, 3, 0.1);
  const auto bands = split_bands(noise, 32);
  for (size_t i = 0; i < noise.samples.size(); ++i) {
    double sum = 0.0;
    for (const auto& b : bands) sum += b.samples[i];
    REQUIRE(sum == doctest::Approx(noise.samples[i]).epsilon(1e-9));
  }
}

TEST_CASE("gen_afs_ssn") {
  const AudioBuffer ssn = testsynth::white_noise(4.0, 51, 0.1);
  const AudioBuffer speech = modulated_noise(12.0, 53);

  SUBCASE("single group reduces to gen_bb_ssn") {
    AudioBuffer speech_same;
    speech_same.samples.assign(speech.samples.begin(),
                               speech.samples.begin() + ssn.samples.size());
    const AudioBuffer afs = gen_afs_ssn(ssn, speech_same, 4, 4, 77);
    const AudioBuffer bb = gen_bb_ssn(ssn, speech_same);
    REQUIRE(afs.samples.size() == bb.samples.size());
    for (size_t i = 0; i < afs.samples.size(); i += 101) {
      REQUIRE(afs.samples[i] == doctest::Approx(bb.samples[i]).epsilon(1e-6));
    }
  }

  SUBCASE("deterministic per seed") {
    const AudioBuffer a = gen_afs_ssn(ssn, speech, 8, 4, 5);
    const AudioBuffer b = gen_afs_ssn(ssn, speech, 8, 4, 5);
    CHECK(a.samples == b.samples);
  }

  SUBCASE("within-group envelopes correlate more than across groups") {
    const AudioBuffer afs = gen_afs_ssn(ssn, speech, 8, 4, 99);
    const auto bands = split_bands(afs, 8);
    std::vector<std::vector<double>> envs;
    for (const auto& band : bands) {
      envs.push_back(smooth_envelope(hilbert_envelope(band), 400));
    }
    double within = 0.0, across = 0.0;
    size_t n_within = 0, n_across = 0;
    for (size_t a = 0; a < envs.size(); ++a) {
      for (size_t b = a + 1; b < envs.size(); ++b) {
        const double r = pearson(envs[a], envs[b]);
        if (a / 4 == b / 4) {
          within += r;
          ++n_within;
        } else {
          across += r;
          ++n_across;
        }
      }
    }
    CHECK(within / n_within > across / n_across);
  }

  SUBCASE("length and divisibility preconditions") {
    CHECK_THROWS_AS(gen_afs_ssn(speech, ssn, 32, 4, 0), ValueError);
    CHECK_THROWS_AS(gen_afs_ssn(ssn, speech, 32, 5, 0), ValueError);
  }
}

TEST_CASE("noise_vocode") {
  const AudioBuffer speech = modulated_noise(6.0, 61);
  const LtasProfile ltas = estimate_ltas(speech);

  SUBCASE("band envelopes of the output track the speech bands") {
    const AudioBuffer out = noise_vocode(speech, ltas, 8, 13);
    const auto speech_bands = split_bands(speech, 8);
    const auto out_bands = split_bands(out, 8);
    for (int b = 0; b < 8; ++b) {
      const auto es = smooth_envelope(hilbert_envelope(speech_bands[b]), 400);
      const auto eo = smooth_envelope(hilbert_envelope(out_bands[b]), 400);
      REQUIRE(pearson(es, eo) > 0.7);
    }
  }

  SUBCASE("fine structure is noise: per-band F0 periodicity disappears") {
    // Harmonic complex at 160 Hz (an exact 100-sample period) under a
    // syllabic modulation. A wide high band is the right place to look: its
    // carrier noise decorrelates within a fraction of the F0 period, while
    // the speech band stays periodic.
    AudioBuffer voiced;
    voiced.samples.resize(6 * 16000);
    for (size_t i = 0; i < voiced.samples.size(); ++i) {
      const double t = static_cast<double>(i) / 16000.0;
      double v = 0.0;
      for (int h = 1; h <= 37; ++h) {
        v += std::sin(2.0 * M_PI * 160.0 * h * t) / h;
      }
      voiced.samples[i] =
          0.1 * v * (1.0 + 0.5 * std::sin(2.0 * M_PI * 3.0 * t));
    }
    VocoderConfig config;
    config.envelope_lowpass_hz = 60.0;  // keep syllable rate, drop F0 beats
    // Carrier shaped by a smooth spectrum; the voiced signal's own LTAS is a
    // line spectrum and would give the carrier the same comb periodicity.
    const AudioBuffer out = noise_vocode(
        voiced, estimate_ltas(modulated_noise(6.0, 67)), 12, 17, config);

    const auto autocorr_at_f0 = [](const AudioBuffer& x) {
      const size_t lag = 100;  // one 160 Hz period
      double num = 0.0, den = 0.0;
      for (size_t i = 0; i + lag < x.samples.size(); ++i) {
        num += x.samples[i] * x.samples[i + lag];
        den += x.samples[i] * x.samples[i];
      }
      return num / den;
    };
    const auto voiced_bands = split_bands(voiced, 12);
    const auto out_bands = split_bands(out, 12);
    CHECK(autocorr_at_f0(voiced_bands[9]) > 0.5);
    CHECK(autocorr_at_f0(out_bands[9]) < 0.25);
  }

  SUBCASE("RMS equalized to the speech") {
    const AudioBuffer out = noise_vocode(speech, ltas, 12, 19);
    CHECK(rms(out) == doctest::Approx(rms(speech)).epsilon(1e-9));
  }
}

TEST_CASE("synthesize_masker dispatch") {
  const AudioBuffer reference = modulated_noise(5.0, 71);
  for (const char* kind : {"ssn", "sam-ssn", "bb-ssn", "afs-ssn", "nv", "raw"}) {
    MaskerSpec spec;
    spec.kind = masker_kind_from_string(kind);
    spec.seed = 3;
    const AudioBuffer masker = synthesize_masker(spec, reference, 3.0);
    REQUIRE(masker.samples.size() == 48000);
    REQUIRE(rms(masker) > 0.0);
  }
  CHECK_THROWS_AS(masker_kind_from_string("bogus"), ValueError);
}
