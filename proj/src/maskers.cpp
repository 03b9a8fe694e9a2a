#include "sipred/maskers.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <set>

#include "sipred/dsp.h"

namespace sipred {

namespace {

constexpr size_t kLtasFft = 512;
constexpr size_t kLtasHop = 256;

double band_rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

void equalize_rms(std::vector<double>& x, double target_rms,
                  const char* what) {
  const double current = band_rms(x);
  if (current <= 0.0) {
    throw ValueError(std::string(what) + ": degenerate all-zero output");
  }
  const double gain = target_rms / current;
  for (double& v : x) v *= gain;
}

double erb_scale(double hz) { return 21.4 * std::log10(1.0 + 0.00437 * hz); }
double erb_scale_inv(double e) {
  return (std::pow(10.0, e / 21.4) - 1.0) / 0.00437;
}

AudioBuffer tile_to_length(const AudioBuffer& source, size_t n) {
  if (source.samples.empty()) throw ValueError("tile: empty source");
  AudioBuffer out;
  out.sample_rate = source.sample_rate;
  out.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    out.samples[i] = source.samples[i % source.samples.size()];
  }
  return out;
}

}  // namespace

LtasProfile estimate_ltas(const AudioBuffer& speech) {
  if (speech.samples.size() < static_cast<size_t>(speech.sample_rate)) {
    throw ValueError("estimate_ltas: need at least 1 s of input, got " +
                     format_double(speech.duration_s()) + " s");
  }
  const auto window = hann_window(kLtasFft);
  const size_t frames = 1 + (speech.samples.size() - kLtasFft) / kLtasHop;

  LtasProfile ltas;
  ltas.fft_size = kLtasFft;
  ltas.sample_rate = speech.sample_rate;
  ltas.magnitudes.assign(kLtasFft / 2 + 1, 0.0);

  std::vector<double> frame(kLtasFft);
  for (size_t t = 0; t < frames; ++t) {
    const double* src = speech.samples.data() + t * kLtasHop;
    for (size_t n = 0; n < kLtasFft; ++n) frame[n] = src[n] * window[n];
    const auto bins = rfft(frame, kLtasFft);
    for (size_t k = 0; k < bins.size(); ++k) {
      ltas.magnitudes[k] += std::norm(bins[k]);
    }
  }
  for (auto& m : ltas.magnitudes) {
    m = std::sqrt(m / static_cast<double>(frames));
  }
  return ltas;
}

namespace {

// Shared by gen_ssn and noise_vocode so both can address an exact sample
// count.
AudioBuffer gen_ssn_samples(const LtasProfile& ltas, size_t n_samples,
                            uint64_t seed) {
  if (n_samples == 0) throw ValueError("gen_ssn: duration must be positive");
  double energy = 0.0;
  for (double m : ltas.magnitudes) energy += m * m;
  if (energy <= 0.0) throw ValueError("gen_ssn: zero-energy LTAS");
  if (ltas.fft_size != kLtasFft) {
    throw ValueError("gen_ssn: unexpected LTAS fft size");
  }

  const auto window = hann_window(kLtasFft);
  double window_power = 0.0;
  for (double w : window) window_power += w * w;

  // Unit-variance white noise measures sqrt(sum w^2) flat under the Welch
  // analysis above, so these gains make the output LTAS land on the target.
  std::vector<double> gains(ltas.magnitudes.size());
  for (size_t k = 0; k < gains.size(); ++k) {
    gains[k] = ltas.magnitudes[k] / std::sqrt(window_power);
  }

  // Pad one window on both sides so every retained sample has full
  // overlap-add coverage, then round the padded length up to the hop grid.
  const size_t pad = kLtasFft;
  size_t total = n_samples + 2 * pad;
  const size_t rem = (total - kLtasFft) % kLtasHop;
  if (rem != 0) total += kLtasHop - rem;

  Rng rng(seed);
  std::vector<double> white(total);
  for (auto& v : white) v = rng.gaussian();

  std::vector<double> shaped(total, 0.0);
  const size_t frames = 1 + (total - kLtasFft) / kLtasHop;
  std::vector<double> frame(kLtasFft);
  for (size_t t = 0; t < frames; ++t) {
    const size_t start = t * kLtasHop;
    for (size_t n = 0; n < kLtasFft; ++n) {
      frame[n] = white[start + n] * window[n];
    }
    auto bins = rfft(frame, kLtasFft);
    for (size_t k = 0; k < bins.size(); ++k) bins[k] *= gains[k];
    const auto filtered = irfft(bins, kLtasFft);
    for (size_t n = 0; n < kLtasFft; ++n) {
      shaped[start + n] += filtered[n];
    }
  }

  AudioBuffer out;
  out.sample_rate = ltas.sample_rate;
  out.samples.assign(shaped.begin() + pad, shaped.begin() + pad + n_samples);
  return out;
}

}  // namespace

AudioBuffer gen_ssn(const LtasProfile& ltas, double duration_s,
                    uint64_t seed) {
  if (!(duration_s > 0.0)) {
    throw ValueError("gen_ssn: duration must be positive");
  }
  const size_t n = static_cast<size_t>(std::llround(duration_s * ltas.sample_rate));
  return gen_ssn_samples(ltas, n, seed);
}

AudioBuffer gen_sam_ssn(const AudioBuffer& ssn, double rate_hz, double depth) {
  if (!(rate_hz > 0.0)) throw ValueError("gen_sam_ssn: rate must be positive");
  if (depth < 0.0 || depth > 1.0) {
    throw ValueError("gen_sam_ssn: depth must lie in [0, 1]");
  }
  const double input_rms = rms(ssn);
  if (input_rms <= 0.0) throw ValueError("gen_sam_ssn: silent input");

  AudioBuffer out;
  out.sample_rate = ssn.sample_rate;
  out.samples.resize(ssn.samples.size());
  const double step = 2.0 * M_PI * rate_hz / ssn.sample_rate;
  for (size_t i = 0; i < ssn.samples.size(); ++i) {
    out.samples[i] =
        ssn.samples[i] * (1.0 + depth * std::sin(step * static_cast<double>(i)));
  }
  equalize_rms(out.samples, input_rms, "gen_sam_ssn");
  return out;
}

AudioBuffer hilbert_envelope(const AudioBuffer& signal) {
  const size_t n = signal.samples.size();
  if (n < 2) throw ValueError("hilbert_envelope: need at least 2 samples");
  std::vector<std::complex<double>> x(n);
  for (size_t i = 0; i < n; ++i) x[i] = signal.samples[i];
  auto spectrum = fft(x);
  // Analytic-signal weighting: keep DC and Nyquist, double the positive
  // frequencies, zero the negative ones.
  const size_t half = n / 2;
  for (size_t k = 1; k < (n + 1) / 2; ++k) spectrum[k] *= 2.0;
  for (size_t k = half + 1; k < n; ++k) spectrum[k] = 0.0;
  const auto analytic = ifft(spectrum);

  AudioBuffer env;
  env.sample_rate = signal.sample_rate;
  env.samples.resize(n);
  for (size_t i = 0; i < n; ++i) env.samples[i] = std::abs(analytic[i]);
  return env;
}

AudioBuffer gen_bb_ssn(const AudioBuffer& ssn, const AudioBuffer& speech) {
  const size_t n = std::min(ssn.samples.size(), speech.samples.size());
  if (n < 2) throw ValueError("gen_bb_ssn: inputs too short");

  AudioBuffer speech_crop;
  speech_crop.sample_rate = speech.sample_rate;
  speech_crop.samples.assign(speech.samples.begin(),
                             speech.samples.begin() + n);
  if (rms(speech_crop) <= 0.0) {
    throw ValueError("gen_bb_ssn: silent speech gives an all-zero masker");
  }
  const AudioBuffer envelope = hilbert_envelope(speech_crop);

  AudioBuffer out;
  out.sample_rate = ssn.sample_rate;
  out.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    out.samples[i] = ssn.samples[i] * envelope.samples[i];
  }
  AudioBuffer ssn_crop;
  ssn_crop.sample_rate = ssn.sample_rate;
  ssn_crop.samples.assign(ssn.samples.begin(), ssn.samples.begin() + n);
  equalize_rms(out.samples, rms(ssn_crop), "gen_bb_ssn");
  return out;
}

std::vector<std::vector<double>> erb_band_masks(size_t n_samples,
                                                int sample_rate, int n_bands) {
  if (n_bands < 1) throw ValueError("erb_band_masks: need at least one band");
  const size_t bins = n_samples / 2 + 1;
  std::vector<std::vector<double>> masks(
      n_bands, std::vector<double>(bins, 0.0));
  if (n_bands == 1) {
    std::fill(masks[0].begin(), masks[0].end(), 1.0);
    return masks;
  }

  const double e_lo = erb_scale(80.0);
  const double e_hi = erb_scale(8000.0);
  std::vector<double> edges(n_bands + 1);
  for (int i = 0; i <= n_bands; ++i) {
    edges[i] = erb_scale_inv(e_lo + (e_hi - e_lo) * i / n_bands);
  }
  // Transition half-widths at the interior edges; a quarter of the narrower
  // neighbor keeps adjacent transitions disjoint, so the masks stay a
  // partition of unity.
  std::vector<double> half_width(n_bands + 1, 0.0);
  for (int i = 1; i < n_bands; ++i) {
    half_width[i] =
        0.25 * std::min(edges[i] - edges[i - 1], edges[i + 1] - edges[i]);
  }

  // Rising ramp centered at interior edge i (0 below, 1 above); the outer
  // edges extend to DC and Nyquist so every bin belongs somewhere.
  const auto rising = [&](int edge, double f) {
    const double h = half_width[edge];
    if (f <= edges[edge] - h) return 0.0;
    if (f >= edges[edge] + h) return 1.0;
    const double t = (f - (edges[edge] - h)) / (2.0 * h);
    const double s = std::sin(0.5 * M_PI * t);
    return s * s;
  };

  for (size_t k = 0; k < bins; ++k) {
    const double f = static_cast<double>(k) * sample_rate /
                     static_cast<double>(n_samples);
    for (int b = 0; b < n_bands; ++b) {
      const double up = (b == 0) ? 1.0 : rising(b, f);
      const double down = (b == n_bands - 1) ? 1.0 : 1.0 - rising(b + 1, f);
      masks[b][k] = up * down;
    }
  }
  return masks;
}

std::vector<AudioBuffer> split_bands(const AudioBuffer& signal, int n_bands) {
  const size_t n = signal.samples.size();
  if (n < 2) throw ValueError("split_bands: input too short");
  const auto masks = erb_band_masks(n, signal.sample_rate, n_bands);
  const auto spectrum = rfft(signal.samples, n);

  std::vector<AudioBuffer> bands(n_bands);
  std::vector<std::complex<double>> shaped(spectrum.size());
  for (int b = 0; b < n_bands; ++b) {
    for (size_t k = 0; k < spectrum.size(); ++k) {
      shaped[k] = spectrum[k] * masks[b][k];
    }
    bands[b].sample_rate = signal.sample_rate;
    bands[b].samples = irfft(shaped, n);
  }
  return bands;
}

AudioBuffer gen_afs_ssn(const AudioBuffer& ssn, const AudioBuffer& speech,
                        int n_channels, int group, uint64_t seed) {
  if (n_channels < 1 || group < 1 || n_channels % group != 0) {
    throw ValueError("gen_afs_ssn: channel count must be divisible by group");
  }
  const size_t n = ssn.samples.size();
  if (speech.samples.size() < n) {
    throw ValueError("gen_afs_ssn: speech (" +
                     std::to_string(speech.samples.size()) +
                     " samples) shorter than ssn (" + std::to_string(n) +
                     "); no envelope section fits");
  }
  const int n_groups = n_channels / group;
  const AudioBuffer envelope = hilbert_envelope(speech);

  // One seeded offset per group, pairwise distinct whenever the offset range
  // allows that many distinct values.
  const int64_t max_offset = static_cast<int64_t>(speech.samples.size() - n);
  Rng rng = Rng(seed).substream("afs-offsets");
  std::vector<size_t> offsets;
  const bool want_distinct = max_offset + 1 >= n_groups;
  std::set<size_t> used;
  while (static_cast<int>(offsets.size()) < n_groups) {
    const size_t off = static_cast<size_t>(rng.uniform_int(0, max_offset));
    if (want_distinct && used.count(off)) continue;
    used.insert(off);
    offsets.push_back(off);
  }

  const auto bands = split_bands(ssn, n_channels);
  std::vector<double> out(n, 0.0);
  for (int g = 0; g < n_groups; ++g) {
    const size_t off = offsets[g];
    for (int b = g * group; b < (g + 1) * group; ++b) {
      for (size_t i = 0; i < n; ++i) {
        out[i] += bands[b].samples[i] * envelope.samples[off + i];
      }
    }
  }
  equalize_rms(out, rms(ssn), "gen_afs_ssn");

  AudioBuffer result;
  result.sample_rate = ssn.sample_rate;
  result.samples = std::move(out);
  return result;
}

namespace {

std::vector<double> lowpass_envelope(const std::vector<double>& env,
                                     int sample_rate, double cutoff_hz) {
  const size_t n = env.size();
  auto spectrum = rfft(env, n);
  for (size_t k = 0; k < spectrum.size(); ++k) {
    const double f =
        static_cast<double>(k) * sample_rate / static_cast<double>(n);
    if (f > cutoff_hz) spectrum[k] = 0.0;
  }
  auto smoothed = irfft(spectrum, n);
  for (auto& v : smoothed) v = std::max(v, 0.0);
  return smoothed;
}

}  // namespace

AudioBuffer noise_vocode(const AudioBuffer& speech, const LtasProfile& ltas,
                         int n_bands, uint64_t seed,
                         const VocoderConfig& config) {
  if (n_bands < 1) throw ValueError("noise_vocode: need at least one band");
  const size_t n = speech.samples.size();
  if (n < 2) throw ValueError("noise_vocode: input too short");
  const double speech_rms = rms(speech);
  if (speech_rms <= 0.0) throw ValueError("noise_vocode: silent speech");

  const AudioBuffer carrier = gen_ssn_samples(ltas, n, seed);
  const auto speech_bands = split_bands(speech, n_bands);
  const auto carrier_bands = split_bands(carrier, n_bands);

  std::vector<double> out(n, 0.0);
  for (int b = 0; b < n_bands; ++b) {
    AudioBuffer env = hilbert_envelope(speech_bands[b]);
    if (config.envelope_lowpass_hz > 0.0) {
      env.samples = lowpass_envelope(env.samples, speech.sample_rate,
                                     config.envelope_lowpass_hz);
    }
    for (size_t i = 0; i < n; ++i) {
      out[i] += carrier_bands[b].samples[i] * env.samples[i];
    }
  }
  equalize_rms(out, speech_rms, "noise_vocode");

  AudioBuffer result;
  result.sample_rate = speech.sample_rate;
  result.samples = std::move(out);
  return result;
}

MaskerKind masker_kind_from_string(const std::string& name) {
  if (name == "ssn") return MaskerKind::kSsn;
  if (name == "sam-ssn") return MaskerKind::kSamSsn;
  if (name == "bb-ssn") return MaskerKind::kBbSsn;
  if (name == "afs-ssn") return MaskerKind::kAfsSsn;
  if (name == "nv") return MaskerKind::kNoiseVocoded;
  if (name == "raw") return MaskerKind::kRawSpeech;
  throw ValueError("unknown masker kind: " + name);
}

std::string to_string(MaskerKind kind) {
  switch (kind) {
    case MaskerKind::kSsn: return "ssn";
    case MaskerKind::kSamSsn: return "sam-ssn";
    case MaskerKind::kBbSsn: return "bb-ssn";
    case MaskerKind::kAfsSsn: return "afs-ssn";
    case MaskerKind::kNoiseVocoded: return "nv";
    case MaskerKind::kRawSpeech: return "raw";
  }
  throw ValueError("bad masker kind");
}

AudioBuffer synthesize_masker(const MaskerSpec& spec,
                              const AudioBuffer& reference_speech,
                              double duration_s) {
  if (!(duration_s > 0.0)) {
    throw ValueError("synthesize_masker: duration must be positive");
  }
  const size_t n = static_cast<size_t>(
      std::llround(duration_s * reference_speech.sample_rate));

  if (spec.kind == MaskerKind::kRawSpeech) {
    return tile_to_length(reference_speech, n);
  }

  const LtasProfile ltas = estimate_ltas(reference_speech);
  switch (spec.kind) {
    case MaskerKind::kSsn:
      return gen_ssn_samples(ltas, n, spec.seed);
    case MaskerKind::kSamSsn:
      return gen_sam_ssn(gen_ssn_samples(ltas, n, spec.seed), spec.sam_rate_hz,
                         spec.sam_depth);
    case MaskerKind::kBbSsn:
      return gen_bb_ssn(gen_ssn_samples(ltas, n, spec.seed),
                        tile_to_length(reference_speech, n));
    case MaskerKind::kAfsSsn:
      // Tile the envelope source to twice the masker so the per-group
      // sections have room to land at different offsets.
      return gen_afs_ssn(gen_ssn_samples(ltas, n, spec.seed),
                         tile_to_length(reference_speech, 2 * n),
                         spec.afs_channels, spec.afs_group, spec.seed);
    case MaskerKind::kNoiseVocoded:
      return noise_vocode(tile_to_length(reference_speech, n), ltas,
                          spec.vocoder_bands, spec.seed);
    default:
      throw ValueError("synthesize_masker: unhandled kind");
  }
}

}  // namespace sipred
