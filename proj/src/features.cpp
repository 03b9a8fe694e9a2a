#include "sipred/features.h"

#include <algorithm>
#include <cmath>

#include "sipred/dsp.h"

namespace sipred {

namespace {

constexpr double kLogPowerFloor = 1e-10;
constexpr double kVarianceFloor = 1e-12;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

}  // namespace

Spectrogram stft(const AudioBuffer& buffer, double window_s, double shift_s,
                 size_t nfft) {
  if (buffer.sample_rate != kSampleRate) {
    throw ValueError("stft: expected " + std::to_string(kSampleRate) +
                     " Hz input");
  }
  const size_t window =
      static_cast<size_t>(std::lround(window_s * buffer.sample_rate));
  const size_t shift =
      static_cast<size_t>(std::lround(shift_s * buffer.sample_rate));
  if (window == 0 || shift == 0 || nfft < window) {
    throw ValueError("stft: bad framing parameters");
  }
  if (buffer.samples.size() < window) {
    throw ValueError("stft: input shorter than one window (" +
                     std::to_string(buffer.samples.size()) + " < " +
                     std::to_string(window) + " samples)");
  }

  const size_t frames = 1 + (buffer.samples.size() - window) / shift;
  const std::vector<double> win = hann_window(window);

  Spectrogram spec;
  spec.frames = frames;
  spec.bins = nfft / 2 + 1;
  spec.frame_shift = shift_s;
  spec.sample_rate = buffer.sample_rate;
  spec.nfft = nfft;
  spec.data.resize(frames * spec.bins);

  std::vector<double> frame(window);
  for (size_t t = 0; t < frames; ++t) {
    const double* src = buffer.samples.data() + t * shift;
    for (size_t n = 0; n < window; ++n) frame[n] = src[n] * win[n];
    const auto bins = rfft(frame, nfft);
    std::copy(bins.begin(), bins.end(), spec.data.begin() + t * spec.bins);
  }
  return spec;
}

std::vector<double> mel_filterbank(int n_mels, size_t nfft, int sample_rate,
                                   double fmin_hz, double fmax_hz) {
  const size_t bins = nfft / 2 + 1;
  const double mel_lo = hz_to_mel(fmin_hz);
  const double mel_hi = hz_to_mel(fmax_hz);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  }
  std::vector<double> weights(static_cast<size_t>(n_mels) * bins, 0.0);
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (size_t k = 0; k < bins; ++k) {
      const double f =
          static_cast<double>(k) * sample_rate / static_cast<double>(nfft);
      double w = 0.0;
      if (f > left && f < center) {
        w = (f - left) / (center - left);
      } else if (f >= center && f < right) {
        w = (right - f) / (right - center);
      }
      weights[m * bins + k] = w;
    }
  }
  return weights;
}

FeatureMatrix mfsc(const Spectrogram& spectrogram, int n_mels) {
  if (n_mels != 23 && n_mels != 40) {
    throw ValueError("mfsc: n_mels must be 23 or 40, got " +
                     std::to_string(n_mels));
  }
  const size_t bins = spectrogram.bins;
  const auto fb =
      mel_filterbank(n_mels, spectrogram.nfft, spectrogram.sample_rate);

  FeatureMatrix out;
  out.frames = spectrogram.frames;
  out.dims = static_cast<size_t>(n_mels);
  out.frame_shift = spectrogram.frame_shift;
  out.kind = FeatureKind::kMfsc;
  out.data.resize(out.frames * out.dims);

  std::vector<double> power(bins);
  for (size_t t = 0; t < spectrogram.frames; ++t) {
    for (size_t k = 0; k < bins; ++k) {
      power[k] = std::norm(spectrogram.at(t, k));
    }
    for (int m = 0; m < n_mels; ++m) {
      const double* w = fb.data() + static_cast<size_t>(m) * bins;
      double e = 0.0;
      for (size_t k = 0; k < bins; ++k) e += w[k] * power[k];
      out.at(t, m) = std::log(std::max(e, kLogPowerFloor));
    }
  }
  return out;
}

std::vector<std::complex<double>> amfb_filter_taps(const AmfbConfig& config,
                                                   size_t filter) {
  if (filter >= config.center_freqs_hz.size()) {
    throw ValueError("amfb_filter_taps: filter index out of range");
  }
  const int w_len = config.window_lengths[filter];
  if (w_len < 1 || w_len % 2 == 0) {
    throw ValueError("amfb: window lengths must be odd and positive");
  }
  const int center = (w_len - 1) / 2;
  // Radian frequency per frame.
  const double omega =
      2.0 * M_PI * config.center_freqs_hz[filter] * config.frame_shift;
  std::vector<std::complex<double>> taps(w_len);
  for (int n = 0; n < w_len; ++n) {
    const double rel = static_cast<double>(n - center);
    const double envelope =
        0.5 + 0.5 * std::cos(2.0 * M_PI * rel / static_cast<double>(w_len + 1));
    taps[n] = std::polar(envelope, omega * rel);
  }
  return taps;
}

FeatureMatrix amfb(const FeatureMatrix& mfsc40, const AmfbConfig& config) {
  if (mfsc40.dims != 40) {
    throw ValueError("amfb: expected 40-channel MFSC input, got " +
                     std::to_string(mfsc40.dims) + " dims");
  }
  if (config.center_freqs_hz.size() != config.window_lengths.size() ||
      config.center_freqs_hz.empty() || config.center_freqs_hz[0] != 0.0) {
    throw ValueError("amfb: config must pair one window length per filter, "
                     "first filter at DC");
  }
  const size_t n_filters = config.center_freqs_hz.size();
  const size_t n_channels = mfsc40.dims;
  const size_t frames = mfsc40.frames;
  // One stream for the DC filter's real part, two per remaining filter.
  const size_t n_streams = 2 * n_filters - 1;

  FeatureMatrix out;
  out.frames = frames;
  out.dims = n_streams * n_channels;
  out.frame_shift = mfsc40.frame_shift;
  out.kind = FeatureKind::kAmfb;
  out.data.assign(frames * out.dims, 0.0);

  const auto clamp_frame = [frames](long t) {
    return static_cast<size_t>(std::clamp<long>(t, 0, static_cast<long>(frames) - 1));
  };

  size_t stream = 0;
  std::vector<bool> stream_is_real(n_streams, false);
  for (size_t f = 0; f < n_filters; ++f) {
    const auto taps = amfb_filter_taps(config, f);
    const int center = (static_cast<int>(taps.size()) - 1) / 2;
    const size_t re_stream = stream++;
    stream_is_real[re_stream] = true;
    const size_t im_stream = (f == 0) ? 0 : stream++;

    for (size_t c = 0; c < n_channels; ++c) {
      for (size_t t = 0; t < frames; ++t) {
        std::complex<double> acc = 0.0;
        // y[t] = sum_j q[j] * x[t - (j - center)], edges replicated.
        for (size_t j = 0; j < taps.size(); ++j) {
          const long u = static_cast<long>(t) - (static_cast<long>(j) - center);
          acc += taps[j] * mfsc40.at(clamp_frame(u), c);
        }
        out.at(t, re_stream * n_channels + c) = acc.real();
        if (f != 0) out.at(t, im_stream * n_channels + c) = acc.imag();
      }
    }
  }

  // DC-free real outputs: subtract the utterance mean of every real stream.
  for (size_t s = 0; s < n_streams; ++s) {
    if (!stream_is_real[s]) continue;
    for (size_t c = 0; c < n_channels; ++c) {
      const size_t d = s * n_channels + c;
      double mean = 0.0;
      for (size_t t = 0; t < frames; ++t) mean += out.at(t, d);
      mean /= static_cast<double>(frames);
      for (size_t t = 0; t < frames; ++t) out.at(t, d) -= mean;
    }
  }
  return out;
}

FeatureMatrix splice(const FeatureMatrix& features, int context) {
  if (features.frames == 0) throw ValueError("splice: empty input");
  if (context < 0) throw ValueError("splice: negative context");
  const size_t width = 2 * static_cast<size_t>(context) + 1;

  FeatureMatrix out;
  out.frames = features.frames;
  out.dims = width * features.dims;
  out.frame_shift = features.frame_shift;
  out.kind = FeatureKind::kSpliced;
  out.data.resize(out.frames * out.dims);

  const long last = static_cast<long>(features.frames) - 1;
  for (size_t t = 0; t < features.frames; ++t) {
    double* dst = out.data.data() + t * out.dims;
    for (long off = -context; off <= context; ++off) {
      const size_t src_t =
          static_cast<size_t>(std::clamp(static_cast<long>(t) + off, 0L, last));
      const double* src = features.data.data() + src_t * features.dims;
      std::copy(src, src + features.dims, dst);
      dst += features.dims;
    }
  }
  return out;
}

FeatureMatrix mvn(const FeatureMatrix& features) {
  if (features.frames < 2) {
    throw ValueError("mvn: needs at least 2 frames, got " +
                     std::to_string(features.frames));
  }
  FeatureMatrix out = features;
  const double n = static_cast<double>(features.frames);
  for (size_t d = 0; d < features.dims; ++d) {
    double mean = 0.0;
    for (size_t t = 0; t < features.frames; ++t) mean += features.at(t, d);
    mean /= n;
    double var = 0.0;
    for (size_t t = 0; t < features.frames; ++t) {
      const double dev = features.at(t, d) - mean;
      var += dev * dev;
    }
    var /= n;
    if (var < kVarianceFloor) {
      for (size_t t = 0; t < features.frames; ++t) out.at(t, d) = 0.0;
    } else {
      const double inv_std = 1.0 / std::sqrt(var);
      for (size_t t = 0; t < features.frames; ++t) {
        out.at(t, d) = (features.at(t, d) - mean) * inv_std;
      }
    }
  }
  return out;
}

}  // namespace sipred
