#ifndef SIPRED_FEATURES_H_
#define SIPRED_FEATURES_H_

#include <complex>
#include <string>
#include <vector>

#include "sipred/audio.h"

namespace sipred {

struct Spectrogram {
  size_t frames = 0;
  size_t bins = 0;
  std::vector<std::complex<double>> data;  // row-major, frames x bins
  double frame_shift = 0.010;
  int sample_rate = kSampleRate;
  size_t nfft = 512;

  std::complex<double>& at(size_t t, size_t f) { return data[t * bins + f]; }
  const std::complex<double>& at(size_t t, size_t f) const {
    return data[t * bins + f];
  }
};

enum class FeatureKind { kMfsc, kAmfb, kSpliced };

struct FeatureMatrix {
  size_t frames = 0;
  size_t dims = 0;
  std::vector<double> data;  // row-major, frames x dims
  double frame_shift = 0.010;
  FeatureKind kind = FeatureKind::kMfsc;

  double& at(size_t t, size_t d) { return data[t * dims + d]; }
  const double& at(size_t t, size_t d) const { return data[t * dims + d]; }
};

/// 25 ms / 10 ms Hann-windowed STFT with a 512-point zero-padded transform.
/// Frame count is 1 + floor((N - window) / shift); the input must be 16 kHz
/// and at least one window long.
Spectrogram stft(const AudioBuffer& buffer, double window_s = 0.025,
                 double shift_s = 0.010, size_t nfft = 512);

/// Log mel spectral coefficients: triangular filters equidistant on the mel
/// scale between 64 Hz and 8 kHz applied to the power spectrum, natural log
/// with the power floored at 1e-10. n_mels is 23 or 40.
FeatureMatrix mfsc(const Spectrogram& spectrogram, int n_mels);

/// Amplitude modulation filterbank: complex exponentials under a zero-phase
/// Hann envelope h(n) = 0.5 + 0.5 cos(2 pi (n - n0) / (W + 1)).
struct AmfbConfig {
  std::vector<double> center_freqs_hz = {0.0, 5.5, 10.15, 15.91, 27.03};
  // Envelope lengths in frames, one per filter, odd so n0 is the center
  // frame. Defaults narrow with rising center frequency so the -3 dB
  // bandwidth grows with it.
  std::vector<int> window_lengths = {111, 61, 35, 21, 13};
  double frame_shift = 0.010;
};

/// Convolves each of the 40 MFSC channels with each modulation filter along
/// time (same-length output, edge replication). Emits real and imaginary
/// parts for every filter except the DC filter, whose imaginary part is
/// identically zero: 9 streams x 40 channels = 360 dims, laid out
/// stream-major (dim = stream * 40 + channel) with stream order
/// f0.re, f1.re, f1.im, f2.re, f2.im, ... The mean of each real stream is
/// subtracted over the utterance. Callers normally follow with mvn() and
/// splice().
FeatureMatrix amfb(const FeatureMatrix& mfsc40, const AmfbConfig& config = {});

/// Concatenates frames t-context .. t+context with edge replication;
/// output dim = (2*context + 1) * dims.
FeatureMatrix splice(const FeatureMatrix& features, int context = 5);

/// Utterance-level mean and variance normalization per dimension
/// (population variance). Dimensions with variance below 1e-12 are left at
/// zero after mean removal. Requires at least two frames.
FeatureMatrix mvn(const FeatureMatrix& features);

/// Mel filterbank weights, n_mels x (nfft/2 + 1) row-major. Exposed so tests
/// can check mfsc against direct summation.
std::vector<double> mel_filterbank(int n_mels, size_t nfft, int sample_rate,
                                   double fmin_hz = 64.0,
                                   double fmax_hz = 8000.0);

/// One modulation filter's complex taps q(n) = s(n) h(n); length
/// config.window_lengths[filter].
std::vector<std::complex<double>> amfb_filter_taps(const AmfbConfig& config,
                                                   size_t filter);

}  // namespace sipred

#endif  // SIPRED_FEATURES_H_
