#ifndef SIPRED_MASKERS_H_
#define SIPRED_MASKERS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "sipred/audio.h"

namespace sipred {

/// Long-term average magnitude spectrum on an FFT-bin grid, estimated by
/// Welch averaging. Absolute level is meaningful: gen_ssn reproduces it.
struct LtasProfile {
  std::vector<double> magnitudes;  // fft_size/2 + 1 bins
  size_t fft_size = 512;
  int sample_rate = kSampleRate;
};

/// Welch-averaged magnitude spectrum (Hann, 512 points, 50% overlap).
/// Requires at least one second of input.
LtasProfile estimate_ltas(const AudioBuffer& speech);

/// Stationary speech-shaped noise: seeded white Gaussian noise shaped to the
/// LTAS by STFT-domain filtering with overlap-add resynthesis. Deterministic
/// per seed; the output's own LTAS matches the target.
AudioBuffer gen_ssn(const LtasProfile& ltas, double duration_s, uint64_t seed);

/// Sinusoidal amplitude modulation (1 + depth*sin(2 pi rate t)), RMS
/// re-equalized to the input.
AudioBuffer gen_sam_ssn(const AudioBuffer& ssn, double rate_hz = 8.0,
                        double depth = 1.0);

/// Magnitude of the analytic signal (FFT Hilbert transform).
AudioBuffer hilbert_envelope(const AudioBuffer& signal);

/// SSN multiplied by the broadband Hilbert envelope of `speech`
/// (lengths cropped to the shorter), RMS-equalized to the ssn.
AudioBuffer gen_bb_ssn(const AudioBuffer& ssn, const AudioBuffer& speech);

/// Across-frequency shifted SSN: the SSN is split into n_channels bands
/// (equal-ERB complementary filterbank, 80 Hz - 8 kHz) and every group of
/// adjacent bands is multiplied by the broadband speech Hilbert envelope
/// starting at its own seeded random offset. Offsets are drawn pairwise
/// distinct whenever the offset range allows it. The speech must be at least
/// as long as the ssn.
AudioBuffer gen_afs_ssn(const AudioBuffer& ssn, const AudioBuffer& speech,
                        int n_channels = 32, int group = 4, uint64_t seed = 0);

struct VocoderConfig {
  int n_bands = 12;
  /// Per-band envelope lowpass cutoff; <= 0 leaves the raw Hilbert
  /// magnitude in place (the default).
  double envelope_lowpass_hz = 0.0;
};

/// Noise vocoding: per-band Hilbert envelopes of the speech imposed on
/// identically filtered SSN carrier bands (carrier generated internally from
/// the LTAS and seed), summed and RMS-equalized to the speech. Removes the
/// speech fine structure while keeping the band envelopes.
AudioBuffer noise_vocode(const AudioBuffer& speech, const LtasProfile& ltas,
                         int n_bands, uint64_t seed,
                         const VocoderConfig& config = {});

/// Partition-of-unity band masks over the rfft bins of an n-sample signal:
/// n_bands equal-ERB bands between 80 Hz and 8 kHz with raised-cosine
/// crossfades; the masks sum to one on every bin, so the bands reconstruct
/// the input exactly. Exposed for the band-level oracles in the tests.
std::vector<std::vector<double>> erb_band_masks(size_t n_samples,
                                                int sample_rate, int n_bands);

/// Zero-phase band split using erb_band_masks.
std::vector<AudioBuffer> split_bands(const AudioBuffer& signal, int n_bands);

enum class MaskerKind {
  kSsn,
  kSamSsn,
  kBbSsn,
  kAfsSsn,
  kNoiseVocoded,
  kRawSpeech,
};

MaskerKind masker_kind_from_string(const std::string& name);
std::string to_string(MaskerKind kind);

struct MaskerSpec {
  MaskerKind kind = MaskerKind::kSsn;
  double sam_rate_hz = 8.0;
  double sam_depth = 1.0;
  int afs_channels = 32;
  int afs_group = 4;
  int vocoder_bands = 12;
  uint64_t seed = 0;
};

/// Synthesizes one masker of `duration_s` from reference speech (used for
/// the LTAS, the envelopes, and as the vocoder/raw source). Raw speech is
/// tiled or cropped to the duration.
AudioBuffer synthesize_masker(const MaskerSpec& spec,
                              const AudioBuffer& reference_speech,
                              double duration_s);

}  // namespace sipred

#endif  // SIPRED_MASKERS_H_
