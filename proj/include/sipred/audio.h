#ifndef SIPRED_AUDIO_H_
#define SIPRED_AUDIO_H_

#include <cstdint>
#include <string>
#include <vector>

#include "sipred/common.h"

namespace sipred {

/// Mono sampled waveform. Samples live in [-1, 1]; every operation that could
/// leave that range (mixing) rescales and records the gain it applied.
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

enum class WavFormat { kPcm16, kFloat32 };

/// Reads a mono RIFF/WAV file (16-bit PCM or 32-bit float) at 16 kHz.
/// Anything else is rejected: multichannel input, unsupported codecs, and
/// other sample rates (no silent resampling).
AudioBuffer read_wav(const std::string& path);

void write_wav(const AudioBuffer& buffer, const std::string& path,
               WavFormat format = WavFormat::kPcm16);

/// sqrt(mean(samples^2)); zero for silence.
double rms(const AudioBuffer& buffer);

struct NoiseSegment {
  AudioBuffer segment;
  size_t offset = 0;  // sample index into the source noise
};

/// Contiguous segment of `noise` at a seeded-uniform offset. Pure function of
/// (noise, length, seed).
NoiseSegment select_noise_segment(const AudioBuffer& noise, size_t length,
                                  uint64_t seed);

struct MixResult {
  AudioBuffer mixture;
  double achieved_snr_db = 0.0;
  double noise_gain = 1.0;   // linear gain applied to the noise
  size_t noise_offset = 0;   // segment origin when mixed via a segment
  double clip_gain = 1.0;    // global rescale applied when |sample| exceeded 1
};

/// Scales `noise` so that 20*log10(rms(speech)/rms(scaled noise)) equals
/// snr_db and adds it to `speech`. SNR is defined on full-utterance RMS. If
/// the sum exceeds [-1, 1] the whole mixture is rescaled (clip_gain), which
/// leaves the SNR untouched. `noise` must be at least as long as `speech`;
/// only its first len(speech) samples are used.
MixResult mix_at_snr(const AudioBuffer& speech, const AudioBuffer& noise,
                     double snr_db);

/// select_noise_segment + mix_at_snr, with the segment offset recorded in the
/// result.
MixResult mix_random_segment(const AudioBuffer& speech,
                             const AudioBuffer& noise, double snr_db,
                             uint64_t seed);

}  // namespace sipred

#endif  // SIPRED_AUDIO_H_
