#include "sipred/audio.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace sipred {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void put_u32(std::string& out, uint32_t v) {
  out += static_cast<char>(v & 0xff);
  out += static_cast<char>((v >> 8) & 0xff);
  out += static_cast<char>((v >> 16) & 0xff);
  out += static_cast<char>((v >> 24) & 0xff);
}

void put_u16(std::string& out, uint16_t v) {
  out += static_cast<char>(v & 0xff);
  out += static_cast<char>((v >> 8) & 0xff);
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path);

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) {
    throw FormatError("not a RIFF file: " + path);
  }
  read_u32(in);  // riff size, unused
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) {
    throw FormatError("not a WAVE file: " + path);
  }

  bool have_fmt = false;
  uint16_t audio_format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<char> data;
  bool have_data = false;

  while (in.read(tag, 4)) {
    const uint32_t chunk_size = read_u32(in);
    if (!in) throw FormatError("truncated wav chunk header: " + path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw FormatError("fmt chunk too small: " + path);
      audio_format = read_u16(in);
      channels = read_u16(in);
      rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      in.ignore(chunk_size - 16);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(chunk_size);
      in.read(data.data(), chunk_size);
      if (static_cast<uint32_t>(in.gcount()) != chunk_size) {
        throw FormatError("truncated wav data chunk: " + path);
      }
      have_data = true;
    } else {
      in.ignore(chunk_size);
    }
    if (chunk_size % 2 == 1) in.ignore(1);  // chunks are word aligned
  }

  if (!have_fmt || !have_data) {
    throw FormatError("missing fmt or data chunk: " + path);
  }
  if (audio_format != kFormatPcm && audio_format != kFormatFloat) {
    throw FormatError("unsupported wav codec (format tag " +
                      std::to_string(audio_format) + "): " + path);
  }
  if (channels != 1) {
    throw FormatError("channel count must be 1 (mono), got " +
                      std::to_string(channels) + ": " + path);
  }
  if (rate != static_cast<uint32_t>(kSampleRate)) {
    throw FormatError("sample rate must be " + std::to_string(kSampleRate) +
                      " Hz, got " + std::to_string(rate) +
                      " (resampling is not performed): " + path);
  }

  AudioBuffer buffer;
  buffer.sample_rate = static_cast<int>(rate);
  if (audio_format == kFormatPcm) {
    if (bits != 16) {
      throw FormatError("unsupported PCM bit depth " + std::to_string(bits) +
                        " (only 16): " + path);
    }
    const size_t n = data.size() / 2;
    if (n == 0) throw FormatError("empty wav data: " + path);
    buffer.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const int16_t v = static_cast<int16_t>(
          static_cast<unsigned char>(data[2 * i]) |
          (static_cast<unsigned char>(data[2 * i + 1]) << 8));
      buffer.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else {
    if (bits != 32) {
      throw FormatError("unsupported float bit depth " + std::to_string(bits) +
                        " (only 32): " + path);
    }
    const size_t n = data.size() / 4;
    if (n == 0) throw FormatError("empty wav data: " + path);
    buffer.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, data.data() + 4 * i, 4);
      if (!std::isfinite(v)) {
        throw FormatError("non-finite sample in wav data: " + path);
      }
      if (std::abs(v) > 1.0f + 1e-5f) {
        throw FormatError("float wav sample outside [-1, 1]: " + path);
      }
      buffer.samples[i] = std::clamp(static_cast<double>(v), -1.0, 1.0);
    }
  }
  return buffer;
}

void write_wav(const AudioBuffer& buffer, const std::string& path,
               WavFormat format) {
  if (buffer.samples.empty()) throw ValueError("write_wav: empty buffer");
  const uint32_t n = static_cast<uint32_t>(buffer.samples.size());
  const uint16_t bytes_per_sample = format == WavFormat::kPcm16 ? 2 : 4;
  const uint32_t data_size = n * bytes_per_sample;

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, format == WavFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(buffer.sample_rate));
  put_u32(out, static_cast<uint32_t>(buffer.sample_rate) * bytes_per_sample);
  put_u16(out, bytes_per_sample);
  put_u16(out, bytes_per_sample * 8);
  out += "data";
  put_u32(out, data_size);

  if (format == WavFormat::kPcm16) {
    for (double s : buffer.samples) {
      const double scaled = std::round(s * 32768.0);
      const int32_t v =
          static_cast<int32_t>(std::clamp(scaled, -32768.0, 32767.0));
      put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(v)));
    }
  } else {
    for (double s : buffer.samples) {
      const float v = static_cast<float>(s);
      char b[4];
      std::memcpy(b, &v, 4);
      out.append(b, 4);
    }
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open wav for writing: " + path);
  os << out;
  if (!os) throw IoError("wav write failed: " + path);
}

double rms(const AudioBuffer& buffer) {
  if (buffer.samples.empty()) throw ValueError("rms: empty buffer");
  double acc = 0.0;
  for (double s : buffer.samples) acc += s * s;
  return std::sqrt(acc / static_cast<double>(buffer.samples.size()));
}

NoiseSegment select_noise_segment(const AudioBuffer& noise, size_t length,
                                  uint64_t seed) {
  if (length == 0) throw ValueError("select_noise_segment: zero length");
  if (noise.samples.size() < length) {
    throw ValueError("select_noise_segment: requested " +
                     std::to_string(length) + " samples from noise of " +
                     std::to_string(noise.samples.size()));
  }
  Rng rng(seed);
  const int64_t max_offset =
      static_cast<int64_t>(noise.samples.size() - length);
  const size_t offset = static_cast<size_t>(rng.uniform_int(0, max_offset));
  NoiseSegment out;
  out.offset = offset;
  out.segment.sample_rate = noise.sample_rate;
  out.segment.samples.assign(noise.samples.begin() + offset,
                             noise.samples.begin() + offset + length);
  return out;
}

MixResult mix_at_snr(const AudioBuffer& speech, const AudioBuffer& noise,
                     double snr_db) {
  if (speech.sample_rate != noise.sample_rate) {
    throw ValueError("mix_at_snr: sample rate mismatch");
  }
  if (noise.samples.size() < speech.samples.size()) {
    throw ValueError("mix_at_snr: noise shorter than speech");
  }
  const size_t n = speech.samples.size();
  if (n == 0) throw ValueError("mix_at_snr: empty speech");

  const double speech_rms = rms(speech);
  double noise_power = 0.0;
  for (size_t i = 0; i < n; ++i) noise_power += noise.samples[i] * noise.samples[i];
  const double noise_rms = std::sqrt(noise_power / static_cast<double>(n));
  if (speech_rms <= 0.0 || noise_rms <= 0.0) {
    throw ValueError("mix_at_snr: degenerate SNR (silent speech or noise)");
  }

  MixResult result;
  result.noise_gain =
      speech_rms / noise_rms * std::pow(10.0, -snr_db / 20.0);
  result.mixture.sample_rate = speech.sample_rate;
  result.mixture.samples.resize(n);
  double peak = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double v = speech.samples[i] + result.noise_gain * noise.samples[i];
    result.mixture.samples[i] = v;
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 1.0) {
    result.clip_gain = 1.0 / peak;
    for (auto& v : result.mixture.samples) v *= result.clip_gain;
  }
  result.achieved_snr_db =
      20.0 * std::log10(speech_rms / (result.noise_gain * noise_rms));
  return result;
}

MixResult mix_random_segment(const AudioBuffer& speech,
                             const AudioBuffer& noise, double snr_db,
                             uint64_t seed) {
  NoiseSegment seg = select_noise_segment(noise, speech.samples.size(), seed);
  MixResult result = mix_at_snr(speech, seg.segment, snr_db);
  result.noise_offset = seg.offset;
  return result;
}

}  // namespace sipred
