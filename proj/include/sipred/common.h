#ifndef SIPRED_COMMON_H_
#define SIPRED_COMMON_H_

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sipred {

// All pipeline entry points operate at this rate; inputs at any other rate
// are rejected rather than resampled.
inline constexpr int kSampleRate = 16000;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// File access and read/write failures.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Malformed or unsupported file contents (codec, magic, truncation).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Precondition violations: bad shapes, lengths, ranges, degenerate inputs.
class ValueError : public Error {
 public:
  explicit ValueError(const std::string& msg) : Error(msg) {}
};

// A fit or calibration that cannot be carried out on the given data
// (rank-deficient calibration input, saturated psychometric points).
class FitError : public Error {
 public:
  explicit FitError(const std::string& msg) : Error(msg) {}
};

/// Deterministic seeded random generator (xoshiro256++ seeded via splitmix64).
///
/// Every random decision in the toolkit flows from one of these, derived from
/// a root seed through named substreams, so any component can be reproduced
/// in isolation. The generator is self-contained on purpose: <random>
/// distributions are implementation-defined and would break cross-platform
/// reproducibility of manifests and maskers.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  /// Independent generator derived from this generator's seed and a stream
  /// name. Does not advance or depend on this generator's position.
  Rng substream(std::string_view name, uint64_t index = 0) const;

  uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [lo, hi], inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi);
  /// Standard normal via Box-Muller.
  double gaussian();

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_ = 0;
  std::array<uint64_t, 4> state_{};
  bool has_cached_gaussian_ = false;
  double cached_gaussian_ = 0.0;
};

/// Shortest-round-trip style float formatting used for every CSV and report
/// the toolkit writes. One code path keeps artifacts byte-stable across runs.
std::string format_double(double value);

/// Joins one CSV row; values are written verbatim (callers format numbers
/// with format_double).
std::string csv_row(const std::vector<std::string>& fields);

/// Splits one CSV line on commas (no quoting; the toolkit never emits quotes).
std::vector<std::string> split_csv_line(const std::string& line);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& contents);

}  // namespace sipred

#endif  // SIPRED_COMMON_H_
