#include "sipred/dsp.h"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>

#include "sipred/common.h"

namespace sipred {

namespace {

// FFTW plan creation is not thread safe and FFTW_ESTIMATE plans depend on
// buffer alignment, so plans are created once per (kind, size) on dedicated
// fftw_malloc'd scratch buffers and reused under a lock. fftw_execute_*
// new-array calls are thread safe as long as the arrays have the alignment
// the plan was created with, which fftw_malloc guarantees.
struct PlanSlot {
  fftw_plan plan = nullptr;
  std::mutex exec_mutex;  // plans also carry the scratch buffers
  double* real_buf = nullptr;
  fftw_complex* cplx_in = nullptr;
  fftw_complex* cplx_out = nullptr;
};

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  PlanSlot& get(int kind, size_t n) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto key = std::make_pair(kind, n);
    auto it = slots_.find(key);
    if (it != slots_.end()) return *it->second;
    auto slot = std::make_unique<PlanSlot>();
    switch (kind) {
      case kForward:
      case kInverse:
        slot->cplx_in = fftw_alloc_complex(n);
        slot->cplx_out = fftw_alloc_complex(n);
        slot->plan = fftw_plan_dft_1d(
            static_cast<int>(n), slot->cplx_in, slot->cplx_out,
            kind == kForward ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE);
        break;
      case kRealForward:
        slot->real_buf = fftw_alloc_real(n);
        slot->cplx_out = fftw_alloc_complex(n / 2 + 1);
        slot->plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), slot->real_buf,
                                          slot->cplx_out, FFTW_ESTIMATE);
        break;
      case kRealInverse:
        slot->cplx_in = fftw_alloc_complex(n / 2 + 1);
        slot->real_buf = fftw_alloc_real(n);
        slot->plan = fftw_plan_dft_c2r_1d(static_cast<int>(n), slot->cplx_in,
                                          slot->real_buf, FFTW_ESTIMATE);
        break;
    }
    if (!slot->plan) throw Error("fftw plan creation failed");
    auto& ref = *slot;
    slots_.emplace(key, std::move(slot));
    return ref;
  }

  enum Kind { kForward, kInverse, kRealForward, kRealInverse };

 private:
  std::mutex mutex_;
  std::map<std::pair<int, size_t>, std::unique_ptr<PlanSlot>> slots_;
};

}  // namespace

std::vector<std::complex<double>> fft(
    std::span<const std::complex<double>> x) {
  if (x.empty()) throw ValueError("fft: empty input");
  const size_t n = x.size();
  auto& slot = PlanCache::instance().get(PlanCache::kForward, n);
  std::lock_guard<std::mutex> lock(slot.exec_mutex);
  std::memcpy(slot.cplx_in, static_cast<const void*>(x.data()),
              n * sizeof(fftw_complex));
  fftw_execute(slot.plan);
  std::vector<std::complex<double>> out(n);
  std::memcpy(static_cast<void*>(out.data()), slot.cplx_out,
              n * sizeof(fftw_complex));
  return out;
}

std::vector<std::complex<double>> ifft(
    std::span<const std::complex<double>> x) {
  if (x.empty()) throw ValueError("ifft: empty input");
  const size_t n = x.size();
  auto& slot = PlanCache::instance().get(PlanCache::kInverse, n);
  std::lock_guard<std::mutex> lock(slot.exec_mutex);
  std::memcpy(slot.cplx_in, static_cast<const void*>(x.data()),
              n * sizeof(fftw_complex));
  fftw_execute(slot.plan);
  std::vector<std::complex<double>> out(n);
  std::memcpy(static_cast<void*>(out.data()), slot.cplx_out,
              n * sizeof(fftw_complex));
  const double scale = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= scale;
  return out;
}

std::vector<std::complex<double>> rfft(std::span<const double> x,
                                       size_t nfft) {
  if (nfft == 0) throw ValueError("rfft: nfft must be positive");
  auto& slot = PlanCache::instance().get(PlanCache::kRealForward, nfft);
  std::lock_guard<std::mutex> lock(slot.exec_mutex);
  const size_t ncopy = std::min(x.size(), nfft);
  if (ncopy > 0) std::memcpy(slot.real_buf, x.data(), ncopy * sizeof(double));
  if (ncopy < nfft) {
    std::memset(slot.real_buf + ncopy, 0, (nfft - ncopy) * sizeof(double));
  }
  fftw_execute(slot.plan);
  std::vector<std::complex<double>> out(nfft / 2 + 1);
  std::memcpy(static_cast<void*>(out.data()), slot.cplx_out,
              out.size() * sizeof(fftw_complex));
  return out;
}

std::vector<double> irfft(std::span<const std::complex<double>> spectrum,
                          size_t nfft) {
  if (spectrum.size() != nfft / 2 + 1) {
    throw ValueError("irfft: spectrum size does not match nfft");
  }
  auto& slot = PlanCache::instance().get(PlanCache::kRealInverse, nfft);
  std::lock_guard<std::mutex> lock(slot.exec_mutex);
  std::memcpy(slot.cplx_in, static_cast<const void*>(spectrum.data()),
              spectrum.size() * sizeof(fftw_complex));
  fftw_execute(slot.plan);
  std::vector<double> out(nfft);
  const double scale = 1.0 / static_cast<double>(nfft);
  for (size_t i = 0; i < nfft; ++i) out[i] = slot.real_buf[i] * scale;
  return out;
}

std::vector<double> hann_window(size_t length, bool periodic) {
  if (length == 0) throw ValueError("hann_window: zero length");
  std::vector<double> w(length);
  if (length == 1) {
    w[0] = 1.0;
    return w;
  }
  const double denom =
      periodic ? static_cast<double>(length) : static_cast<double>(length - 1);
  for (size_t n = 0; n < length; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(n) / denom);
  }
  return w;
}

}  // namespace sipred
