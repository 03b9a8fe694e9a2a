#ifndef SIPRED_DSP_H_
#define SIPRED_DSP_H_

#include <complex>
#include <span>
#include <vector>

namespace sipred {

// Thin FFT layer shared by the feature extractor and the masker generators.
// Transforms accept arbitrary lengths. Plan construction is serialized and
// always uses the same planning mode, so repeated runs produce bit-identical
// results.

/// Forward complex DFT, unnormalized.
std::vector<std::complex<double>> fft(std::span<const std::complex<double>> x);

/// Inverse complex DFT, scaled by 1/N.
std::vector<std::complex<double>> ifft(std::span<const std::complex<double>> x);

/// Forward DFT of a real signal zero-padded/truncated to nfft samples;
/// returns the nfft/2 + 1 nonredundant bins.
std::vector<std::complex<double>> rfft(std::span<const double> x, size_t nfft);

/// Inverse of rfft; returns nfft real samples.
std::vector<double> irfft(std::span<const std::complex<double>> spectrum,
                          size_t nfft);

/// Hann window. Periodic windows (0.5 - 0.5 cos(2 pi n / N)) sum to one at
/// half-window overlap, which the overlap-add resynthesis relies on.
std::vector<double> hann_window(size_t length, bool periodic = true);

}  // namespace sipred

#endif  // SIPRED_DSP_H_
