#ifndef SIPRED_MMEASURE_H_
#define SIPRED_MMEASURE_H_

#include <span>
#include <vector>

#include "sipred/posteriorgram.h"

namespace sipred {

// Mean temporal distance over phoneme posteriorgrams. The measure averages
// the symmetric Kullback-Leibler divergence between posterior vectors a lag
// apart; noisy conditions smear phoneme representations together and pull the
// value down, which is what makes it usable as a reference-free performance
// measure.

/// Probabilities are clamped to at least this and renormalized before any
/// divergence is evaluated, so hard zeros from a softmax cannot produce
/// infinities.
inline constexpr double kDefaultProbFloor = 1e-7;

/// Symmetric KL divergence sum_k p log(p/q) + sum_k q log(q/p), evaluated
/// after flooring and renormalization. Zero iff p == q post-flooring.
double sym_kl(std::span<const double> p, std::span<const double> q,
              double floor = kDefaultProbFloor);

/// M(dt) = 1/(T - dn) * sum_{t = dn}^{T-1} D(p[t - dn], p[t]) with
/// dn = round(dt / frame_shift) frames. Requires dn >= 1 and T > dn.
double mtd(const Posteriorgram& posteriorgram, double delta_t_s,
           double floor = kDefaultProbFloor);

/// The 16-lag profile, 50 ms to 800 ms in 50 ms steps, plus its mean. The
/// scalar reduction to one M value is the arithmetic mean of the 16 lags;
/// the full profile is always kept alongside it.
struct MtdProfile {
  std::vector<double> delta_ts;  // seconds
  std::vector<double> values;    // M(delta_t), same order
  double scalar = 0.0;           // mean of values
};

MtdProfile mtd_profile(const Posteriorgram& posteriorgram,
                       double floor = kDefaultProbFloor);

}  // namespace sipred

#endif  // SIPRED_MMEASURE_H_
