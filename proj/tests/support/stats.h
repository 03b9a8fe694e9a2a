#ifndef SIPRED_TESTS_SUPPORT_STATS_H_
#define SIPRED_TESTS_SUPPORT_STATS_H_

#include <cstddef>
#include <vector>

// Test-side statistics used by the oracles; deliberately independent of the
// library under test.

namespace sipred::teststats {

double mean(const std::vector<double>& x);
double sample_variance(const std::vector<double>& x);

/// One-sided paired t-test p-value for H1: mean(a - b) > 0.
double paired_t_pvalue_greater(const std::vector<double>& a,
                               const std::vector<double>& b);

/// Student t upper-tail probability P(T_df > t).
double student_t_sf(double t, double df);

/// Kolmogorov-Smirnov p-value of `samples` against Uniform(lo, hi).
double ks_uniform_pvalue(std::vector<double> samples, double lo, double hi);

double pearson(const std::vector<double>& x, const std::vector<double>& y);
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Third-octave band dB deviations between a measured and a target magnitude
/// spectrum on an rfft bin grid, for band centers covering [fmin, fmax].
std::vector<double> third_octave_deviation_db(
    const std::vector<double>& measured, const std::vector<double>& target,
    double bin_hz, double fmin, double fmax);

}  // namespace sipred::teststats

#endif  // SIPRED_TESTS_SUPPORT_STATS_H_
