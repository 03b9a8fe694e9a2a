#include "sipred/prediction.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sipred {

double wer_from_m(double m, const WerMap& map) {
  if (m < 0.0) throw ValueError("wer_from_m: m must be nonnegative");
  if (map.initial_wer <= 0.0 || map.decay_rate <= 0.0) {
    throw ValueError("wer_from_m: map parameters must be positive");
  }
  return std::min(map.initial_wer * std::exp(-map.decay_rate * m), map.cap);
}

WerMap calibrate_wer_map(const std::vector<WerCalibrationPair>& pairs) {
  std::vector<WerCalibrationPair> usable;
  for (const auto& p : pairs) {
    if (p.wer > 0.0) usable.push_back(p);
  }
  if (usable.size() < 3) {
    throw ValueError("calibrate_wer_map: need at least 3 pairs with WER > 0, "
                     "got " + std::to_string(usable.size()));
  }

  // Linear regression of log(WER) on M.
  double mx = 0.0, my = 0.0;
  for (const auto& p : usable) {
    mx += p.m;
    my += std::log(p.wer);
  }
  mx /= static_cast<double>(usable.size());
  my /= static_cast<double>(usable.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : usable) {
    const double dx = p.m - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(p.wer) - my);
  }
  if (sxx <= 0.0) {
    throw FitError("calibrate_wer_map: all M values equal (rank-deficient)");
  }
  const double slope = sxy / sxx;
  if (slope >= 0.0) {
    throw FitError("calibrate_wer_map: fitted mapping does not decay "
                   "(slope " + format_double(slope) + ")");
  }
  WerMap map;
  map.decay_rate = -slope;
  map.initial_wer = std::exp(my - slope * mx);
  return map;
}

double psychometric(double snr_db, const PsychometricFit& fit) {
  return 1.0 /
         (1.0 + std::exp(4.0 * fit.slope_per_db * (fit.midpoint_db - snr_db)));
}

namespace {

constexpr double kMidpointGridLo = -35.0;
constexpr double kMidpointGridHi = 25.0;
constexpr double kSlopeGridLo = 0.01;
constexpr double kSlopeGridHi = 1.0;
constexpr double kSlopeMin = 1e-4;
constexpr double kSlopeMax = 100.0;

double fit_loss(const std::vector<PsychometricPoint>& points, double midpoint,
                double slope, FitMethod method) {
  double loss = 0.0;
  for (const auto& pt : points) {
    const double f =
        1.0 / (1.0 + std::exp(4.0 * slope * (midpoint - pt.snr_db)));
    if (method == FitMethod::kLeastSquares) {
      const double r = f - pt.accuracy;
      loss += r * r;
    } else {
      const double fc = std::clamp(f, 1e-9, 1.0 - 1e-9);
      loss -= pt.n_obs * (pt.accuracy * std::log(fc) +
                          (1.0 - pt.accuracy) * std::log(1.0 - fc));
    }
  }
  return loss;
}

}  // namespace

PsychometricFit fit_psychometric(const std::vector<PsychometricPoint>& points,
                                 FitMethod method) {
  if (points.size() < 5) {
    throw ValueError("fit_psychometric: need at least 5 points, got " +
                     std::to_string(points.size()));
  }
  double lo = 1.0, hi = 0.0;
  for (const auto& pt : points) {
    if (pt.accuracy < 0.0 || pt.accuracy > 1.0) {
      throw ValueError("fit_psychometric: accuracy outside [0, 1]");
    }
    lo = std::min(lo, pt.accuracy);
    hi = std::max(hi, pt.accuracy);
  }
  if (!(lo < 0.5 && hi > 0.5)) {
    throw FitError("fit_psychometric: unidentifiable, points do not span "
                   "both sides of 0.5 (min " + format_double(lo) + ", max " +
                   format_double(hi) + ")");
  }

  // Coarse grid.
  double best_mid = 0.0, best_slope = 0.1;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 120; ++i) {
    const double mid =
        kMidpointGridLo + (kMidpointGridHi - kMidpointGridLo) * i / 120.0;
    for (int j = 0; j <= 40; ++j) {
      const double slope =
          kSlopeGridLo * std::pow(kSlopeGridHi / kSlopeGridLo, j / 40.0);
      const double loss = fit_loss(points, mid, slope, method);
      if (loss < best) {
        best = loss;
        best_mid = mid;
        best_slope = slope;
      }
    }
  }

  // Coordinate descent with shrinking steps down to 1e-6 dB resolution.
  double step_mid = 0.5;
  double step_slope = best_slope * 0.5;
  while (step_mid > 1e-7) {
    bool moved = false;
    for (const double cand :
         {best_mid - step_mid, best_mid + step_mid}) {
      const double loss = fit_loss(points, cand, best_slope, method);
      if (loss < best) {
        best = loss;
        best_mid = cand;
        moved = true;
      }
    }
    for (const double cand :
         {std::max(best_slope - step_slope, kSlopeMin),
          std::min(best_slope + step_slope, kSlopeMax)}) {
      const double loss = fit_loss(points, best_mid, cand, method);
      if (loss < best) {
        best = loss;
        best_slope = cand;
        moved = true;
      }
    }
    if (!moved) {
      step_mid *= 0.5;
      step_slope *= 0.5;
    }
  }

  PsychometricFit fit;
  fit.midpoint_db = best_mid;
  fit.slope_per_db = best_slope;
  fit.residual = best;
  return fit;
}

double srt(const PsychometricFit& fit, double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ValueError("srt: target fraction must lie strictly in (0, 1)");
  }
  if (fit.slope_per_db <= 0.0) {
    throw ValueError("srt: fit slope must be positive");
  }
  return fit.midpoint_db + std::log(p / (1.0 - p)) / (4.0 * fit.slope_per_db);
}

double rmse_srt(const std::vector<double>& predicted,
                const std::vector<double>& observed) {
  if (predicted.size() != observed.size()) {
    throw ValueError("rmse_srt: length mismatch");
  }
  if (predicted.empty()) throw ValueError("rmse_srt: empty input");
  double acc = 0.0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - observed[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(predicted.size()));
}

}  // namespace sipred
