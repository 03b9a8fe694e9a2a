#ifndef SIPRED_PREDICTION_H_
#define SIPRED_PREDICTION_H_

#include <string>
#include <vector>

#include "sipred/common.h"

namespace sipred {

/// Exponential mapping from the scalar M value to a word error rate in
/// percent: WER(m) = min(initial_wer * exp(-decay_rate * m), cap). The decay
/// rate is stored as a positive magnitude; larger M (cleaner posteriorgrams)
/// means lower WER. The defaults are the published calibration constants.
struct WerMap {
  double initial_wer = 289.93;  // percent, value at m = 0 before capping
  double decay_rate = 0.213;    // per M unit
  double cap = 100.0;
};

double wer_from_m(double m, const WerMap& map);

struct WerCalibrationPair {
  double m = 0.0;
  double wer = 0.0;  // percent; values above 100 are legitimate pre-cap
};

/// Least-squares fit of log(WER) = log(initial) - decay * M over pairs with
/// WER > 0. Needs at least three pairs and more than one distinct M.
WerMap calibrate_wer_map(const std::vector<WerCalibrationPair>& pairs);

/// Logistic intelligibility function f(x) = 1 / (1 + exp(4 s (L50 - x))).
struct PsychometricFit {
  double midpoint_db = 0.0;   // L50, the 50% point
  double slope_per_db = 0.0;  // s, constrained positive
  double residual = 0.0;      // final loss at the optimum
};

struct PsychometricPoint {
  double snr_db = 0.0;
  double accuracy = 0.0;  // word recognition fraction in [0, 1]
  double n_obs = 1.0;     // observations behind the point (used by MLE)
};

enum class FitMethod { kLeastSquares, kBinomialMle };

double psychometric(double snr_db, const PsychometricFit& fit);

/// Fits (L50, s) by a coarse grid over L50 in [-35, 25] dB and s in
/// [0.01, 1], then coordinate-descent refinement to 1e-6 dB resolution.
/// Needs at least five points with accuracies on both sides of 0.5; fully
/// saturated inputs are unidentifiable.
PsychometricFit fit_psychometric(const std::vector<PsychometricPoint>& points,
                                 FitMethod method = FitMethod::kLeastSquares);

/// Inverse of the psychometric function: the SNR at which the fitted curve
/// crosses `p`, i.e. L50 + ln(p / (1 - p)) / (4 s).
double srt(const PsychometricFit& fit, double p);

struct SrtPrediction {
  std::string masker_id;
  double srt50_db = 0.0;
  double srt80_db = 0.0;
  PsychometricFit fit;
  size_t n_points = 0;
};

/// sqrt(mean((predicted - observed)^2)) over per-masker SRTs.
double rmse_srt(const std::vector<double>& predicted,
                const std::vector<double>& observed);

}  // namespace sipred

#endif  // SIPRED_PREDICTION_H_
