#include "sipred/mmeasure.h"

#include <cmath>

namespace sipred {

namespace {

void floor_and_renormalize(std::span<const double> in, double floor,
                           std::vector<double>& out) {
  out.resize(in.size());
  double sum = 0.0;
  for (size_t k = 0; k < in.size(); ++k) {
    out[k] = std::max(in[k], floor);
    sum += out[k];
  }
  for (auto& v : out) v /= sum;
}

// Both arguments already floored and renormalized.
double sym_kl_prepared(std::span<const double> p, std::span<const double> q) {
  double d = 0.0;
  for (size_t k = 0; k < p.size(); ++k) {
    d += (p[k] - q[k]) * std::log(p[k] / q[k]);
  }
  return d;
}

}  // namespace

double sym_kl(std::span<const double> p, std::span<const double> q,
              double floor) {
  if (p.size() != q.size()) {
    throw ValueError("sym_kl: length mismatch (" + std::to_string(p.size()) +
                     " vs " + std::to_string(q.size()) + ")");
  }
  if (p.empty()) throw ValueError("sym_kl: empty vectors");
  if (!(floor > 0.0)) throw ValueError("sym_kl: floor must be positive");
  std::vector<double> pf, qf;
  floor_and_renormalize(p, floor, pf);
  floor_and_renormalize(q, floor, qf);
  return sym_kl_prepared(pf, qf);
}

double mtd(const Posteriorgram& posteriorgram, double delta_t_s,
           double floor) {
  if (!(floor > 0.0)) throw ValueError("mtd: floor must be positive");
  const size_t frames = posteriorgram.frames;
  const long lag = std::lround(delta_t_s / posteriorgram.frame_shift);
  if (lag < 1) {
    throw ValueError("mtd: delta_t " + format_double(delta_t_s) +
                     " s is below one frame shift");
  }
  if (frames <= static_cast<size_t>(lag)) {
    throw ValueError("mtd: utterance of " + std::to_string(frames) +
                     " frames is too short for a lag of " +
                     std::to_string(lag) + " frames");
  }

  // Floor the whole posteriorgram once; flooring is per row, so this is
  // identical to flooring inside every pairwise divergence.
  const size_t classes = posteriorgram.classes;
  std::vector<double> floored(frames * classes);
  std::vector<double> row;
  for (size_t t = 0; t < frames; ++t) {
    floor_and_renormalize(
        std::span<const double>(posteriorgram.probs.data() + t * classes,
                                classes),
        floor, row);
    std::copy(row.begin(), row.end(), floored.begin() + t * classes);
  }

  double acc = 0.0;
  const size_t dn = static_cast<size_t>(lag);
  for (size_t t = dn; t < frames; ++t) {
    acc += sym_kl_prepared(
        std::span<const double>(floored.data() + (t - dn) * classes, classes),
        std::span<const double>(floored.data() + t * classes, classes));
  }
  return acc / static_cast<double>(frames - dn);
}

MtdProfile mtd_profile(const Posteriorgram& posteriorgram, double floor) {
  MtdProfile profile;
  for (int i = 1; i <= 16; ++i) profile.delta_ts.push_back(0.05 * i);

  const double max_delta = profile.delta_ts.back();
  const long max_lag = std::lround(max_delta / posteriorgram.frame_shift);
  if (posteriorgram.frames <= static_cast<size_t>(max_lag)) {
    const double covered =
        (static_cast<double>(posteriorgram.frames) - 1.0) *
        posteriorgram.frame_shift;
    int supported = 0;
    for (double dt : profile.delta_ts) {
      if (dt <= covered + 1e-12) ++supported;
    }
    throw ValueError(
        "mtd_profile: utterance of " + std::to_string(posteriorgram.frames) +
        " frames supports delta_t up to " +
        format_double(supported > 0 ? profile.delta_ts[supported - 1] : 0.0) +
        " s, need " + format_double(max_delta) + " s");
  }

  double sum = 0.0;
  for (double dt : profile.delta_ts) {
    const double m = mtd(posteriorgram, dt, floor);
    profile.values.push_back(m);
    sum += m;
  }
  profile.scalar = sum / static_cast<double>(profile.values.size());
  return profile;
}

}  // namespace sipred
