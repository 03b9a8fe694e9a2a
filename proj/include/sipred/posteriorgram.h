#ifndef SIPRED_POSTERIORGRAM_H_
#define SIPRED_POSTERIORGRAM_H_

#include <cstdint>
#include <string>
#include <vector>

#include "sipred/features.h"

namespace sipred {

/// Per-frame phone probabilities: a row-stochastic frames x classes matrix.
struct Posteriorgram {
  size_t frames = 0;
  size_t classes = 0;
  std::vector<double> probs;  // row-major
  double frame_shift = 0.010;
  std::vector<std::string> labels;  // size classes; entries may be empty

  double& at(size_t t, size_t k) { return probs[t * classes + k]; }
  const double& at(size_t t, size_t k) const { return probs[t * classes + k]; }

  /// Throws ValueError naming the first offending row if any entry is
  /// negative/non-finite or a row sum strays from 1 beyond `tolerance`.
  void validate(double tolerance = 1e-4) const;
};

/// Maps every triphone-state index to the index of its central monophone.
struct TriphoneMap {
  std::vector<uint32_t> mapping;  // size = number of triphone states
  size_t n_monophones = 0;

  size_t n_triphones() const { return mapping.size(); }
  /// Every entry must land in [0, n_monophones) and every monophone must be
  /// hit at least once.
  void validate() const;
};

/// Sums the activations of all triphone states sharing a central phone,
/// which preserves the distribution row by row.
Posteriorgram group_to_monophones(const Posteriorgram& triphone,
                                  const TriphoneMap& map,
                                  std::vector<std::string> mono_labels = {});

// Binary matrix container shared by posteriorgrams and feature matrices:
//   magic "PSTG", u16 version = 1, u32 frames, u32 columns, f32 frame_shift,
//   `columns` length-prefixed (u32) UTF-8 labels, then frames*columns
//   little-endian f32 values, row-major.
struct MatrixFile {
  size_t frames = 0;
  size_t columns = 0;
  float frame_shift = 0.01f;
  std::vector<std::string> labels;
  std::vector<float> values;  // row-major
};

void save_matrix_file(const MatrixFile& matrix, const std::string& path);
MatrixFile load_matrix_file(const std::string& path);

/// Saves probabilities as f32 in the shared container.
void save_posteriorgram(const Posteriorgram& posteriorgram,
                        const std::string& path);
/// Loads and validates row-stochasticity (tolerance 1e-4).
Posteriorgram load_posteriorgram(const std::string& path);

/// Text interop with external ASR stacks: header row of class labels, then
/// one row of probabilities per frame.
Posteriorgram load_posteriorgram_csv(const std::string& path,
                                     double frame_shift = 0.010);
void save_posteriorgram_csv(const Posteriorgram& posteriorgram,
                            const std::string& path);

void save_feature_matrix(const FeatureMatrix& features,
                         const std::string& path);
FeatureMatrix load_feature_matrix(const std::string& path);

struct TrainOptions {
  int max_epochs = 300;
  double learning_rate = 1.0;
  double l2 = 1e-4;
  double rel_tolerance = 1e-5;  // stop when loss improves less than this
  uint64_t seed = 0;
};

/// Multinomial logistic frame classifier: the desk-scale stand-in for a
/// DNN/TDNN acoustic model. Deterministic per seed; convex objective, plain
/// gradient descent with backtracking on the step size.
class FrameClassifier {
 public:
  FrameClassifier() = default;
  /// Zero-weight classifier (uniform output), mostly useful in tests.
  FrameClassifier(size_t feature_dim, size_t n_classes,
                  std::vector<std::string> labels = {});

  static FrameClassifier train(const std::vector<FeatureMatrix>& features,
                               const std::vector<std::vector<int>>& labels,
                               size_t n_classes,
                               const TrainOptions& options = {},
                               std::vector<std::string> class_names = {});

  Posteriorgram predict(const FeatureMatrix& features) const;

  size_t feature_dim() const { return dim_; }
  size_t n_classes() const { return classes_; }
  const std::vector<std::string>& class_names() const { return labels_; }
  double final_loss() const { return final_loss_; }

  void save(const std::string& path) const;
  static FrameClassifier load(const std::string& path);

 private:
  size_t dim_ = 0;
  size_t classes_ = 0;
  std::vector<double> weights_;  // classes x (dim + 1), bias last
  std::vector<std::string> labels_;
  double final_loss_ = 0.0;
};

Posteriorgram predict_posteriors(const FrameClassifier& model,
                                 const FeatureMatrix& features);

}  // namespace sipred

#endif  // SIPRED_POSTERIORGRAM_H_
