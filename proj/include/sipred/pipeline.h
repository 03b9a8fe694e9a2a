#ifndef SIPRED_PIPELINE_H_
#define SIPRED_PIPELINE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "sipred/audio.h"
#include "sipred/maskers.h"
#include "sipred/mmeasure.h"
#include "sipred/posteriorgram.h"
#include "sipred/prediction.h"

namespace sipred {

enum class PipelineFeatures { kMfsc23, kAmfb };

PipelineFeatures pipeline_features_from_string(const std::string& name);
std::string to_string(PipelineFeatures kind);

/// The feature path fed to the frame classifier. MFSC-23 is normalized and
/// spliced +-2 frames (115 dims, the low-footprint setup); AMFB goes through
/// the 40-channel MFSC, the modulation filterbank, normalization and +-5
/// splicing (3960 dims).
FeatureMatrix pipeline_features(const AudioBuffer& buffer,
                                PipelineFeatures kind);

struct MaskerConfig {
  std::string id;
  MaskerSpec spec;
  std::string gender;  // optional tag carried through to the summary
  std::string path;    // reference/raw recording; empty = corpus reference
};

/// How per-sentence M values within one SNR group become one accuracy point:
/// average the per-sentence M values, or compute one M over the
/// concatenated posteriorgrams.
enum class MAggregation { kMean, kConcat };

struct ExperimentConfig {
  std::vector<std::string> corpus;  // wav paths, pipeline entry points
  std::vector<MaskerConfig> maskers;
  double masker_duration_s = 60.0;
  double snr_min_db = -30.0;
  double snr_max_db = 20.0;
  int n_snr_points = 400;
  int sentences_per_snr = 8;
  uint64_t seed = 1;
  PipelineFeatures features = PipelineFeatures::kMfsc23;
  std::string classifier_path;  // frame classifier model
  std::string import_dir;       // or: pre-computed posteriorgrams per row
  WerMap wer_map;
  MAggregation m_aggregation = MAggregation::kMean;
  std::string out_dir = "results";
  int jobs = 1;
};

/// Reads the JSON experiment description; resolves a corpus directory to its
/// sorted wav list and a wer_map pairs_csv to calibrated constants.
ExperimentConfig load_experiment_config(const std::string& path);

struct ManifestRow {
  std::string utt_id;
  std::string speech_path;
  std::string masker_id;
  size_t noise_offset = 0;
  double snr_db = 0.0;
  uint64_t seed = 0;  // row-local randomness
};

struct Manifest {
  std::vector<ManifestRow> rows;
};

/// Deterministic test-set manifest: per masker, n_snr_points seeded-uniform
/// SNRs in [snr_min, snr_max], each paired with sentences_per_snr seeded
/// sentence draws and noise offsets.
Manifest build_manifest(const ExperimentConfig& config);

void save_manifest(const Manifest& manifest, const std::string& path);
Manifest load_manifest(const std::string& path);

/// Source of one posteriorgram per manifest row.
class PosteriorProvider {
 public:
  virtual ~PosteriorProvider() = default;
  virtual Posteriorgram posteriors(const ManifestRow& row,
                                   const AudioBuffer& mixture) = 0;
};

/// Runs the frame classifier on features extracted from the mixture.
class ClassifierProvider : public PosteriorProvider {
 public:
  ClassifierProvider(FrameClassifier model, PipelineFeatures features)
      : model_(std::move(model)), features_(features) {}
  Posteriorgram posteriors(const ManifestRow& row,
                           const AudioBuffer& mixture) override;

 private:
  FrameClassifier model_;
  PipelineFeatures features_;
};

/// Loads <dir>/<utt_id>.pstg written by an external acoustic model.
class ImportProvider : public PosteriorProvider {
 public:
  explicit ImportProvider(std::string directory)
      : directory_(std::move(directory)) {}
  Posteriorgram posteriors(const ManifestRow& row,
                           const AudioBuffer& mixture) override;

 private:
  std::string directory_;
};

struct RowResult {
  std::string utt_id;
  std::string masker_id;
  double snr_db = 0.0;
  double m_scalar = 0.0;
  double wer = 0.0;
  double accuracy = 0.0;
  bool ok = false;
  std::string error;
};

struct MaskerOutcome {
  SrtPrediction prediction;
  bool fit_ok = false;
  std::string fit_error;
};

struct PipelineResult {
  std::vector<MaskerOutcome> maskers;
  std::vector<RowResult> rows;
  size_t n_skipped = 0;

  bool all_fits_ok() const {
    for (const auto& m : maskers) {
      if (!m.fit_ok) return false;
    }
    return !maskers.empty();
  }
};

/// Executes the manifest end to end: mix, posteriors, M, WER, accuracy,
/// per-SNR-bin pooling (1 dB bins), psychometric fit and SRT extraction per
/// masker. Writes manifest.csv, points.csv and fit.csv into one directory
/// per masker under config.out_dir plus a top-level srt_summary.csv. Rows
/// whose provider fails are recorded and skipped; more than 10% skipped rows
/// aborts. Rows are processed by a worker pool but collected by row index,
/// so artifacts do not depend on scheduling.
PipelineResult run_pipeline(const ExperimentConfig& config,
                            const Manifest& manifest,
                            PosteriorProvider& provider);

/// Multi-condition training data: each utterance additionally appears
/// `noisy_copies` times mixed with speech-shaped noise (synthesized from the
/// corpus itself) at seeded-uniform SNRs. Frame labels carry over from the
/// clean signal. Zero copies trains on clean features only.
struct AugmentOptions {
  int noisy_copies = 0;
  double snr_min_db = -10.0;
  double snr_max_db = 20.0;
  uint64_t seed = 1;
};

/// Trains a frame classifier on a labeled corpus directory (wav + .lab
/// files listed in corpus.csv), optionally with noise augmentation.
FrameClassifier train_classifier_on_corpus(
    const std::string& corpus_dir, PipelineFeatures features,
    size_t n_classes, const TrainOptions& options = {},
    const AugmentOptions& augment = {});

}  // namespace sipred

#endif  // SIPRED_PIPELINE_H_
