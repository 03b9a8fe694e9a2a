#include "sipred/pipeline.h"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sipred/toy.h"

namespace sipred {

namespace fs = std::filesystem;
using nlohmann::json;

PipelineFeatures pipeline_features_from_string(const std::string& name) {
  if (name == "mfsc23") return PipelineFeatures::kMfsc23;
  if (name == "amfb") return PipelineFeatures::kAmfb;
  throw ValueError("unknown feature kind: " + name +
                   " (expected mfsc23 or amfb)");
}

std::string to_string(PipelineFeatures kind) {
  return kind == PipelineFeatures::kMfsc23 ? "mfsc23" : "amfb";
}

FeatureMatrix pipeline_features(const AudioBuffer& buffer,
                                PipelineFeatures kind) {
  const Spectrogram spec = stft(buffer);
  if (kind == PipelineFeatures::kMfsc23) {
    return splice(mvn(mfsc(spec, 23)), 2);
  }
  return splice(mvn(amfb(mfsc(spec, 40))), 5);
}

namespace {

std::vector<WerCalibrationPair> load_calibration_pairs(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calibration pairs: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty pairs csv: " + path);
  std::vector<WerCalibrationPair> pairs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < 2) {
      throw FormatError("pairs csv needs m,wer columns: " + path);
    }
    pairs.push_back({std::stod(fields[0]), std::stod(fields[1])});
  }
  return pairs;
}

MAggregation aggregation_from_string(const std::string& name) {
  if (name == "mean") return MAggregation::kMean;
  if (name == "concat") return MAggregation::kConcat;
  throw ValueError("unknown m_aggregation: " + name);
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError("config parse error in " + path + ": " + e.what());
  }

  ExperimentConfig cfg;
  if (j.contains("corpus_dir")) {
    const std::string dir = j.at("corpus_dir").get<std::string>();
    if (!fs::is_directory(dir)) {
      throw ValueError("corpus_dir is not a directory: " + dir);
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".wav") {
        cfg.corpus.push_back(entry.path().string());
      }
    }
    std::sort(cfg.corpus.begin(), cfg.corpus.end());
  }
  if (j.contains("corpus")) {
    for (const auto& f : j.at("corpus")) {
      cfg.corpus.push_back(f.get<std::string>());
    }
  }

  for (const auto& m : j.value("maskers", json::array())) {
    MaskerConfig mc;
    mc.id = m.at("id").get<std::string>();
    mc.spec.kind = masker_kind_from_string(m.at("kind").get<std::string>());
    mc.gender = m.value("gender", "");
    mc.path = m.value("path", "");
    mc.spec.sam_rate_hz = m.value("sam_rate_hz", 8.0);
    mc.spec.sam_depth = m.value("sam_depth", 1.0);
    mc.spec.afs_channels = m.value("afs_channels", 32);
    mc.spec.afs_group = m.value("afs_group", 4);
    mc.spec.vocoder_bands = m.value("vocoder_bands", 12);
    cfg.maskers.push_back(std::move(mc));
  }

  cfg.masker_duration_s = j.value("masker_duration_s", 60.0);
  cfg.snr_min_db = j.value("snr_min_db", -30.0);
  cfg.snr_max_db = j.value("snr_max_db", 20.0);
  cfg.n_snr_points = j.value("n_snr_points", 400);
  cfg.sentences_per_snr = j.value("sentences_per_snr", 8);
  cfg.seed = j.value("seed", 1ULL);
  cfg.features = pipeline_features_from_string(j.value("features", "mfsc23"));
  cfg.classifier_path = j.value("classifier", "");
  cfg.import_dir = j.value("import_dir", "");
  cfg.m_aggregation =
      aggregation_from_string(j.value("m_aggregation", "mean"));
  cfg.out_dir = j.value("out_dir", "results");
  cfg.jobs = j.value("jobs", 1);

  if (j.contains("wer_map")) {
    const auto& wm = j.at("wer_map");
    if (wm.contains("pairs_csv")) {
      cfg.wer_map =
          calibrate_wer_map(load_calibration_pairs(wm.at("pairs_csv")));
    } else {
      cfg.wer_map.initial_wer = wm.value("initial_wer", 289.93);
      cfg.wer_map.decay_rate = wm.value("decay_rate", 0.213);
    }
  }

  if (!(cfg.snr_min_db < cfg.snr_max_db)) {
    throw ValueError("config: snr_min_db must be below snr_max_db");
  }
  if (cfg.n_snr_points < 1 || cfg.sentences_per_snr < 1) {
    throw ValueError("config: n_snr_points and sentences_per_snr must be >= 1");
  }
  return cfg;
}

Manifest build_manifest(const ExperimentConfig& config) {
  if (config.corpus.empty()) throw ValueError("build_manifest: empty corpus");
  if (config.maskers.empty()) {
    throw ValueError("build_manifest: no maskers configured");
  }
  const size_t masker_len = static_cast<size_t>(
      std::llround(config.masker_duration_s * kSampleRate));

  // Lengths are needed for the offsets; read each file once.
  std::map<std::string, size_t> length_of;
  for (const auto& path : config.corpus) {
    if (!length_of.count(path)) {
      length_of[path] = read_wav(path).samples.size();
    }
  }

  Rng root(config.seed);
  Manifest manifest;
  for (const auto& masker : config.maskers) {
    Rng snr_rng = root.substream("snr-" + masker.id);
    Rng sentence_rng = root.substream("sentence-" + masker.id);
    Rng seed_rng = root.substream("rowseed-" + masker.id);
    size_t row_index = 0;
    for (int i = 0; i < config.n_snr_points; ++i) {
      const double snr = snr_rng.uniform(config.snr_min_db, config.snr_max_db);
      for (int s = 0; s < config.sentences_per_snr; ++s) {
        const size_t pick = static_cast<size_t>(sentence_rng.uniform_int(
            0, static_cast<int64_t>(config.corpus.size()) - 1));
        ManifestRow row;
        row.speech_path = config.corpus[pick];
        row.masker_id = masker.id;
        row.snr_db = snr;
        row.seed = seed_rng.next_u64();
        const size_t speech_len = length_of.at(row.speech_path);
        if (speech_len > masker_len) {
          throw ValueError("build_manifest: sentence " + row.speech_path +
                           " is longer than the masker");
        }
        // Same draw select_noise_segment makes from this seed.
        row.noise_offset = static_cast<size_t>(Rng(row.seed).uniform_int(
            0, static_cast<int64_t>(masker_len - speech_len)));
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "_r%05zu", row_index++);
        row.utt_id = masker.id + idbuf;
        manifest.rows.push_back(std::move(row));
      }
    }
  }
  return manifest;
}

void save_manifest(const Manifest& manifest, const std::string& path) {
  std::ostringstream out;
  out << "utt_id,speech_path,masker_id,noise_offset,snr_db,seed\n";
  for (const auto& r : manifest.rows) {
    out << r.utt_id << ',' << r.speech_path << ',' << r.masker_id << ','
        << r.noise_offset << ',' << format_double(r.snr_db) << ',' << r.seed
        << '\n';
  }
  write_text_file(path, out.str());
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty manifest: " + path);
  Manifest manifest;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) {
      throw FormatError("manifest line " + std::to_string(lineno) +
                        ": expected 6 fields");
    }
    ManifestRow row;
    row.utt_id = f[0];
    row.speech_path = f[1];
    row.masker_id = f[2];
    row.noise_offset = std::stoull(f[3]);
    row.snr_db = std::stod(f[4]);
    row.seed = std::stoull(f[5]);
    manifest.rows.push_back(std::move(row));
  }
  return manifest;
}

Posteriorgram ClassifierProvider::posteriors(const ManifestRow& /*row*/,
                                             const AudioBuffer& mixture) {
  return model_.predict(pipeline_features(mixture, features_));
}

Posteriorgram ImportProvider::posteriors(const ManifestRow& row,
                                         const AudioBuffer& /*mixture*/) {
  return load_posteriorgram(
      (fs::path(directory_) / (row.utt_id + ".pstg")).string());
}

namespace {

void parallel_for(size_t n, int jobs,
                  const std::function<void(size_t)>& body) {
  const int workers =
      std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        body(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

std::string sanitize_for_csv(std::string text) {
  for (auto& c : text) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return text;
}

struct BinPoint {
  double snr_sum = 0.0;
  double m_sum = 0.0;
  size_t count = 0;
  std::vector<const Posteriorgram*> posts;  // concat mode only
};

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& config,
                            const Manifest& manifest,
                            PosteriorProvider& provider) {
  if (manifest.rows.empty()) throw ValueError("run_pipeline: empty manifest");
  if (config.maskers.empty()) {
    throw ValueError("run_pipeline: no maskers configured");
  }

  // Speech cache; rows share immutable buffers.
  std::map<std::string, AudioBuffer> speech_cache;
  const auto cached_wav = [&speech_cache](const std::string& path)
      -> const AudioBuffer& {
    auto it = speech_cache.find(path);
    if (it == speech_cache.end()) {
      it = speech_cache.emplace(path, read_wav(path)).first;
    }
    return it->second;
  };
  for (const auto& row : manifest.rows) cached_wav(row.speech_path);

  // Reference signal for masker synthesis: the concatenated corpus.
  AudioBuffer reference;
  reference.sample_rate = kSampleRate;
  for (const auto& path : config.corpus) {
    const auto& buf = cached_wav(path);
    reference.samples.insert(reference.samples.end(), buf.samples.begin(),
                             buf.samples.end());
  }

  Rng root(config.seed);
  std::map<std::string, AudioBuffer> masker_waves;
  for (const auto& mc : config.maskers) {
    MaskerSpec spec = mc.spec;
    spec.seed = root.substream("masker-" + mc.id).next_u64();
    const AudioBuffer& ref = mc.path.empty() ? reference : cached_wav(mc.path);
    if (ref.samples.empty()) {
      throw ValueError("run_pipeline: no reference speech for masker " +
                       mc.id);
    }
    masker_waves[mc.id] = synthesize_masker(spec, ref, config.masker_duration_s);
  }

  const size_t n_rows = manifest.rows.size();
  PipelineResult result;
  result.rows.resize(n_rows);
  std::vector<Posteriorgram> row_posts;
  const bool keep_posts = config.m_aggregation == MAggregation::kConcat;
  if (keep_posts) row_posts.resize(n_rows);

  parallel_for(n_rows, config.jobs, [&](size_t i) {
    const ManifestRow& row = manifest.rows[i];
    RowResult& rr = result.rows[i];
    rr.utt_id = row.utt_id;
    rr.masker_id = row.masker_id;
    rr.snr_db = row.snr_db;
    try {
      const auto& speech = speech_cache.at(row.speech_path);
      const auto masker_it = masker_waves.find(row.masker_id);
      if (masker_it == masker_waves.end()) {
        throw ValueError("manifest row references unknown masker " +
                         row.masker_id);
      }
      const AudioBuffer& masker = masker_it->second;
      const size_t len = speech.samples.size();
      if (row.noise_offset + len > masker.samples.size()) {
        throw ValueError("noise offset overruns masker");
      }
      AudioBuffer segment;
      segment.sample_rate = masker.sample_rate;
      segment.samples.assign(
          masker.samples.begin() + row.noise_offset,
          masker.samples.begin() + row.noise_offset + len);
      const MixResult mix = mix_at_snr(speech, segment, row.snr_db);
      Posteriorgram post = provider.posteriors(row, mix.mixture);
      rr.m_scalar = mtd_profile(post).scalar;
      rr.wer = wer_from_m(rr.m_scalar, config.wer_map);
      rr.accuracy = 1.0 - rr.wer / 100.0;
      rr.ok = true;
      if (keep_posts) row_posts[i] = std::move(post);
    } catch (const std::exception& e) {
      rr.ok = false;
      rr.error = e.what();
    }
  });

  for (const auto& rr : result.rows) {
    if (!rr.ok) ++result.n_skipped;
  }

  // Pool accuracy points per masker in 1 dB SNR bins.
  for (const auto& mc : config.maskers) {
    std::map<long, BinPoint> bins;
    for (size_t i = 0; i < n_rows; ++i) {
      const RowResult& rr = result.rows[i];
      if (!rr.ok || rr.masker_id != mc.id) continue;
      BinPoint& bin = bins[static_cast<long>(std::floor(rr.snr_db))];
      bin.snr_sum += rr.snr_db;
      bin.m_sum += rr.m_scalar;
      bin.count += 1;
      if (keep_posts) bin.posts.push_back(&row_posts[i]);
    }

    MaskerOutcome outcome;
    outcome.prediction.masker_id = mc.id;
    std::vector<PsychometricPoint> points;
    std::vector<std::array<double, 5>> point_rows;  // snr, n, m, wer, acc
    for (const auto& [key, bin] : bins) {
      double m_value = 0.0;
      if (config.m_aggregation == MAggregation::kMean) {
        m_value = bin.m_sum / static_cast<double>(bin.count);
      } else {
        Posteriorgram merged;
        for (const Posteriorgram* p : bin.posts) {
          if (merged.classes == 0) {
            merged = *p;
          } else {
            if (p->classes != merged.classes) {
              throw ValueError("concat aggregation: class count varies");
            }
            merged.probs.insert(merged.probs.end(), p->probs.begin(),
                                p->probs.end());
            merged.frames += p->frames;
          }
        }
        m_value = mtd_profile(merged).scalar;
      }
      const double wer = wer_from_m(m_value, config.wer_map);
      const double accuracy = 1.0 - wer / 100.0;
      const double snr = bin.snr_sum / static_cast<double>(bin.count);
      points.push_back(
          {snr, accuracy, static_cast<double>(bin.count)});
      point_rows.push_back(
          {snr, static_cast<double>(bin.count), m_value, wer, accuracy});
    }

    try {
      const PsychometricFit fit = fit_psychometric(points);
      outcome.prediction.fit = fit;
      outcome.prediction.srt50_db = srt(fit, 0.5);
      outcome.prediction.srt80_db = srt(fit, 0.8);
      outcome.prediction.n_points = points.size();
      outcome.fit_ok = true;
    } catch (const Error& e) {
      outcome.fit_ok = false;
      outcome.fit_error = e.what();
      outcome.prediction.n_points = points.size();
    }
    result.maskers.push_back(std::move(outcome));

    // Per-masker artifacts.
    if (!config.out_dir.empty()) {
      const fs::path dir = fs::path(config.out_dir) / mc.id;
      fs::create_directories(dir);

      std::ostringstream rows_csv;
      rows_csv << "utt_id,speech_path,masker_id,noise_offset,snr_db,seed,"
                  "m_scalar,wer_est,accuracy,status,error\n";
      for (size_t i = 0; i < n_rows; ++i) {
        const ManifestRow& row = manifest.rows[i];
        if (row.masker_id != mc.id) continue;
        const RowResult& rr = result.rows[i];
        rows_csv << row.utt_id << ',' << row.speech_path << ','
                 << row.masker_id << ',' << row.noise_offset << ','
                 << format_double(row.snr_db) << ',' << row.seed << ',';
        if (rr.ok) {
          rows_csv << format_double(rr.m_scalar) << ','
                   << format_double(rr.wer) << ','
                   << format_double(rr.accuracy) << ",ok,\n";
        } else {
          rows_csv << ",,,skipped," << sanitize_for_csv(rr.error) << '\n';
        }
      }
      write_text_file((dir / "manifest.csv").string(), rows_csv.str());

      std::ostringstream points_csv;
      points_csv << "snr_db,n_rows,m_value,wer_est,accuracy\n";
      for (const auto& pr : point_rows) {
        points_csv << format_double(pr[0]) << ','
                   << format_double(pr[1]) << ',' << format_double(pr[2])
                   << ',' << format_double(pr[3]) << ','
                   << format_double(pr[4]) << '\n';
      }
      write_text_file((dir / "points.csv").string(), points_csv.str());

      std::ostringstream fit_csv;
      fit_csv << "l50_db,slope_per_db,residual,srt50_db,srt80_db,n_points,"
                 "status,error\n";
      const MaskerOutcome& oc = result.maskers.back();
      if (oc.fit_ok) {
        fit_csv << format_double(oc.prediction.fit.midpoint_db) << ','
                << format_double(oc.prediction.fit.slope_per_db) << ','
                << format_double(oc.prediction.fit.residual) << ','
                << format_double(oc.prediction.srt50_db) << ','
                << format_double(oc.prediction.srt80_db) << ','
                << oc.prediction.n_points << ",ok,\n";
      } else {
        fit_csv << ",,,,," << oc.prediction.n_points << ",failed,"
                << sanitize_for_csv(oc.fit_error) << '\n';
      }
      write_text_file((dir / "fit.csv").string(), fit_csv.str());
    }
  }

  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    std::ostringstream summary;
    summary << "masker_id,gender,l50_db,slope_per_db,srt50_db,srt80_db,"
               "n_points,status\n";
    for (size_t m = 0; m < config.maskers.size(); ++m) {
      const MaskerOutcome& oc = result.maskers[m];
      summary << config.maskers[m].id << ',' << config.maskers[m].gender
              << ',';
      if (oc.fit_ok) {
        summary << format_double(oc.prediction.fit.midpoint_db) << ','
                << format_double(oc.prediction.fit.slope_per_db) << ','
                << format_double(oc.prediction.srt50_db) << ','
                << format_double(oc.prediction.srt80_db) << ','
                << oc.prediction.n_points << ",ok\n";
      } else {
        summary << ",,,," << oc.prediction.n_points << ",failed\n";
      }
    }
    write_text_file(
        (fs::path(config.out_dir) / "srt_summary.csv").string(),
        summary.str());
  }

  if (result.n_skipped * 10 > n_rows) {
    throw Error("run_pipeline: " + std::to_string(result.n_skipped) + " of " +
                std::to_string(n_rows) +
                " rows skipped (more than 10%); first error: " +
                [&]() -> std::string {
                  for (const auto& rr : result.rows) {
                    if (!rr.ok) return rr.error;
                  }
                  return "";
                }());
  }
  return result;
}

FrameClassifier train_classifier_on_corpus(const std::string& corpus_dir,
                                           PipelineFeatures features,
                                           size_t n_classes,
                                           const TrainOptions& options,
                                           const AugmentOptions& augment) {
  const fs::path dir(corpus_dir);
  std::ifstream index((dir / "corpus.csv").string());
  if (!index) {
    throw IoError("cannot open corpus index: " +
                  (dir / "corpus.csv").string());
  }
  std::string line;
  std::getline(index, line);  // header
  std::vector<AudioBuffer> clean;
  std::vector<FeatureMatrix> feats;
  std::vector<std::vector<int>> labels;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() < 3) throw FormatError("corpus.csv: expected >= 3 fields");
    const AudioBuffer audio = read_wav((dir / f[1]).string());
    feats.push_back(pipeline_features(audio, features));

    std::ifstream lab((dir / f[2]).string());
    if (!lab) throw IoError("cannot open label file: " + f[2]);
    std::vector<int> utt_labels;
    std::string lab_line;
    while (std::getline(lab, lab_line)) {
      if (!lab_line.empty()) utt_labels.push_back(std::stoi(lab_line));
    }
    labels.push_back(std::move(utt_labels));
    clean.push_back(std::move(audio));
  }
  if (feats.empty()) throw ValueError("corpus index lists no utterances");

  if (augment.noisy_copies > 0) {
    AudioBuffer all;
    all.sample_rate = kSampleRate;
    for (const auto& utt : clean) {
      all.samples.insert(all.samples.end(), utt.samples.begin(),
                         utt.samples.end());
    }
    const AudioBuffer ssn =
        gen_ssn(estimate_ltas(all), all.duration_s(), augment.seed);
    Rng rng = Rng(augment.seed).substream("train-augment");
    const size_t n_clean = clean.size();
    for (int copy = 0; copy < augment.noisy_copies; ++copy) {
      for (size_t u = 0; u < n_clean; ++u) {
        const double snr = rng.uniform(augment.snr_min_db, augment.snr_max_db);
        const MixResult mix =
            mix_random_segment(clean[u], ssn, snr, rng.next_u64());
        feats.push_back(pipeline_features(mix.mixture, features));
        labels.push_back(labels[u]);
      }
    }
  }
  return FrameClassifier::train(feats, labels, n_classes, options,
                                toy_class_names(static_cast<int>(n_classes)));
}

}  // namespace sipred
