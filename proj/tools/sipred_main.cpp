// Command-line frontend for the intelligibility prediction toolkit.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "sipred/audio.h"
#include "sipred/features.h"
#include "sipred/maskers.h"
#include "sipred/mmeasure.h"
#include "sipred/pipeline.h"
#include "sipred/posteriorgram.h"
#include "sipred/prediction.h"
#include "sipred/toy.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sipred;

namespace {

WerMap load_wer_map_file(const std::string& path) {
  const json j = json::parse(read_text_file(path));
  WerMap map;
  map.initial_wer = j.at("initial_wer").get<double>();
  map.decay_rate = j.at("decay_rate").get<double>();
  return map;
}

void save_wer_map_file(const WerMap& map, const std::string& path) {
  json j;
  j["initial_wer"] = map.initial_wer;
  j["decay_rate"] = map.decay_rate;
  write_text_file(path, j.dump(2) + "\n");
}

int run_mix(const std::string& speech_path, const std::string& noise_path,
            double snr_db, uint64_t seed, const std::string& out,
            bool float_out) {
  const AudioBuffer speech = read_wav(speech_path);
  const AudioBuffer noise = read_wav(noise_path);
  const MixResult mix = mix_random_segment(speech, noise, snr_db, seed);
  write_wav(mix.mixture, out,
            float_out ? WavFormat::kFloat32 : WavFormat::kPcm16);
  json meta;
  meta["speech"] = speech_path;
  meta["noise"] = noise_path;
  meta["requested_snr_db"] = snr_db;
  meta["achieved_snr_db"] = mix.achieved_snr_db;
  meta["noise_gain"] = mix.noise_gain;
  meta["noise_offset"] = mix.noise_offset;
  meta["clip_gain"] = mix.clip_gain;
  meta["seed"] = seed;
  write_text_file(out + ".json", meta.dump(2) + "\n");
  std::cout << "mixed at " << format_double(mix.achieved_snr_db)
            << " dB (noise gain " << format_double(mix.noise_gain)
            << ", offset " << mix.noise_offset << ") -> " << out << "\n";
  return 0;
}

int run_masker(const std::string& kind, const std::string& ref_path,
               double duration_s, uint64_t seed, const std::string& out,
               const MaskerSpec& params) {
  MaskerSpec spec = params;
  spec.kind = masker_kind_from_string(kind);
  spec.seed = seed;
  const AudioBuffer reference = read_wav(ref_path);
  AudioBuffer masker = synthesize_masker(spec, reference, duration_s);

  // Leave headroom for the WAV container; mixing rescales anyway.
  double peak = 0.0;
  for (double v : masker.samples) peak = std::max(peak, std::abs(v));
  double gain = 1.0;
  if (peak > 0.99) {
    gain = 0.99 / peak;
    for (auto& v : masker.samples) v *= gain;
  }
  write_wav(masker, out, WavFormat::kFloat32);

  json meta;
  meta["kind"] = to_string(spec.kind);
  meta["ref_speech"] = ref_path;
  meta["duration_s"] = duration_s;
  meta["seed"] = seed;
  meta["normalization_gain"] = gain;
  if (spec.kind == MaskerKind::kSamSsn) {
    meta["sam_rate_hz"] = spec.sam_rate_hz;
    meta["sam_depth"] = spec.sam_depth;
  }
  if (spec.kind == MaskerKind::kAfsSsn) {
    meta["afs_channels"] = spec.afs_channels;
    meta["afs_group"] = spec.afs_group;
  }
  if (spec.kind == MaskerKind::kNoiseVocoded) {
    meta["vocoder_bands"] = spec.vocoder_bands;
  }
  write_text_file(out + ".json", meta.dump(2) + "\n");
  std::cout << "wrote " << to_string(spec.kind) << " masker ("
            << format_double(duration_s) << " s) -> " << out << "\n";
  return 0;
}

int run_features(const std::string& in, const std::string& kind,
                 const std::string& out) {
  const AudioBuffer audio = read_wav(in);
  const Spectrogram spec = stft(audio);
  FeatureMatrix features;
  if (kind == "mfsc23") {
    features = mfsc(spec, 23);
  } else if (kind == "mfsc40") {
    features = mfsc(spec, 40);
  } else if (kind == "amfb") {
    features = mvn(amfb(mfsc(spec, 40)));
  } else if (kind == "amfb-spliced") {
    features = splice(mvn(amfb(mfsc(spec, 40))), 5);
  } else {
    throw ValueError("unknown feature kind: " + kind);
  }
  save_feature_matrix(features, out);
  std::cout << "wrote " << features.frames << " x " << features.dims << " "
            << kind << " -> " << out << "\n";
  return 0;
}

int run_mmeasure(const std::string& in, const std::string& out,
                 double floor) {
  const Posteriorgram post = load_posteriorgram(in);
  const MtdProfile profile = mtd_profile(post, floor);
  std::ostringstream csv;
  csv << "delta_t_ms,m_value\n";
  for (size_t i = 0; i < profile.delta_ts.size(); ++i) {
    csv << format_double(profile.delta_ts[i] * 1000.0) << ','
        << format_double(profile.values[i]) << '\n';
  }
  csv << "scalar," << format_double(profile.scalar) << '\n';
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    write_text_file(out, csv.str());
    std::cout << "scalar M = " << format_double(profile.scalar) << " -> "
              << out << "\n";
  }
  return 0;
}

struct PredictRow {
  std::string masker_id;
  std::string pstg_path;
  double snr_db = 0.0;
};

int run_predict(const std::string& manifest_path,
                const std::string& wer_map_path, const std::string& out_dir,
                double floor) {
  const WerMap map = load_wer_map_file(wer_map_path);
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path);
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("empty manifest: " + manifest_path);
  }
  std::vector<PredictRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() < 3) {
      throw FormatError("predict manifest needs masker_id,pstg_path,snr_db");
    }
    rows.push_back({f[0], f[1], std::stod(f[2])});
  }
  if (rows.empty()) throw ValueError("predict manifest has no rows");

  fs::create_directories(out_dir);
  std::map<std::string, std::vector<std::array<double, 4>>> per_masker;
  std::vector<std::string> masker_order;
  for (const auto& row : rows) {
    const Posteriorgram post = load_posteriorgram(row.pstg_path);
    const double m = mtd_profile(post, floor).scalar;
    const double wer = wer_from_m(m, map);
    if (!per_masker.count(row.masker_id)) masker_order.push_back(row.masker_id);
    per_masker[row.masker_id].push_back(
        {row.snr_db, m, wer, 1.0 - wer / 100.0});
  }

  std::ostringstream summary;
  summary << "masker_id,l50_db,slope_per_db,srt50_db,srt80_db,n_points,status\n";
  bool all_ok = true;
  for (const auto& id : masker_order) {
    auto& data = per_masker[id];
    std::sort(data.begin(), data.end(),
              [](const auto& a, const auto& b) { return a[0] < b[0]; });
    std::ostringstream csv;
    csv << "snr_db,m_scalar,wer_est,accuracy\n";
    std::vector<PsychometricPoint> points;
    for (const auto& d : data) {
      csv << format_double(d[0]) << ',' << format_double(d[1]) << ','
          << format_double(d[2]) << ',' << format_double(d[3]) << '\n';
      points.push_back({d[0], d[3], 1.0});
    }
    write_text_file((fs::path(out_dir) / (id + ".csv")).string(), csv.str());
    try {
      const PsychometricFit fit = fit_psychometric(points);
      summary << id << ',' << format_double(fit.midpoint_db) << ','
              << format_double(fit.slope_per_db) << ','
              << format_double(srt(fit, 0.5)) << ','
              << format_double(srt(fit, 0.8)) << ',' << points.size()
              << ",ok\n";
    } catch (const Error& e) {
      summary << id << ",,,,," << points.size() << ",failed\n";
      std::cerr << "fit failed for " << id << ": " << e.what() << "\n";
      all_ok = false;
    }
  }
  write_text_file((fs::path(out_dir) / "fit_summary.csv").string(),
                  summary.str());
  std::cout << "wrote per-masker curves and fit_summary.csv -> " << out_dir
            << "\n";
  return all_ok ? 0 : 1;
}

struct SrtRecord {
  std::string gender;
  double srt_db = 0.0;
};

std::map<std::string, SrtRecord> load_srt_csv(const std::string& path,
                                              const std::string& value_col) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty csv: " + path);
  const auto header = split_csv_line(line);
  int id_col = -1, gender_col = -1, srt_col = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "masker_id") id_col = static_cast<int>(i);
    if (header[i] == "gender") gender_col = static_cast<int>(i);
    if (header[i] == value_col || header[i] == "srt_db") {
      srt_col = static_cast<int>(i);
    }
  }
  if (id_col < 0 || srt_col < 0) {
    throw FormatError(path + ": need masker_id and " + value_col +
                      " (or srt_db) columns");
  }
  std::map<std::string, SrtRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f[srt_col].empty()) continue;  // failed fits are skipped
    SrtRecord rec;
    rec.gender = gender_col >= 0 ? f[gender_col] : "";
    rec.srt_db = std::stod(f[srt_col]);
    out[f[id_col]] = rec;
  }
  return out;
}

int run_eval(const std::string& pred_path, const std::string& ref_path,
             const std::string& out_path) {
  const auto pred = load_srt_csv(pred_path, "srt50_db");
  const auto ref = load_srt_csv(ref_path, "srt50_db");

  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>
      by_gender;
  size_t matched = 0;
  for (const auto& [id, r] : ref) {
    const auto it = pred.find(id);
    if (it == pred.end()) continue;
    ++matched;
    auto& bucket = by_gender[r.gender.empty() ? "all" : r.gender];
    bucket.first.push_back(it->second.srt_db);
    bucket.second.push_back(r.srt_db);
  }
  if (matched == 0) {
    throw ValueError("eval: no masker ids in common between " + pred_path +
                     " and " + ref_path);
  }

  std::ostringstream csv;
  csv << "gender,n_maskers,rmse_db\n";
  std::vector<double> all_pred, all_ref;
  for (const auto& [gender, bucket] : by_gender) {
    csv << gender << ',' << bucket.first.size() << ','
        << format_double(rmse_srt(bucket.first, bucket.second)) << '\n';
    all_pred.insert(all_pred.end(), bucket.first.begin(), bucket.first.end());
    all_ref.insert(all_ref.end(), bucket.second.begin(), bucket.second.end());
  }
  if (by_gender.size() > 1) {
    csv << "avg," << all_pred.size() << ','
        << format_double(rmse_srt(all_pred, all_ref)) << '\n';
  }
  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    write_text_file(out_path, csv.str());
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

std::unique_ptr<PosteriorProvider> make_provider(
    const ExperimentConfig& config) {
  if (!config.import_dir.empty()) {
    return std::make_unique<ImportProvider>(config.import_dir);
  }
  if (config.classifier_path.empty()) {
    throw ValueError("config needs either classifier or import_dir");
  }
  return std::make_unique<ClassifierProvider>(
      FrameClassifier::load(config.classifier_path), config.features);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reference-free speech intelligibility prediction toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  uint64_t seed = 0;
  int jobs = 1;
  std::string out_dir;
  app.add_option("--seed", seed, "Root random seed")->capture_default_str();
  app.add_option("--jobs", jobs, "Worker threads for batch stages")
      ->capture_default_str();
  app.add_option("--out-dir", out_dir, "Output directory override");

  // mix
  auto* mix_cmd = app.add_subcommand("mix", "Mix speech and noise at an SNR");
  std::string mix_speech, mix_noise, mix_out;
  double mix_snr = 0.0;
  bool mix_float = false;
  mix_cmd->add_option("--speech", mix_speech)->required();
  mix_cmd->add_option("--noise", mix_noise)->required();
  mix_cmd->add_option("--snr", mix_snr, "Target SNR in dB")->required();
  mix_cmd->add_option("--out", mix_out)->required();
  mix_cmd->add_flag("--float", mix_float, "Write 32-bit float WAV");

  // masker
  auto* masker_cmd =
      app.add_subcommand("masker", "Synthesize a masker from reference speech");
  std::string masker_kind, masker_ref, masker_out;
  double masker_duration = 60.0;
  MaskerSpec masker_params;
  masker_cmd->add_option("--kind", masker_kind,
                         "ssn | sam-ssn | bb-ssn | afs-ssn | nv | raw")
      ->required();
  masker_cmd->add_option("--ref-speech", masker_ref)->required();
  masker_cmd->add_option("--duration", masker_duration, "Seconds")
      ->capture_default_str();
  masker_cmd->add_option("--out", masker_out)->required();
  masker_cmd->add_option("--sam-rate", masker_params.sam_rate_hz)
      ->capture_default_str();
  masker_cmd->add_option("--sam-depth", masker_params.sam_depth)
      ->capture_default_str();
  masker_cmd->add_option("--channels", masker_params.afs_channels)
      ->capture_default_str();
  masker_cmd->add_option("--group", masker_params.afs_group)
      ->capture_default_str();
  masker_cmd->add_option("--bands", masker_params.vocoder_bands)
      ->capture_default_str();

  // features
  auto* feat_cmd = app.add_subcommand("features", "Extract feature matrices");
  std::string feat_in, feat_kind = "mfsc40", feat_out;
  feat_cmd->add_option("--in", feat_in)->required();
  feat_cmd->add_option("--kind", feat_kind,
                       "mfsc23 | mfsc40 | amfb | amfb-spliced")
      ->capture_default_str();
  feat_cmd->add_option("--out", feat_out)->required();

  // posterior train/predict/import
  auto* post_cmd = app.add_subcommand("posterior", "Frame classifier ops");
  post_cmd->require_subcommand(1);
  auto* train_cmd = post_cmd->add_subcommand(
      "train", "Train the frame classifier on a labeled corpus");
  std::string train_corpus, train_features = "mfsc23", train_out;
  int train_classes = 8, train_epochs = 300, train_augment = 0;
  train_cmd->add_option("--corpus", train_corpus, "Corpus directory")
      ->required();
  train_cmd->add_option("--features", train_features)->capture_default_str();
  train_cmd->add_option("--classes", train_classes)->capture_default_str();
  train_cmd->add_option("--epochs", train_epochs)->capture_default_str();
  train_cmd
      ->add_option("--augment", train_augment,
                   "Noisy copies per utterance for multi-condition training")
      ->capture_default_str();
  train_cmd->add_option("--out", train_out)->required();

  auto* pred_post_cmd =
      post_cmd->add_subcommand("predict", "Posteriorgram for one utterance");
  std::string pp_model, pp_in, pp_features = "mfsc23", pp_out;
  pred_post_cmd->add_option("--model", pp_model)->required();
  pred_post_cmd->add_option("--in", pp_in)->required();
  pred_post_cmd->add_option("--features", pp_features)->capture_default_str();
  pred_post_cmd->add_option("--out", pp_out)->required();

  auto* import_cmd = post_cmd->add_subcommand(
      "import", "Convert a posteriorgram CSV to the binary format");
  std::string imp_csv, imp_out;
  double imp_shift = 0.010;
  import_cmd->add_option("--csv", imp_csv)->required();
  import_cmd->add_option("--out", imp_out)->required();
  import_cmd->add_option("--frame-shift", imp_shift)->capture_default_str();

  // mmeasure
  auto* mm_cmd =
      app.add_subcommand("mmeasure", "Mean temporal distance profile");
  std::string mm_in, mm_out;
  double mm_floor = kDefaultProbFloor;
  mm_cmd->add_option("--in", mm_in, "Posteriorgram file")->required();
  mm_cmd->add_option("--out", mm_out, "CSV output (stdout if omitted)");
  mm_cmd->add_option("--floor", mm_floor)->capture_default_str();

  // predict
  auto* predict_cmd = app.add_subcommand(
      "predict", "Map posteriorgrams to WER/accuracy and fit SRTs");
  std::string predict_manifest, predict_map, predict_out = "predictions";
  double predict_floor = kDefaultProbFloor;
  predict_cmd
      ->add_option("--manifest", predict_manifest,
                   "CSV of masker_id,pstg_path,snr_db")
      ->required();
  predict_cmd->add_option("--wer-map", predict_map)->required();
  predict_cmd->add_option("--out", predict_out)->capture_default_str();
  predict_cmd->add_option("--floor", predict_floor)->capture_default_str();

  // calibrate
  auto* cal_cmd =
      app.add_subcommand("calibrate", "Fit the M-to-WER map from pairs");
  std::string cal_pairs, cal_out;
  cal_cmd->add_option("--pairs", cal_pairs, "CSV with m,wer columns")
      ->required();
  cal_cmd->add_option("--out", cal_out)->required();

  // eval
  auto* eval_cmd =
      app.add_subcommand("eval", "RMSE between predicted and reference SRTs");
  std::string eval_pred, eval_ref, eval_out;
  eval_cmd->add_option("--pred", eval_pred)->required();
  eval_cmd->add_option("--ref", eval_ref)->required();
  eval_cmd->add_option("--out", eval_out, "CSV output (stdout if omitted)");

  // manifest
  auto* man_cmd =
      app.add_subcommand("manifest", "Build the test-set manifest");
  std::string man_config, man_out;
  man_cmd->add_option("--config", man_config)->required();
  man_cmd->add_option("--out", man_out)->required();

  // run
  auto* run_cmd =
      app.add_subcommand("run", "Full pipeline: manifest to SRT summary");
  std::string run_config, run_manifest;
  run_cmd->add_option("--config", run_config)->required();
  run_cmd->add_option("--manifest", run_manifest,
                      "Reuse an existing manifest CSV");

  // toy-corpus
  auto* toy_cmd = app.add_subcommand(
      "toy-corpus", "Generate the synthetic labeled corpus");
  std::string toy_out;
  int toy_utts = 50, toy_classes = 8;
  toy_cmd->add_option("--out", toy_out)->required();
  toy_cmd->add_option("--utterances", toy_utts)->capture_default_str();
  toy_cmd->add_option("--classes", toy_classes)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*mix_cmd) {
      return run_mix(mix_speech, mix_noise, mix_snr, seed, mix_out, mix_float);
    }
    if (*masker_cmd) {
      return run_masker(masker_kind, masker_ref, masker_duration, seed,
                        masker_out, masker_params);
    }
    if (*feat_cmd) return run_features(feat_in, feat_kind, feat_out);
    if (*train_cmd) {
      TrainOptions options;
      options.max_epochs = train_epochs;
      options.seed = seed;
      AugmentOptions augment;
      augment.noisy_copies = train_augment;
      augment.seed = seed + 1;
      const FrameClassifier model = train_classifier_on_corpus(
          train_corpus, pipeline_features_from_string(train_features),
          static_cast<size_t>(train_classes), options, augment);
      model.save(train_out);
      std::cout << "trained classifier (" << model.feature_dim() << " -> "
                << model.n_classes() << ", final loss "
                << format_double(model.final_loss()) << ") -> " << train_out
                << "\n";
      return 0;
    }
    if (*pred_post_cmd) {
      const FrameClassifier model = FrameClassifier::load(pp_model);
      const AudioBuffer audio = read_wav(pp_in);
      const Posteriorgram post = model.predict(
          pipeline_features(audio, pipeline_features_from_string(pp_features)));
      save_posteriorgram(post, pp_out);
      std::cout << "wrote " << post.frames << " x " << post.classes
                << " posteriorgram -> " << pp_out << "\n";
      return 0;
    }
    if (*import_cmd) {
      const Posteriorgram post = load_posteriorgram_csv(imp_csv, imp_shift);
      save_posteriorgram(post, imp_out);
      std::cout << "imported " << post.frames << " x " << post.classes
                << " -> " << imp_out << "\n";
      return 0;
    }
    if (*mm_cmd) return run_mmeasure(mm_in, mm_out, mm_floor);
    if (*predict_cmd) {
      return run_predict(predict_manifest, predict_map,
                         out_dir.empty() ? predict_out : out_dir,
                         predict_floor);
    }
    if (*cal_cmd) {
      std::ifstream in(cal_pairs);
      if (!in) throw IoError("cannot open pairs: " + cal_pairs);
      std::string line;
      std::getline(in, line);  // header
      std::vector<WerCalibrationPair> pairs;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() < 2) throw FormatError("pairs csv needs m,wer columns");
        pairs.push_back({std::stod(f[0]), std::stod(f[1])});
      }
      const WerMap map = calibrate_wer_map(pairs);
      save_wer_map_file(map, cal_out);
      std::cout << "initial_wer " << format_double(map.initial_wer)
                << ", decay_rate " << format_double(map.decay_rate) << " -> "
                << cal_out << "\n";
      return 0;
    }
    if (*eval_cmd) return run_eval(eval_pred, eval_ref, eval_out);
    if (*man_cmd) {
      ExperimentConfig config = load_experiment_config(man_config);
      if (seed != 0) config.seed = seed;
      save_manifest(build_manifest(config), man_out);
      std::cout << "wrote manifest -> " << man_out << "\n";
      return 0;
    }
    if (*run_cmd) {
      ExperimentConfig config = load_experiment_config(run_config);
      if (seed != 0) config.seed = seed;
      if (jobs > 1) config.jobs = jobs;
      if (!out_dir.empty()) config.out_dir = out_dir;
      const Manifest manifest = run_manifest.empty()
                                    ? build_manifest(config)
                                    : load_manifest(run_manifest);
      fs::create_directories(config.out_dir);
      save_manifest(manifest,
                    (fs::path(config.out_dir) / "manifest.csv").string());
      auto provider = make_provider(config);
      const PipelineResult result = run_pipeline(config, manifest, *provider);
      for (const auto& m : result.maskers) {
        if (m.fit_ok) {
          std::cout << m.prediction.masker_id << ": SRT50 "
                    << format_double(m.prediction.srt50_db) << " dB, SRT80 "
                    << format_double(m.prediction.srt80_db) << " dB ("
                    << m.prediction.n_points << " points)\n";
        } else {
          std::cout << m.prediction.masker_id << ": fit failed ("
                    << m.fit_error << ")\n";
        }
      }
      std::cout << result.rows.size() - result.n_skipped << "/"
                << result.rows.size() << " rows processed -> "
                << config.out_dir << "\n";
      return result.all_fits_ok() ? 0 : 1;
    }
    if (*toy_cmd) {
      ToyCorpusConfig config;
      config.n_utterances = toy_utts;
      config.n_classes = toy_classes;
      if (seed != 0) config.seed = seed;
      write_toy_corpus(make_toy_corpus(config), toy_out);
      std::cout << "wrote " << toy_utts << " utterances -> " << toy_out
                << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
