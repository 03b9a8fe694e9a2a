#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sipred/pipeline.h"
#include "sipred/toy.h"
#include "support/stats.h"
#include "support/synth.h"

using namespace sipred;
using namespace sipred::teststats;
namespace fs = std::filesystem;

namespace {

// One toy corpus + trained classifier shared across the pipeline tests;
// training is the expensive part.
struct ToyFixture {
  std::string dir;
  std::vector<std::string> wavs;
  FrameClassifier model;
};

const ToyFixture& toy_fixture() {
  static const ToyFixture fixture = [] {
    ToyFixture f;
    f.dir = testsynth::scratch_dir("toyfix");
    ToyCorpusConfig config;
    config.n_utterances = 24;
    config.seed = 11;
    const auto corpus = make_toy_corpus(config);
    write_toy_corpus(corpus, f.dir);
    for (const auto& utt : corpus) {
      f.wavs.push_back(f.dir + "/" + utt.id + ".wav");
    }
    TrainOptions options;
    options.max_epochs = 150;
    options.seed = 7;
    AugmentOptions augment;
    augment.noisy_copies = 2;  // multi-condition training set
    f.model = train_classifier_on_corpus(f.dir, PipelineFeatures::kMfsc23, 8,
                                         options, augment);
    return f;
  }();
  return fixture;
}

ExperimentConfig small_config(const ToyFixture& fixture,
                              const std::string& out_dir) {
  ExperimentConfig config;
  config.corpus = fixture.wavs;
  config.maskers.push_back({"ssn", MaskerSpec{MaskerKind::kSsn}, "f", ""});
  MaskerSpec bb;
  bb.kind = MaskerKind::kBbSsn;
  config.maskers.push_back({"bb-ssn", bb, "f", ""});
  config.masker_duration_s = 8.0;
  config.snr_min_db = -25.0;
  config.snr_max_db = 15.0;
  config.n_snr_points = 20;
  config.sentences_per_snr = 4;
  config.seed = 5;
  config.out_dir = out_dir;
  return config;
}

}  // namespace

TEST_CASE("toy corpus generation") {
  ToyCorpusConfig config;
  config.n_utterances = 4;
  config.seed = 3;
  const auto a = make_toy_corpus(config);
  const auto b = make_toy_corpus(config);
  REQUIRE(a.size() == 4);
  for (size_t u = 0; u < 4; ++u) {
    CHECK(a[u].audio.samples == b[u].audio.samples);
    CHECK(a[u].frame_labels == b[u].frame_labels);
    // Labels align with the analysis framing.
    const size_t frames = 1 + (a[u].audio.samples.size() - 400) / 160;
    REQUIRE(a[u].frame_labels.size() == frames);
    for (int l : a[u].frame_labels) {
      REQUIRE(l >= 0);
      REQUIRE(l < config.n_classes);
    }
    // Long enough for the full 16-lag profile.
    REQUIRE(frames > 81);
  }
}

TEST_CASE("pipeline feature dimensions") {
  const AudioBuffer buf = testsynth::white_noise(1.5, 2, 0.1);
  const FeatureMatrix mfsc_feats =
      pipeline_features(buf, PipelineFeatures::kMfsc23);
  CHECK(mfsc_feats.dims == 115);  // 23 x (2*2+1)
  const FeatureMatrix amfb_feats =
      pipeline_features(buf, PipelineFeatures::kAmfb);
  CHECK(amfb_feats.dims == 3960);  // 360 x (2*5+1)
  CHECK(mfsc_feats.frames == amfb_feats.frames);
}

TEST_CASE("build_manifest") {
  const ToyFixture& fixture = toy_fixture();

  SUBCASE("row count and determinism") {
    ExperimentConfig config = small_config(fixture, "");
    const Manifest a = build_manifest(config);
    const Manifest b = build_manifest(config);
    REQUIRE(a.rows.size() == 2 * 20 * 4);
    for (size_t i = 0; i < a.rows.size(); ++i) {
      REQUIRE(a.rows[i].utt_id == b.rows[i].utt_id);
      REQUIRE(a.rows[i].snr_db == b.rows[i].snr_db);
      REQUIRE(a.rows[i].noise_offset == b.rows[i].noise_offset);
      REQUIRE(a.rows[i].seed == b.rows[i].seed);
    }
  }

  SUBCASE("default protocol counts give 3200 rows per masker") {
    ExperimentConfig config = small_config(fixture, "");
    config.maskers.resize(1);
    config.n_snr_points = 400;
    config.sentences_per_snr = 8;
    const Manifest m = build_manifest(config);
    CHECK(m.rows.size() == 3200);
  }

  SUBCASE("single point, single sentence") {
    ExperimentConfig config = small_config(fixture, "");
    config.maskers.resize(1);
    config.n_snr_points = 1;
    config.sentences_per_snr = 1;
    const Manifest m = build_manifest(config);
    REQUIRE(m.rows.size() == 1);
    CHECK(m.rows[0].snr_db >= config.snr_min_db);
    CHECK(m.rows[0].snr_db <= config.snr_max_db);
  }

  SUBCASE("SNRs are uniform (KS test at n=400)") {
    ExperimentConfig config = small_config(fixture, "");
    config.maskers.resize(1);
    config.n_snr_points = 400;
    config.sentences_per_snr = 1;
    config.snr_min_db = -30.0;
    config.snr_max_db = 20.0;
    const Manifest m = build_manifest(config);
    std::vector<double> snrs;
    for (const auto& row : m.rows) snrs.push_back(row.snr_db);
    REQUIRE(snrs.size() == 400);
    CHECK(ks_uniform_pvalue(snrs, -30.0, 20.0) > 0.01);
  }

  SUBCASE("manifest csv round trip") {
    ExperimentConfig config = small_config(fixture, "");
    config.n_snr_points = 3;
    const Manifest m = build_manifest(config);
    const std::string path = testsynth::scratch_dir("man") + "/m.csv";
    save_manifest(m, path);
    const Manifest back = load_manifest(path);
    REQUIRE(back.rows.size() == m.rows.size());
    for (size_t i = 0; i < m.rows.size(); ++i) {
      REQUIRE(back.rows[i].utt_id == m.rows[i].utt_id);
      REQUIRE(back.rows[i].speech_path == m.rows[i].speech_path);
      REQUIRE(back.rows[i].noise_offset == m.rows[i].noise_offset);
      REQUIRE(back.rows[i].seed == m.rows[i].seed);
      REQUIRE(back.rows[i].snr_db == doctest::Approx(m.rows[i].snr_db));
    }
  }

  SUBCASE("empty corpus is rejected") {
    ExperimentConfig config = small_config(fixture, "");
    config.corpus.clear();
    CHECK_THROWS_AS(build_manifest(config), ValueError);
  }
}

TEST_CASE("run_pipeline") {
  const ToyFixture& fixture = toy_fixture();

  SUBCASE("toy end-to-end run fits both maskers with positive slope") {
    const std::string out = testsynth::scratch_dir("run");
    ExperimentConfig config = small_config(fixture, out);
    const Manifest manifest = build_manifest(config);
    ClassifierProvider provider(fixture.model, config.features);
    const PipelineResult result = run_pipeline(config, manifest, provider);

    REQUIRE(result.maskers.size() == 2);
    for (const auto& outcome : result.maskers) {
      REQUIRE(outcome.fit_ok);
      CHECK(outcome.prediction.fit.slope_per_db > 0.0);
      CHECK(outcome.prediction.srt80_db > outcome.prediction.srt50_db);
    }
    CHECK(result.n_skipped == 0);

    // Artifact layout.
    CHECK(fs::exists(fs::path(out) / "ssn" / "manifest.csv"));
    CHECK(fs::exists(fs::path(out) / "ssn" / "points.csv"));
    CHECK(fs::exists(fs::path(out) / "ssn" / "fit.csv"));
    CHECK(fs::exists(fs::path(out) / "bb-ssn" / "manifest.csv"));
    CHECK(fs::exists(fs::path(out) / "srt_summary.csv"));

    // Raw accuracy trends upward with SNR.
    std::vector<double> snrs, accs;
    for (const auto& row : result.rows) {
      if (!row.ok) continue;
      snrs.push_back(row.snr_db);
      accs.push_back(row.accuracy);
    }
    CHECK(spearman(snrs, accs) > 0.8);
    fs::remove_all(out);
  }

  SUBCASE("constant posteriorgrams fail the fit as unidentifiable") {
    class ConstantProvider : public PosteriorProvider {
     public:
      Posteriorgram posteriors(const ManifestRow&,
                               const AudioBuffer& mixture) override {
        Posteriorgram p;
        p.frames = 1 + (mixture.samples.size() - 400) / 160;
        p.classes = 8;
        p.probs.assign(p.frames * 8, 1.0 / 8.0);
        return p;
      }
    };
    const std::string out = testsynth::scratch_dir("runconst");
    ExperimentConfig config = small_config(fixture, out);
    config.maskers.resize(1);
    config.n_snr_points = 10;
    const Manifest manifest = build_manifest(config);
    ConstantProvider provider;
    const PipelineResult result = run_pipeline(config, manifest, provider);
    REQUIRE(result.maskers.size() == 1);
    CHECK(!result.maskers[0].fit_ok);
    CHECK(result.maskers[0].fit_error.find("unidentifiable") !=
          std::string::npos);
    fs::remove_all(out);
  }

  SUBCASE("import provider reads per-row posteriorgram files") {
    const std::string out = testsynth::scratch_dir("runimp");
    const std::string pstg_dir = testsynth::scratch_dir("pstgdir");
    ExperimentConfig config = small_config(fixture, out);
    config.maskers.resize(1);
    config.n_snr_points = 4;
    config.sentences_per_snr = 2;
    const Manifest manifest = build_manifest(config);

    // Synthesize posteriorgrams whose M rises with SNR so the whole chain
    // downstream of the provider is exercised.
    for (const auto& row : manifest.rows) {
      Posteriorgram p = testsynth::random_posteriorgram(120, 8, row.seed);
      const double sharpen = (row.snr_db + 30.0) / 10.0;
      for (size_t t = 0; t < p.frames; ++t) {
        double sum = 0.0;
        for (size_t k = 0; k < 8; ++k) {
          p.at(t, k) = std::pow(p.at(t, k), sharpen);
          sum += p.at(t, k);
        }
        for (size_t k = 0; k < 8; ++k) p.at(t, k) /= sum;
      }
      save_posteriorgram(p, pstg_dir + "/" + row.utt_id + ".pstg");
    }
    ImportProvider provider(pstg_dir);
    const PipelineResult result = run_pipeline(config, manifest, provider);
    CHECK(result.n_skipped == 0);
    size_t ok_rows = 0;
    for (const auto& row : result.rows) ok_rows += row.ok ? 1 : 0;
    CHECK(ok_rows == manifest.rows.size());
    fs::remove_all(out);
    fs::remove_all(pstg_dir);
  }

  SUBCASE("more than 10% provider failures abort the run") {
    class FailingProvider : public PosteriorProvider {
     public:
      Posteriorgram posteriors(const ManifestRow& row,
                               const AudioBuffer&) override {
        throw ValueError("no posteriorgram for " + row.utt_id);
      }
    };
    const std::string out = testsynth::scratch_dir("runfail");
    ExperimentConfig config = small_config(fixture, out);
    config.maskers.resize(1);
    config.n_snr_points = 3;
    const Manifest manifest = build_manifest(config);
    FailingProvider provider;
    CHECK_THROWS_AS(run_pipeline(config, manifest, provider), Error);
    fs::remove_all(out);
  }

  SUBCASE("concat aggregation pools posteriorgrams per SNR group") {
    const std::string out = testsynth::scratch_dir("runconcat");
    ExperimentConfig config = small_config(fixture, out);
    config.maskers.resize(1);
    config.n_snr_points = 12;
    config.m_aggregation = MAggregation::kConcat;
    const Manifest manifest = build_manifest(config);
    ClassifierProvider provider(fixture.model, config.features);
    const PipelineResult result = run_pipeline(config, manifest, provider);
    REQUIRE(result.maskers.size() == 1);
    CHECK(result.maskers[0].fit_ok);
    CHECK(result.maskers[0].prediction.fit.slope_per_db > 0.0);
    fs::remove_all(out);
  }

  SUBCASE("worker pool output is independent of the job count") {
    const std::string out1 = testsynth::scratch_dir("jobs1");
    const std::string out2 = testsynth::scratch_dir("jobs2");
    ExperimentConfig config = small_config(fixture, out1);
    config.maskers.resize(1);
    config.n_snr_points = 6;
    config.sentences_per_snr = 2;
    const Manifest manifest = build_manifest(config);
    ClassifierProvider provider(fixture.model, config.features);

    config.jobs = 1;
    run_pipeline(config, manifest, provider);
    config.jobs = 4;
    config.out_dir = out2;
    run_pipeline(config, manifest, provider);

    CHECK(read_text_file((fs::path(out1) / "ssn" / "manifest.csv").string()) ==
          read_text_file((fs::path(out2) / "ssn" / "manifest.csv").string()));
    CHECK(read_text_file((fs::path(out1) / "srt_summary.csv").string()) ==
          read_text_file((fs::path(out2) / "srt_summary.csv").string()));
    fs::remove_all(out1);
    fs::remove_all(out2);
  }
}

TEST_CASE("experiment config json") {
  const std::string dir = testsynth::scratch_dir("cfg");
  const ToyFixture& fixture = toy_fixture();
  std::ostringstream json_text;
  json_text << "{\n"
            << "  \"corpus_dir\": \"" << fixture.dir << "\",\n"
            << "  \"maskers\": [{\"id\": \"ssn\", \"kind\": \"ssn\", "
               "\"gender\": \"f\"}],\n"
            << "  \"masker_duration_s\": 8.0,\n"
            << "  \"snr_min_db\": -20, \"snr_max_db\": 10,\n"
            << "  \"n_snr_points\": 5, \"sentences_per_snr\": 2,\n"
            << "  \"seed\": 9,\n"
            << "  \"features\": \"mfsc23\",\n"
            << "  \"wer_map\": {\"initial_wer\": 200.0, \"decay_rate\": "
               "0.3},\n"
            << "  \"out_dir\": \"" << dir << "/results\"\n"
            << "}\n";
  write_text_file(dir + "/config.json", json_text.str());
  const ExperimentConfig config = load_experiment_config(dir + "/config.json");
  CHECK(config.corpus.size() == fixture.wavs.size());
  CHECK(config.maskers.size() == 1);
  CHECK(config.maskers[0].gender == "f");
  CHECK(config.wer_map.initial_wer == doctest::Approx(200.0));
  CHECK(config.seed == 9);

  write_text_file(dir + "/bad.json", "{not json");
  CHECK_THROWS_AS(load_experiment_config(dir + "/bad.json"), FormatError);

  write_text_file(dir + "/badsnr.json",
                  "{\"corpus\": [\"x.wav\"], \"snr_min_db\": 5, "
                  "\"snr_max_db\": -5}");
  CHECK_THROWS_AS(load_experiment_config(dir + "/badsnr.json"), ValueError);
  fs::remove_all(dir);
}
