#include "sipred/toy.h"

#include <cmath>
#include <filesystem>
#include <sstream>

namespace sipred {

namespace {

struct PhoneTemplate {
  double freqs[3];
  double amps[3];
};

PhoneTemplate phone_template(int klass) {
  // Distinct spectral peaks per class, spread over the usable band.
  const double k = static_cast<double>(klass);
  return PhoneTemplate{
      {220.0 + 130.0 * k, 1400.0 + 330.0 * k, 4200.0 + 360.0 * k},
      {1.0, 0.6, 0.35},
  };
}

}  // namespace

std::vector<std::string> toy_class_names(int n_classes) {
  std::vector<std::string> names;
  names.reserve(n_classes);
  names.push_back("sil");
  for (int k = 1; k < n_classes; ++k) {
    names.push_back("ph" + std::to_string(k));
  }
  return names;
}

std::vector<ToyUtterance> make_toy_corpus(const ToyCorpusConfig& config) {
  if (config.n_classes < 2) throw ValueError("toy corpus: need >= 2 classes");
  if (config.n_utterances < 1) {
    throw ValueError("toy corpus: need >= 1 utterance");
  }
  const int fs = kSampleRate;
  const size_t window = 400, shift = 160;

  std::vector<ToyUtterance> corpus;
  corpus.reserve(config.n_utterances);
  Rng root(config.seed);

  for (int u = 0; u < config.n_utterances; ++u) {
    Rng rng = root.substream("toy-utt", static_cast<uint64_t>(u));
    ToyUtterance utt;
    {
      std::ostringstream id;
      id << "toy" << (u < 10 ? "0" : "") << u;
      utt.id = id.str();
    }
    utt.audio.sample_rate = fs;

    // Per-utterance "speaker": a small common shift of all phone frequencies.
    const double speaker_jitter = 1.0 + 0.02 * rng.gaussian();

    const int n_segments = static_cast<int>(
        rng.uniform_int(config.min_segments, config.max_segments));
    std::vector<int> sample_labels;
    int previous = -1;
    for (int seg = 0; seg < n_segments; ++seg) {
      int klass = static_cast<int>(rng.uniform_int(0, config.n_classes - 1));
      if (klass == previous) {
        klass = (klass + 1) % config.n_classes;  // avoid degenerate repeats
      }
      previous = klass;
      const double dur =
          rng.uniform(config.min_segment_s, config.max_segment_s);
      const size_t n = static_cast<size_t>(std::lround(dur * fs));
      const double level_db = rng.uniform(-3.0, 3.0);
      const double gain = std::pow(10.0, level_db / 20.0);
      const double phase0 = rng.uniform(0.0, 2.0 * M_PI);
      const double phase1 = rng.uniform(0.0, 2.0 * M_PI);
      const double phase2 = rng.uniform(0.0, 2.0 * M_PI);

      const PhoneTemplate tpl = phone_template(klass);
      const size_t start = utt.audio.samples.size();
      utt.audio.samples.resize(start + n);
      sample_labels.resize(start + n, klass);
      for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        double v = 0.02 * rng.gaussian();  // noise floor
        if (klass != 0) {
          v += gain * (tpl.amps[0] * std::sin(2 * M_PI * tpl.freqs[0] *
                                                  speaker_jitter * t +
                                              phase0) +
                       tpl.amps[1] * std::sin(2 * M_PI * tpl.freqs[1] *
                                                  speaker_jitter * t +
                                              phase1) +
                       tpl.amps[2] * std::sin(2 * M_PI * tpl.freqs[2] *
                                                  speaker_jitter * t +
                                              phase2));
        }
        utt.audio.samples[start + i] = v;
      }
      std::fill(sample_labels.begin() + start, sample_labels.end(), klass);
    }

    // Keep a sane headroom for mixing.
    double peak = 0.0;
    for (double v : utt.audio.samples) peak = std::max(peak, std::abs(v));
    if (peak > 0.0) {
      const double g = 0.3 / peak;
      for (auto& v : utt.audio.samples) v *= g;
    }

    // Frame labels by window center, matching the analysis framing.
    const size_t n_samples = utt.audio.samples.size();
    if (n_samples >= window) {
      const size_t frames = 1 + (n_samples - window) / shift;
      utt.frame_labels.resize(frames);
      for (size_t t = 0; t < frames; ++t) {
        utt.frame_labels[t] = sample_labels[t * shift + window / 2];
      }
    }
    corpus.push_back(std::move(utt));
  }
  return corpus;
}

void write_toy_corpus(const std::vector<ToyUtterance>& corpus,
                      const std::string& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  std::ostringstream index;
  index << "utt_id,wav,lab,n_frames\n";
  for (const auto& utt : corpus) {
    const std::string wav = utt.id + ".wav";
    const std::string lab = utt.id + ".lab";
    write_wav(utt.audio, (fs::path(directory) / wav).string());
    std::ostringstream labels;
    for (int l : utt.frame_labels) labels << l << '\n';
    write_text_file((fs::path(directory) / lab).string(), labels.str());
    index << utt.id << ',' << wav << ',' << lab << ','
          << utt.frame_labels.size() << '\n';
  }
  write_text_file((fs::path(directory) / "corpus.csv").string(), index.str());
}

}  // namespace sipred
