#ifndef SIPRED_TOY_H_
#define SIPRED_TOY_H_

#include <cstdint>
#include <string>
#include <vector>

#include "sipred/audio.h"

namespace sipred {

// Synthetic matrix-test-like corpus for end-to-end runs without a real
// recording set. Each "phone" is a fixed three-component tone complex plus a
// noise floor; utterances are random phone sequences with per-segment level
// jitter, so the frame classifier has genuine, noise-sensitive structure to
// learn.

struct ToyCorpusConfig {
  int n_utterances = 50;
  int n_classes = 8;          // class 0 is near-silence
  double min_segment_s = 0.12;
  double max_segment_s = 0.26;
  int min_segments = 12;
  int max_segments = 16;
  uint64_t seed = 1;
};

struct ToyUtterance {
  std::string id;
  AudioBuffer audio;
  std::vector<int> frame_labels;  // one per 25 ms/10 ms analysis frame
};

std::vector<ToyUtterance> make_toy_corpus(const ToyCorpusConfig& config);

/// Class names for the toy inventory: "sil", "ph1", "ph2", ...
std::vector<std::string> toy_class_names(int n_classes);

/// Writes <id>.wav plus <id>.lab (one frame label per line) for every
/// utterance and a corpus.csv index (utt_id, wav, lab, n_frames).
void write_toy_corpus(const std::vector<ToyUtterance>& corpus,
                      const std::string& directory);

}  // namespace sipred

#endif  // SIPRED_TOY_H_
