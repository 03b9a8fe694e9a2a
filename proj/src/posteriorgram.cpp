#include "sipred/posteriorgram.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sipred {

namespace {

constexpr char kMagic[4] = {'P', 'S', 'T', 'G'};
constexpr uint16_t kVersion = 1;
constexpr char kModelMagic[4] = {'S', 'P', 'F', 'C'};

void put_bytes(std::ostream& out, const void* data, size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void put_u16(std::ostream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  put_bytes(out, b, 2);
}

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  put_bytes(out, b, 4);
}

void put_f32(std::ostream& out, float v) {
  static_assert(sizeof(float) == 4);
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u32(out, static_cast<uint32_t>(bits & 0xffffffffULL));
  put_u32(out, static_cast<uint32_t>(bits >> 32));
}

void need(std::istream& in, const std::string& path) {
  if (!in) throw FormatError("truncated or unreadable file: " + path);
}

uint16_t get_u16(std::istream& in, const std::string& path) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  need(in, path);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  need(in, path);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& in, const std::string& path) {
  const uint32_t bits = get_u32(in, path);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

double get_f64(std::istream& in, const std::string& path) {
  const uint64_t lo = get_u32(in, path);
  const uint64_t hi = get_u32(in, path);
  const uint64_t bits = lo | (hi << 32);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string get_label(std::istream& in, const std::string& path) {
  const uint32_t len = get_u32(in, path);
  if (len > (1u << 20)) throw FormatError("label length implausible: " + path);
  std::string s(len, '\0');
  in.read(s.data(), len);
  need(in, path);
  return s;
}

}  // namespace

void Posteriorgram::validate(double tolerance) const {
  if (probs.size() != frames * classes) {
    throw ValueError("posteriorgram: data size does not match frames*classes");
  }
  if (!labels.empty() && labels.size() != classes) {
    throw ValueError("posteriorgram: label count does not match classes");
  }
  for (size_t t = 0; t < frames; ++t) {
    double sum = 0.0;
    for (size_t k = 0; k < classes; ++k) {
      const double p = at(t, k);
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw ValueError("posteriorgram row " + std::to_string(t) +
                         ": negative or non-finite probability");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > tolerance) {
      throw ValueError("posteriorgram row " + std::to_string(t) +
                       ": sum " + format_double(sum) + " is not 1 within " +
                       format_double(tolerance));
    }
  }
}

void TriphoneMap::validate() const {
  if (mapping.empty() || n_monophones == 0) {
    throw ValueError("triphone map: empty");
  }
  std::vector<char> hit(n_monophones, 0);
  for (uint32_t m : mapping) {
    if (m >= n_monophones) {
      throw ValueError("triphone map: monophone index " + std::to_string(m) +
                       " out of range");
    }
    hit[m] = 1;
  }
  for (size_t m = 0; m < n_monophones; ++m) {
    if (!hit[m]) {
      throw ValueError("triphone map: monophone " + std::to_string(m) +
                       " has no triphone states (map not surjective)");
    }
  }
}

Posteriorgram group_to_monophones(const Posteriorgram& triphone,
                                  const TriphoneMap& map,
                                  std::vector<std::string> mono_labels) {
  map.validate();
  if (triphone.classes != map.n_triphones()) {
    throw ValueError("group_to_monophones: posteriorgram width " +
                     std::to_string(triphone.classes) +
                     " does not match map with " +
                     std::to_string(map.n_triphones()) + " triphones");
  }
  if (!mono_labels.empty() && mono_labels.size() != map.n_monophones) {
    throw ValueError("group_to_monophones: wrong number of monophone labels");
  }
  Posteriorgram out;
  out.frames = triphone.frames;
  out.classes = map.n_monophones;
  out.frame_shift = triphone.frame_shift;
  out.labels = std::move(mono_labels);
  out.probs.assign(out.frames * out.classes, 0.0);
  for (size_t t = 0; t < triphone.frames; ++t) {
    double* dst = out.probs.data() + t * out.classes;
    const double* src = triphone.probs.data() + t * triphone.classes;
    for (size_t j = 0; j < triphone.classes; ++j) {
      dst[map.mapping[j]] += src[j];
    }
  }
  return out;
}

void save_matrix_file(const MatrixFile& matrix, const std::string& path) {
  if (matrix.values.size() != matrix.frames * matrix.columns) {
    throw ValueError("save_matrix_file: value count mismatch");
  }
  if (!matrix.labels.empty() && matrix.labels.size() != matrix.columns) {
    throw ValueError("save_matrix_file: label count mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  put_bytes(out, kMagic, 4);
  put_u16(out, kVersion);
  put_u32(out, static_cast<uint32_t>(matrix.frames));
  put_u32(out, static_cast<uint32_t>(matrix.columns));
  put_f32(out, matrix.frame_shift);
  for (size_t k = 0; k < matrix.columns; ++k) {
    const std::string& label =
        matrix.labels.empty() ? std::string() : matrix.labels[k];
    put_u32(out, static_cast<uint32_t>(label.size()));
    put_bytes(out, label.data(), label.size());
  }
  for (float v : matrix.values) put_f32(out, v);
  if (!out) throw IoError("write failed: " + path);
}

MatrixFile load_matrix_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  need(in, path);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad magic (expected PSTG): " + path);
  }
  const uint16_t version = get_u16(in, path);
  if (version != kVersion) {
    throw FormatError("unsupported PSTG version " + std::to_string(version) +
                      ": " + path);
  }
  MatrixFile m;
  m.frames = get_u32(in, path);
  m.columns = get_u32(in, path);
  m.frame_shift = get_f32(in, path);
  m.labels.resize(m.columns);
  for (size_t k = 0; k < m.columns; ++k) m.labels[k] = get_label(in, path);
  m.values.resize(m.frames * m.columns);
  for (auto& v : m.values) v = get_f32(in, path);
  return m;
}

void save_posteriorgram(const Posteriorgram& posteriorgram,
                        const std::string& path) {
  MatrixFile m;
  m.frames = posteriorgram.frames;
  m.columns = posteriorgram.classes;
  m.frame_shift = static_cast<float>(posteriorgram.frame_shift);
  m.labels = posteriorgram.labels;
  m.values.resize(posteriorgram.probs.size());
  for (size_t i = 0; i < m.values.size(); ++i) {
    m.values[i] = static_cast<float>(posteriorgram.probs[i]);
  }
  save_matrix_file(m, path);
}

Posteriorgram load_posteriorgram(const std::string& path) {
  const MatrixFile m = load_matrix_file(path);
  Posteriorgram p;
  p.frames = m.frames;
  p.classes = m.columns;
  p.frame_shift = m.frame_shift;
  p.labels = m.labels;
  p.probs.assign(m.values.begin(), m.values.end());
  p.validate();
  return p;
}

Posteriorgram load_posteriorgram_csv(const std::string& path,
                                     double frame_shift) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty csv: " + path);
  Posteriorgram p;
  p.labels = split_csv_line(line);
  p.classes = p.labels.size();
  p.frame_shift = frame_shift;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != p.classes) {
      throw FormatError("csv row " + std::to_string(p.frames) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(p.classes) + ": " + path);
    }
    for (const auto& f : fields) {
      try {
        p.probs.push_back(std::stod(f));
      } catch (const std::exception&) {
        throw FormatError("csv row " + std::to_string(p.frames) +
                          ": cannot parse '" + f + "': " + path);
      }
    }
    ++p.frames;
  }
  p.validate();
  return p;
}

void save_posteriorgram_csv(const Posteriorgram& posteriorgram,
                            const std::string& path) {
  std::ostringstream out;
  out << csv_row(posteriorgram.labels.empty()
                     ? std::vector<std::string>(posteriorgram.classes, "")
                     : posteriorgram.labels);
  for (size_t t = 0; t < posteriorgram.frames; ++t) {
    std::vector<std::string> row(posteriorgram.classes);
    for (size_t k = 0; k < posteriorgram.classes; ++k) {
      row[k] = format_double(posteriorgram.at(t, k));
    }
    out << csv_row(row);
  }
  write_text_file(path, out.str());
}

void save_feature_matrix(const FeatureMatrix& features,
                         const std::string& path) {
  MatrixFile m;
  m.frames = features.frames;
  m.columns = features.dims;
  m.frame_shift = static_cast<float>(features.frame_shift);
  m.values.resize(features.data.size());
  for (size_t i = 0; i < m.values.size(); ++i) {
    m.values[i] = static_cast<float>(features.data[i]);
  }
  save_matrix_file(m, path);
}

FeatureMatrix load_feature_matrix(const std::string& path) {
  const MatrixFile m = load_matrix_file(path);
  FeatureMatrix f;
  f.frames = m.frames;
  f.dims = m.columns;
  f.frame_shift = m.frame_shift;
  f.data.assign(m.values.begin(), m.values.end());
  return f;
}

FrameClassifier::FrameClassifier(size_t feature_dim, size_t n_classes,
                                 std::vector<std::string> labels)
    : dim_(feature_dim), classes_(n_classes), labels_(std::move(labels)) {
  if (n_classes == 0) throw ValueError("classifier: zero classes");
  weights_.assign(classes_ * (dim_ + 1), 0.0);
  if (!labels_.empty() && labels_.size() != classes_) {
    throw ValueError("classifier: label count mismatch");
  }
}

namespace {

// Softmax over logits, in place, numerically stabilized.
void softmax(std::vector<double>& z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

}  // namespace

FrameClassifier FrameClassifier::train(
    const std::vector<FeatureMatrix>& features,
    const std::vector<std::vector<int>>& labels, size_t n_classes,
    const TrainOptions& options, std::vector<std::string> class_names) {
  if (features.empty() || features.size() != labels.size()) {
    throw ValueError("train: features and labels must be nonempty and align");
  }
  const size_t dim = features[0].dims;
  size_t n_frames = 0;
  for (size_t u = 0; u < features.size(); ++u) {
    if (features[u].dims != dim) {
      throw ValueError("train: inconsistent feature dimension");
    }
    if (features[u].frames != labels[u].size()) {
      throw ValueError("train: utterance " + std::to_string(u) +
                       " has " + std::to_string(features[u].frames) +
                       " frames but " + std::to_string(labels[u].size()) +
                       " labels");
    }
    for (int l : labels[u]) {
      if (l < 0 || static_cast<size_t>(l) >= n_classes) {
        throw ValueError("train: label " + std::to_string(l) +
                         " out of range [0, " + std::to_string(n_classes) +
                         ")");
      }
    }
    n_frames += features[u].frames;
  }
  if (n_frames == 0) throw ValueError("train: no frames");

  // Flatten once; the training set is desk scale by construction.
  std::vector<double> x(n_frames * dim);
  std::vector<int> y(n_frames);
  size_t row = 0;
  for (size_t u = 0; u < features.size(); ++u) {
    std::copy(features[u].data.begin(), features[u].data.end(),
              x.begin() + row * dim);
    std::copy(labels[u].begin(), labels[u].end(), y.begin() + row);
    row += features[u].frames;
  }

  FrameClassifier model(dim, n_classes, std::move(class_names));
  Rng rng = Rng(options.seed).substream("classifier-init");
  for (auto& w : model.weights_) w = 0.01 * rng.gaussian();

  const size_t wcols = dim + 1;
  std::vector<double> grad(model.weights_.size());
  std::vector<double> z(n_classes);

  const auto evaluate = [&](const std::vector<double>& w, bool with_grad,
                            std::vector<double>* g) {
    if (with_grad) std::fill(g->begin(), g->end(), 0.0);
    double loss = 0.0;
    for (size_t i = 0; i < n_frames; ++i) {
      const double* xi = x.data() + i * dim;
      for (size_t k = 0; k < n_classes; ++k) {
        const double* wk = w.data() + k * wcols;
        double dot = wk[dim];  // bias
        for (size_t d = 0; d < dim; ++d) dot += wk[d] * xi[d];
        z[k] = dot;
      }
      softmax(z);
      loss -= std::log(std::max(z[y[i]], 1e-300));
      if (with_grad) {
        for (size_t k = 0; k < n_classes; ++k) {
          const double err = z[k] - (static_cast<size_t>(y[i]) == k ? 1.0 : 0.0);
          double* gk = g->data() + k * wcols;
          for (size_t d = 0; d < dim; ++d) gk[d] += err * xi[d];
          gk[dim] += err;
        }
      }
    }
    loss /= static_cast<double>(n_frames);
    if (with_grad) {
      for (auto& v : *g) v /= static_cast<double>(n_frames);
    }
    // L2 on everything but the biases.
    for (size_t k = 0; k < n_classes; ++k) {
      for (size_t d = 0; d < dim; ++d) {
        const double wv = w[k * wcols + d];
        loss += 0.5 * options.l2 * wv * wv;
        if (with_grad) (*g)[k * wcols + d] += options.l2 * wv;
      }
    }
    return loss;
  };

  double lr = options.learning_rate;
  double loss = evaluate(model.weights_, true, &grad);
  std::vector<double> candidate(model.weights_.size());
  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    // Backtracking step: halve the rate until the loss does not increase.
    double new_loss = 0.0;
    while (true) {
      for (size_t i = 0; i < candidate.size(); ++i) {
        candidate[i] = model.weights_[i] - lr * grad[i];
      }
      new_loss = evaluate(candidate, false, nullptr);
      if (new_loss <= loss || lr < 1e-12) break;
      lr *= 0.5;
    }
    model.weights_.swap(candidate);
    const double improvement = loss - new_loss;
    const bool converged = improvement / std::max(std::abs(loss), 1e-12) <
                           options.rel_tolerance;
    loss = new_loss;
    if (converged) break;
    if (epoch + 1 < options.max_epochs) {
      loss = evaluate(model.weights_, true, &grad);
      lr *= 1.05;  // recover rate lost to backtracking
    }
  }
  model.final_loss_ = loss;
  return model;
}

Posteriorgram FrameClassifier::predict(const FeatureMatrix& features) const {
  if (features.dims != dim_) {
    throw ValueError("predict: feature dim " + std::to_string(features.dims) +
                     " does not match model dim " + std::to_string(dim_));
  }
  Posteriorgram p;
  p.frames = features.frames;
  p.classes = classes_;
  p.frame_shift = features.frame_shift;
  p.labels = labels_;
  p.probs.resize(p.frames * p.classes);
  std::vector<double> z(classes_);
  const size_t wcols = dim_ + 1;
  for (size_t t = 0; t < features.frames; ++t) {
    const double* xt = features.data.data() + t * dim_;
    for (size_t k = 0; k < classes_; ++k) {
      const double* wk = weights_.data() + k * wcols;
      double dot = wk[dim_];
      for (size_t d = 0; d < dim_; ++d) dot += wk[d] * xt[d];
      z[k] = dot;
    }
    softmax(z);
    std::copy(z.begin(), z.end(), p.probs.begin() + t * classes_);
  }
  return p;
}

Posteriorgram predict_posteriors(const FrameClassifier& model,
                                 const FeatureMatrix& features) {
  return model.predict(features);
}

void FrameClassifier::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  put_bytes(out, kModelMagic, 4);
  put_u16(out, kVersion);
  put_u32(out, static_cast<uint32_t>(classes_));
  put_u32(out, static_cast<uint32_t>(dim_));
  for (size_t k = 0; k < classes_; ++k) {
    const std::string& label = labels_.empty() ? std::string() : labels_[k];
    put_u32(out, static_cast<uint32_t>(label.size()));
    put_bytes(out, label.data(), label.size());
  }
  for (double w : weights_) put_f64(out, w);
  if (!out) throw IoError("write failed: " + path);
}

FrameClassifier FrameClassifier::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  need(in, path);
  if (std::memcmp(magic, kModelMagic, 4) != 0) {
    throw FormatError("bad magic (expected SPFC): " + path);
  }
  const uint16_t version = get_u16(in, path);
  if (version != kVersion) {
    throw FormatError("unsupported model version: " + path);
  }
  const uint32_t classes = get_u32(in, path);
  const uint32_t dim = get_u32(in, path);
  std::vector<std::string> labels(classes);
  for (auto& l : labels) l = get_label(in, path);
  FrameClassifier model(dim, classes, std::move(labels));
  for (auto& w : model.weights_) w = get_f64(in, path);
  return model;
}

}  // namespace sipred
