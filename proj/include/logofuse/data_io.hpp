#pragma once

// Dataset manifests, caption files, the binary embedding format, and the
// synthetic generator used by the desk-scale experiments.
//
// Manifest and caption files are JSON Lines. An optional header line carrying
// "num_classes" may precede the records; without it the class count is derived
// from the labels (which must be dense 0..K-1 either way).
//
// Embedding file layout:
//   magic "LGF1" | u32 N | u32 C | N x (u16 len, utf-8 id) | N*C f32, all LE

#include "logofuse/tensor.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lf::data {

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

enum class Split { kTrain, kGallery, kQuery };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

enum class PromptKind { kOcr, kBrief, kDetail };

std::string prompt_kind_name(PromptKind k);
PromptKind prompt_kind_from_name(const std::string& name);

struct PixelGrid {
  int h = 0;
  int w = 0;
  std::vector<double> data;  // h*w values in [0, 1]
};

struct ImageRecord {
  std::string id;
  int label = 0;
  Split split = Split::kTrain;
  std::vector<double> features;       // set in feature mode
  std::optional<PixelGrid> pixels;    // set in pixel mode
  bool has_features() const { return !features.empty(); }
};

struct CaptionRecord {
  std::string image_id;
  PromptKind prompt_type = PromptKind::kBrief;
  std::string text;
};

struct Manifest {
  int num_classes = 0;
  std::vector<ImageRecord> records;
  std::vector<std::string> caption_files;

  const ImageRecord* find(const std::string& id) const;
  std::vector<const ImageRecord*> split_records(Split s) const;
};

// Caption lookup keyed by (image_id, prompt_type).
class CaptionSet {
 public:
  void add(CaptionRecord rec);
  const std::string* find(const std::string& image_id, PromptKind kind) const;
  size_t size() const { return by_key_.size(); }
  bool has(const std::string& image_id, PromptKind kind) const {
    return find(image_id, kind) != nullptr;
  }

 private:
  std::map<std::pair<std::string, int>, std::string> by_key_;
};

Manifest load_manifest(const std::string& path,
                       const std::vector<std::string>& caption_files = {});
void write_manifest(const Manifest& m, const std::string& path);

std::vector<CaptionRecord> load_captions(const std::string& path);
void write_captions(const std::vector<CaptionRecord>& recs, const std::string& path);
CaptionSet caption_set_for(const Manifest& m);
CaptionSet caption_set_from(const std::vector<CaptionRecord>& recs);

void write_embeddings(const std::string& path, const std::vector<std::string>& ids,
                      const Tensor& matrix);
std::pair<std::vector<std::string>, TensorPtr> read_embeddings(const std::string& path);

struct SyntheticSpec {
  int num_classes = 8;
  int samples_per_class = 40;
  int visual_dim = 32;
  double visual_noise = 0.1;
  std::vector<std::pair<int, int>> confusable_pairs;
  double caption_informativeness = 1.0;
  uint64_t seed = 1;

  void validate() const;
};

struct SyntheticDataset {
  Manifest manifest;
  std::vector<CaptionRecord> captions;
  std::vector<std::vector<double>> prototypes;  // per class, unit norm
};

// Pure function of the spec. Confusable classes receive visual prototypes
// within L2 distance 0.05*|prototype| of each other; their captions differ in
// the class-identifying token with probability caption_informativeness and are
// otherwise identical.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

// class index -> deterministic brand-like token, shared with the mock captioner
std::string synthetic_class_token(int label);

}  // namespace lf::data
