#include "logofuse/data_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace lf::data {

using nlohmann::json;

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kGallery: return "gallery";
    case Split::kQuery: return "query";
  }
  return "train";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "gallery") return Split::kGallery;
  if (name == "query") return Split::kQuery;
  throw IoError("unknown split '" + name + "'");
}

std::string prompt_kind_name(PromptKind k) {
  switch (k) {
    case PromptKind::kOcr: return "ocr";
    case PromptKind::kBrief: return "brief";
    case PromptKind::kDetail: return "detail";
  }
  return "brief";
}

PromptKind prompt_kind_from_name(const std::string& name) {
  if (name == "ocr") return PromptKind::kOcr;
  if (name == "brief") return PromptKind::kBrief;
  if (name == "detail") return PromptKind::kDetail;
  throw IoError("unknown prompt_type '" + name + "'");
}

const ImageRecord* Manifest::find(const std::string& id) const {
  for (const auto& r : records) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

std::vector<const ImageRecord*> Manifest::split_records(Split s) const {
  std::vector<const ImageRecord*> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

void CaptionSet::add(CaptionRecord rec) {
  by_key_[{rec.image_id, static_cast<int>(rec.prompt_type)}] = std::move(rec.text);
}

const std::string* CaptionSet::find(const std::string& image_id, PromptKind kind) const {
  auto it = by_key_.find({image_id, static_cast<int>(kind)});
  return it == by_key_.end() ? nullptr : &it->second;
}

namespace {

json parse_line(const std::string& path, int line_no, const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw IoError(path + " line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
  }
}

ImageRecord record_from_json(const std::string& path, int line_no, const json& j) {
  ImageRecord rec;
  try {
    rec.id = j.at("id").get<std::string>();
    rec.label = j.at("label").get<int>();
    rec.split = split_from_name(j.at("split").get<std::string>());
    if (j.contains("features")) {
      rec.features = j.at("features").get<std::vector<double>>();
    } else if (j.contains("pixels")) {
      PixelGrid grid;
      grid.h = j.at("pixels").at("h").get<int>();
      grid.w = j.at("pixels").at("w").get<int>();
      grid.data = j.at("pixels").at("data").get<std::vector<double>>();
      if (grid.h <= 0 || grid.w <= 0 ||
          grid.data.size() != static_cast<size_t>(grid.h) * grid.w) {
        throw IoError("pixel grid dimensions do not match data length");
      }
      rec.pixels = std::move(grid);
    } else {
      throw IoError("record needs either 'features' or 'pixels'");
    }
  } catch (const json::exception& e) {
    throw IoError(path + " line " + std::to_string(line_no) + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(path + " line " + std::to_string(line_no) + ": " + e.what());
  }
  if (rec.label < 0) {
    throw IoError(path + " line " + std::to_string(line_no) + ": negative label for id '" +
                  rec.id + "'");
  }
  for (double v : rec.features) {
    if (!std::isfinite(v)) {
      throw IoError(path + " line " + std::to_string(line_no) + ": non-finite feature in '" +
                    rec.id + "'");
    }
  }
  return rec;
}

}  // namespace

Manifest load_manifest(const std::string& path, const std::vector<std::string>& caption_files) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");

  Manifest m;
  std::optional<int> declared_classes;
  std::set<std::string> seen_ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(path, line_no, line);
    if (line_no == 1 && j.contains("num_classes") && !j.contains("id")) {
      declared_classes = j.at("num_classes").get<int>();
      continue;
    }
    ImageRecord rec = record_from_json(path, line_no, j);
    if (!seen_ids.insert(rec.id).second) {
      throw IoError(path + " line " + std::to_string(line_no) + ": duplicate id '" + rec.id + "'");
    }
    m.records.push_back(std::move(rec));
  }
  if (m.records.empty()) throw IoError("manifest '" + path + "' contains no records");

  int max_label = 0;
  std::set<int> labels;
  for (const auto& r : m.records) {
    max_label = std::max(max_label, r.label);
    labels.insert(r.label);
  }
  m.num_classes = declared_classes.value_or(max_label + 1);
  for (const auto& r : m.records) {
    if (r.label >= m.num_classes) {
      throw IoError("manifest '" + path + "': label " + std::to_string(r.label) + " of id '" +
                    r.id + "' exceeds num_classes " + std::to_string(m.num_classes));
    }
  }
  for (int c = 0; c < m.num_classes; ++c) {
    if (!labels.count(c)) {
      throw IoError("manifest '" + path + "': class indices are not dense, missing " +
                    std::to_string(c));
    }
  }

  // features/pixels must be homogeneous so one encoder config fits all records
  const bool feature_mode = m.records.front().has_features();
  size_t dim = feature_mode ? m.records.front().features.size() : 0;
  for (const auto& r : m.records) {
    if (r.has_features() != feature_mode) {
      throw IoError("manifest '" + path + "': mixed feature/pixel records ('" + r.id + "')");
    }
    if (feature_mode && r.features.size() != dim) {
      throw IoError("manifest '" + path + "': feature length of '" + r.id +
                    "' differs from first record");
    }
  }

  m.caption_files = caption_files;
  for (const auto& cf : caption_files) {
    for (const auto& rec : load_captions(cf)) {
      if (!seen_ids.count(rec.image_id)) {
        throw IoError("caption file '" + cf + "': image_id '" + rec.image_id +
                      "' not present in manifest");
      }
    }
  }
  return m;
}

void write_manifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  json header;
  header["num_classes"] = m.num_classes;
  out << header.dump() << "\n";
  for (const auto& r : m.records) {
    json j;
    j["id"] = r.id;
    j["label"] = r.label;
    j["split"] = split_name(r.split);
    if (r.has_features()) {
      j["features"] = r.features;
    } else if (r.pixels) {
      j["pixels"] = {{"h", r.pixels->h}, {"w", r.pixels->w}, {"data", r.pixels->data}};
    }
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

std::vector<CaptionRecord> load_captions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open caption file '" + path + "'");
  std::vector<CaptionRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(path, line_no, line);
    CaptionRecord rec;
    try {
      rec.image_id = j.at("image_id").get<std::string>();
      rec.prompt_type = prompt_kind_from_name(j.at("prompt_type").get<std::string>());
      rec.text = j.at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw IoError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_captions(const std::vector<CaptionRecord>& recs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& r : recs) {
    json j;
    j["image_id"] = r.image_id;
    j["prompt_type"] = prompt_kind_name(r.prompt_type);
    j["text"] = r.text;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

CaptionSet caption_set_for(const Manifest& m) {
  CaptionSet set;
  for (const auto& path : m.caption_files) {
    for (auto& rec : load_captions(path)) set.add(std::move(rec));
  }
  return set;
}

CaptionSet caption_set_from(const std::vector<CaptionRecord>& recs) {
  CaptionSet set;
  for (const auto& rec : recs) set.add(rec);
  return set;
}

namespace {

constexpr char kEmbeddingMagic[4] = {'L', 'G', 'F', '1'};

void put_u16(std::ostream& out, uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

uint16_t get_u16(std::istream& in, const std::string& path) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) throw IoError("truncated embedding file '" + path + "'");
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated embedding file '" + path + "'");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_embeddings(const std::string& path, const std::vector<std::string>& ids,
                      const Tensor& matrix) {
  const int n = ids.empty() ? 0 : matrix.rows();
  const int c = ids.empty() ? 0 : matrix.cols();
  if (!ids.empty() && matrix.rank() != 2) {
    throw IoError("write_embeddings: matrix must be rank 2");
  }
  if (static_cast<size_t>(n) != ids.size()) {
    throw IoError("write_embeddings: " + std::to_string(ids.size()) + " ids vs " +
                  std::to_string(n) + " rows");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kEmbeddingMagic, 4);
  put_u32(out, static_cast<uint32_t>(n));
  put_u32(out, static_cast<uint32_t>(c));
  for (const auto& id : ids) {
    if (id.size() > 0xffff) throw IoError("write_embeddings: id longer than 65535 bytes");
    put_u16(out, static_cast<uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) {
      const float f = static_cast<float>(matrix.at(i, j));
      static_assert(sizeof(float) == 4);
      char buf[4];
      std::memcpy(buf, &f, 4);  // little-endian host
      out.write(buf, 4);
    }
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

std::pair<std::vector<std::string>, TensorPtr> read_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file '" + path + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kEmbeddingMagic, 4) != 0) {
    throw IoError("embedding file '" + path + "': magic mismatch");
  }
  const uint32_t n = get_u32(in, path);
  const uint32_t c = get_u32(in, path);
  if (static_cast<uint64_t>(n) * c > (1ull << 28)) {
    throw IoError("embedding file '" + path + "': dimensions overflow sanity bound");
  }
  std::vector<std::string> ids(n);
  for (uint32_t i = 0; i < n; ++i) {
    const uint16_t len = get_u16(in, path);
    ids[i].resize(len);
    if (len > 0 && !in.read(ids[i].data(), len)) {
      throw IoError("truncated embedding file '" + path + "'");
    }
  }
  std::vector<double> data(static_cast<size_t>(n) * c);
  for (size_t i = 0; i < data.size(); ++i) {
    char buf[4];
    if (!in.read(buf, 4)) throw IoError("truncated embedding file '" + path + "'");
    float f;
    std::memcpy(&f, buf, 4);
    data[i] = static_cast<double>(f);
  }
  char extra;
  if (in.read(&extra, 1)) {
    throw IoError("embedding file '" + path + "': trailing bytes after payload");
  }
  if (n == 0) {
    return {ids, nullptr};
  }
  return {ids, Tensor::matrix(static_cast<int>(n), static_cast<int>(c), std::move(data))};
}

void SyntheticSpec::validate() const {
  if (num_classes < 1) throw IoError("synthetic spec: num_classes must be >= 1");
  if (samples_per_class < 1) throw IoError("synthetic spec: samples_per_class must be >= 1");
  if (visual_dim < 2) throw IoError("synthetic spec: visual_dim must be >= 2");
  if (visual_noise < 0) throw IoError("synthetic spec: visual_noise must be >= 0");
  if (caption_informativeness < 0 || caption_informativeness > 1) {
    throw IoError("synthetic spec: caption_informativeness must lie in [0, 1]");
  }
  std::set<int> used;
  for (auto [a, b] : confusable_pairs) {
    if (a < 0 || b < 0 || a >= num_classes || b >= num_classes || a == b) {
      throw IoError("synthetic spec: confusable pair (" + std::to_string(a) + ", " +
                    std::to_string(b) + ") references invalid classes");
    }
    if (!used.insert(a).second || !used.insert(b).second) {
      throw IoError("synthetic spec: class appears in more than one confusable pair");
    }
  }
}

std::string synthetic_class_token(int label) {
  static const char* kSyllables[] = {"va", "zor", "mi", "ken", "lu",  "tor",
                                     "pex", "sha", "dri", "bel", "no", "fin"};
  constexpr int kBase = 12;
  std::string token;
  int v = label;
  do {
    token += kSyllables[v % kBase];
    v /= kBase;
  } while (v > 0);
  return token;
}

namespace {

std::vector<double> unit_gaussian_dir(Rng& rng, int dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
  } while (norm < 1e-9);
  for (auto& x : v) x /= norm;
  return v;
}

const char* kObjects[] = {"sneaker", "handbag", "jacket", "cap", "backpack", "watch"};
const char* kSurfaces[] = {"wooden table", "shelf", "white backdrop", "counter"};
const char* kDistractors[] = {"ribbons", "boxes",   "price tags", "fabric swatches",
                              "hangers", "baskets", "wrapping paper"};

std::string make_caption(PromptKind kind, const std::string& token, Rng& rng) {
  switch (kind) {
    case PromptKind::kOcr:
      return token;
    case PromptKind::kBrief:
      return "a photo of a " + token + " logo on a " +
             kObjects[rng.uniform_int(0, 5)] + ".";
    case PromptKind::kDetail: {
      const std::string obj = kObjects[rng.uniform_int(0, 5)];
      const std::string surf = kSurfaces[rng.uniform_int(0, 3)];
      const std::string d1 = kDistractors[rng.uniform_int(0, 6)];
      std::string d2 = kDistractors[rng.uniform_int(0, 6)];
      return "the image shows a " + obj + " resting on a " + surf +
             ". a small " + token + " mark is printed near the seam. the scene also contains " +
             d1 + " and " + d2 + " in the background.";
    }
  }
  return token;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset out;
  out.manifest.num_classes = spec.num_classes;

  std::vector<int> partner(spec.num_classes, -1);
  for (auto [a, b] : spec.confusable_pairs) {
    partner[a] = b;
    partner[b] = a;
  }

  Rng proto_rng(mix_seed(spec.seed, 0xa1));
  out.prototypes.resize(spec.num_classes);
  for (int c = 0; c < spec.num_classes; ++c) {
    if (partner[c] >= 0 && partner[c] < c) {
      // second member of a confusable pair: nudge the partner prototype
      auto dir = unit_gaussian_dir(proto_rng, spec.visual_dim);
      std::vector<double> p = out.prototypes[partner[c]];
      double norm = 0.0;
      for (int i = 0; i < spec.visual_dim; ++i) {
        p[i] += 0.03 * dir[i];
        norm += p[i] * p[i];
      }
      norm = std::sqrt(norm);
      for (auto& v : p) v /= norm;
      out.prototypes[c] = std::move(p);
    } else {
      out.prototypes[c] = unit_gaussian_dir(proto_rng, spec.visual_dim);
    }
  }

  const int per = spec.samples_per_class;
  const int n_gallery = std::max(1, per / 5);
  const int n_query = std::max(1, per / 5);
  const int n_train = per - n_gallery - n_query;
  if (n_train < 1) {
    throw IoError("synthetic spec: samples_per_class too small to populate all splits");
  }

  const double coord_sigma = 1.0 / std::sqrt(static_cast<double>(spec.visual_dim));
  for (int c = 0; c < spec.num_classes; ++c) {
    Rng noise_rng(mix_seed(spec.seed, 0xb000 + c));
    for (int s = 0; s < per; ++s) {
      ImageRecord rec;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "c%03d_s%03d", c, s);
      rec.id = buf;
      rec.label = c;
      rec.split = s < n_train ? Split::kTrain
                  : s < n_train + n_gallery ? Split::kGallery
                                            : Split::kQuery;
      rec.features.resize(spec.visual_dim);
      for (int i = 0; i < spec.visual_dim; ++i) {
        rec.features[i] =
            out.prototypes[c][i] + spec.visual_noise * coord_sigma * noise_rng.normal();
      }
      out.manifest.records.push_back(std::move(rec));
    }
  }

  // Caption randomness is keyed on the pair-canonical class so that, when the
  // informativeness draw says "uninformative", the two confusable captions come
  // out byte-identical.
  for (int c = 0; c < spec.num_classes; ++c) {
    const int canon = (partner[c] >= 0) ? std::min(c, partner[c]) : c;
    for (int s = 0; s < per; ++s) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "c%03d_s%03d", c, s);
      const std::string image_id = buf;
      for (PromptKind kind : {PromptKind::kOcr, PromptKind::kBrief, PromptKind::kDetail}) {
        Rng cap_rng(mix_seed(spec.seed,
                             0xc0000 + (static_cast<uint64_t>(canon) << 24) +
                                 (static_cast<uint64_t>(s) << 8) + static_cast<uint64_t>(kind)));
        const bool informative =
            partner[c] < 0 || cap_rng.uniform() < spec.caption_informativeness;
        const std::string token = synthetic_class_token(informative ? c : canon);
        out.captions.push_back({image_id, kind, make_caption(kind, token, cap_rng)});
      }
    }
  }

  return out;
}

}  // namespace lf::data
