#include "sketchlab/dataio.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace sketchlab {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Consume one whitespace/comment-delimited token from a PNM header.
std::string next_token(const std::string& s, size_t& pos) {
  while (pos < s.size()) {
    if (std::isspace(static_cast<unsigned char>(s[pos]))) {
      ++pos;
    } else if (s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  size_t start = pos;
  while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos])))
    ++pos;
  return s.substr(start, pos - start);
}

}  // namespace

void write_pgm(const SkeletonImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path);
  out << "P5\n" << kImageSize << " " << kImageSize << "\n255\n";
  for (double v : img.px) {
    double clamped = std::min(1.0, std::max(0.0, v));
    out.put(static_cast<char>(std::lround(clamped * 255.0)));
  }
  if (!out) throw Error("short write: " + path);
}

SkeletonImage read_pgm(const std::string& path) {
  std::string s = read_file(path);
  size_t pos = 0;
  if (next_token(s, pos) != "P5")
    throw FormatError("not a binary PGM (expected magic P5): " + path);
  std::string wtok = next_token(s, pos);
  std::string htok = next_token(s, pos);
  std::string mtok = next_token(s, pos);
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(wtok);
    h = std::stoi(htok);
    maxval = std::stoi(mtok);
  } catch (const std::exception&) {
    throw FormatError("unparseable PGM header fields: " + path);
  }
  if (maxval != 255)
    throw FormatError("PGM maxval must be 255, got " + std::to_string(maxval) +
                      ": " + path);
  if (w != kImageSize || h != kImageSize)
    throw DimensionError("PGM must be 64x64, got " + std::to_string(w) + "x" +
                         std::to_string(h) + ": " + path);
  ++pos;  // single whitespace byte after maxval precedes the payload
  if (s.size() - pos < static_cast<size_t>(kImagePixels))
    throw TruncatedError("PGM payload truncated: " + path);
  SkeletonImage img;
  for (int i = 0; i < kImagePixels; ++i)
    img.px[i] = static_cast<unsigned char>(s[pos + i]) / 255.0;
  return img;
}

void write_index(const DatasetIndex& index) {
  std::string path = index.root + "/index.csv";
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  out << "filename,species,seed\n";
  for (const auto& e : index.entries)
    out << e.filename << "," << e.species << "," << e.seed << "\n";
}

DatasetIndex read_index(const std::string& root) {
  std::string path = root + "/index.csv";
  std::ifstream in(path);
  if (!in) throw Error("cannot open index: " + path);
  DatasetIndex index;
  index.root = root;
  std::string line;
  if (!std::getline(in, line) || line != "filename,species,seed")
    throw FormatError("index header must be 'filename,species,seed': " + path);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t c1 = line.find(',');
    size_t c2 = line.rfind(',');
    if (c1 == std::string::npos || c2 == c1)
      throw FormatError("malformed index row: " + line);
    DatasetEntry e;
    e.filename = line.substr(0, c1);
    e.species = line.substr(c1 + 1, c2 - c1 - 1);
    e.seed = std::stoull(line.substr(c2 + 1));
    if (!std::filesystem::exists(root + "/" + e.filename))
      throw Error("index references missing file: " + e.filename);
    index.entries.push_back(std::move(e));
  }
  return index;
}

LoadedDataset load_dataset(const DatasetIndex& index,
                           const std::vector<std::string>& species_filter) {
  LoadedDataset out;
  auto keep = [&](const std::string& sp) {
    if (species_filter.empty()) return true;
    return std::find(species_filter.begin(), species_filter.end(), sp) !=
           species_filter.end();
  };
  for (const auto& e : index.entries) {
    if (!keep(e.species)) continue;
    int label = -1;
    for (size_t i = 0; i < out.label_names.size(); ++i)
      if (out.label_names[i] == e.species) label = static_cast<int>(i);
    if (label < 0) {
      label = static_cast<int>(out.label_names.size());
      out.label_names.push_back(e.species);
    }
    out.images.push_back(read_pgm(index.root + "/" + e.filename));
    out.labels.push_back(label);
  }
  if (!species_filter.empty()) {
    for (const auto& sp : species_filter)
      SK_CHECK(std::find(out.label_names.begin(), out.label_names.end(), sp) !=
                   out.label_names.end(),
               "species filter '" << sp << "' matched no dataset entries");
  }
  SK_CHECK(!out.images.empty(), "dataset is empty");
  return out;
}

namespace {

uint32_t read_be32(const std::string& s, size_t off, const std::string& path) {
  if (off + 4 > s.size()) throw TruncatedError("IDX header truncated: " + path);
  return (static_cast<uint32_t>(static_cast<unsigned char>(s[off])) << 24) |
         (static_cast<uint32_t>(static_cast<unsigned char>(s[off + 1])) << 16) |
         (static_cast<uint32_t>(static_cast<unsigned char>(s[off + 2])) << 8) |
         static_cast<uint32_t>(static_cast<unsigned char>(s[off + 3]));
}

}  // namespace

LoadedDataset read_idx(const std::string& images_path,
                       const std::string& labels_path) {
  std::string imgs = read_file(images_path);
  std::string labs = read_file(labels_path);
  if (read_be32(imgs, 0, images_path) != 0x00000803u)
    throw FormatError("IDX image magic mismatch (expected 0x803): " +
                      images_path);
  if (read_be32(labs, 0, labels_path) != 0x00000801u)
    throw FormatError("IDX label magic mismatch (expected 0x801): " +
                      labels_path);
  uint32_t n = read_be32(imgs, 4, images_path);
  uint32_t rows = read_be32(imgs, 8, images_path);
  uint32_t cols = read_be32(imgs, 12, images_path);
  uint32_t nl = read_be32(labs, 4, labels_path);
  if (n != nl)
    throw DimensionError("IDX image/label counts differ: " + std::to_string(n) +
                         " vs " + std::to_string(nl));
  if (rows > static_cast<uint32_t>(kImageSize) ||
      cols > static_cast<uint32_t>(kImageSize))
    throw DimensionError("IDX digits larger than 64x64: " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  size_t need = 16 + static_cast<size_t>(n) * rows * cols;
  if (imgs.size() < need)
    throw TruncatedError("IDX image payload truncated: " + images_path);
  if (labs.size() < 8 + n)
    throw TruncatedError("IDX label payload truncated: " + labels_path);

  int r0 = (kImageSize - static_cast<int>(rows)) / 2;
  int c0 = (kImageSize - static_cast<int>(cols)) / 2;
  LoadedDataset out;
  out.label_names = {"0", "1", "2", "3", "4", "5", "6", "7", "8", "9"};
  out.images.resize(n);
  out.labels.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    SkeletonImage& img = out.images[i];
    size_t base = 16 + static_cast<size_t>(i) * rows * cols;
    for (uint32_t r = 0; r < rows; ++r)
      for (uint32_t c = 0; c < cols; ++c)
        img.set(r0 + static_cast<int>(r), c0 + static_cast<int>(c),
                static_cast<unsigned char>(imgs[base + r * cols + c]) / 255.0);
    out.labels[i] = static_cast<unsigned char>(labs[8 + i]);
    SK_CHECK(out.labels[i] < 10, "IDX label out of range");
  }
  return out;
}

SkeletonImage binarise(const SkeletonImage& img, double threshold) {
  SkeletonImage out;
  for (int i = 0; i < kImagePixels; ++i)
    out.px[i] = img.px[i] >= threshold ? 1.0 : 0.0;
  return out;
}

BatchStream::BatchStream(const LoadedDataset& data, int batch_size,
                         uint64_t epoch_seed)
    : data_(data), batch_size_(batch_size) {
  SK_CHECK(batch_size >= 1, "batch size must be >= 1");
  SK_CHECK(data.size() > 0, "cannot batch an empty dataset");
  order_.resize(data.size());
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  Rng rng(epoch_seed);
  rng.shuffle(order_);
}

int BatchStream::num_batches() const {
  return static_cast<int>((order_.size() + batch_size_ - 1) / batch_size_);
}

std::optional<MiniBatch> BatchStream::next() {
  if (pos_ >= order_.size()) return std::nullopt;
  size_t end = std::min(order_.size(), pos_ + batch_size_);
  int b = static_cast<int>(end - pos_);
  MiniBatch batch;
  batch.images = Tensor({b, kImageSize, kImageSize});
  batch.labels.resize(b);
  for (int i = 0; i < b; ++i) {
    int idx = order_[pos_ + i];
    const auto& img = data_.images[idx];
    std::copy(img.px.begin(), img.px.end(),
              batch.images.data() + static_cast<long>(i) * kImagePixels);
    batch.labels[i] = data_.labels[idx];
  }
  pos_ = end;
  return batch;
}

}  // namespace sketchlab
