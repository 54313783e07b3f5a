#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sketchlab/image.hpp"
#include "sketchlab/rng.hpp"
#include "sketchlab/tensor.hpp"

namespace sketchlab {

// --- error taxonomy for file ingestion --------------------------------------

// Header/magic is not what the format requires.
class FormatError : public Error {
 public:
  using Error::Error;
};
// Structurally valid file with the wrong dimensions or inconsistent counts.
class DimensionError : public Error {
 public:
  using Error::Error;
};
// File ends before the declared payload.
class TruncatedError : public Error {
 public:
  using Error::Error;
};

// --- PGM (binary P5, 64x64, maxval 255) -------------------------------------

void write_pgm(const SkeletonImage& img, const std::string& path);
SkeletonImage read_pgm(const std::string& path);

// --- dataset index (CSV: filename,species,seed) ------------------------------

struct DatasetEntry {
  std::string filename;
  std::string species;
  uint64_t seed = 0;
};

struct DatasetIndex {
  std::string root;
  std::vector<DatasetEntry> entries;
};

void write_index(const DatasetIndex& index);
// Reads <root>/index.csv and verifies every referenced file exists.
DatasetIndex read_index(const std::string& root);

// Dataset resident in memory.  `labels` index into `label_names`.
struct LoadedDataset {
  std::vector<SkeletonImage> images;
  std::vector<int> labels;
  std::vector<std::string> label_names;

  size_t size() const { return images.size(); }
};

// Loads all images referenced by the index; optionally keeps only the listed
// species (names must exist in the index).
LoadedDataset load_dataset(const DatasetIndex& index,
                           const std::vector<std::string>& species_filter = {});

// --- MNIST IDX ---------------------------------------------------------------

// Reads the standard IDX pair; 28x28 digits are centered unchanged onto the
// 64x64 canvas, intensities scaled to [0,1].
LoadedDataset read_idx(const std::string& images_path,
                       const std::string& labels_path);

// --- binarisation -------------------------------------------------------------

// pixel <- 1 iff intensity >= threshold.
SkeletonImage binarise(const SkeletonImage& img, double threshold = 0.6);

// --- batching ------------------------------------------------------------------

struct MiniBatch {
  Tensor images;            // [B, 64, 64]
  std::vector<int> labels;  // B entries
};

// One epoch of seeded-shuffle batches; a single-consumer iterator.  Every
// sample appears exactly once per epoch; the final batch may be short.
class BatchStream {
 public:
  BatchStream(const LoadedDataset& data, int batch_size, uint64_t epoch_seed);

  std::optional<MiniBatch> next();
  int num_batches() const;

 private:
  const LoadedDataset& data_;
  int batch_size_;
  std::vector<int> order_;
  size_t pos_ = 0;
};

}  // namespace sketchlab
