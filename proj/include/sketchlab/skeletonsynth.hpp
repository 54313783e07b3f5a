#pragma once

#include <array>
#include <string>
#include <vector>

#include "sketchlab/dataio.hpp"
#include "sketchlab/image.hpp"

namespace sketchlab {

// Procedural generator for labelled binary tree-skeleton images: recursive
// 2D branch growth in the unit square, rasterized to unit-width 64x64
// strokes, then morphologically thinned to a stable medial axis.

struct SpeciesParams {
  std::string species_name;
  double trunk_length = 0.4;      // fraction of image height, in (0,1)
  int split_levels = 2;           // recursion depth, at most 2
  int branches_per_split = 2;     // children per branch, >= 1
  double branch_angle_mean = 0.7;    // radians off the parent direction
  double branch_angle_jitter = 0.1;  // radians, >= 0
  double length_decay = 0.65;        // child length ratio, in (0,1)
  double curvature = 0.02;           // radians of bend per growth step
  double droop = 0.0;    // signed bias added to branch angles per split level
  double jitter_scale = 1.0;  // global noise amplitude, >= 0
};

// Throws on invariant violations (split depth, ranges).
void validate_params(const SpeciesParams& p);

// The fifteen built-in species recipes (pure function, stable order).
const std::vector<SpeciesParams>& species_presets();

struct SkeletonTree {
  std::string species_name;
  uint64_t seed = 0;
  // Each polyline is a connected branch; every child's first vertex is a
  // vertex of its parent polyline, so the whole tree is connected.
  std::vector<std::vector<std::array<double, 2>>> segments;
};

// Deterministic recursive growth rooted at bottom-center (0.5, 0).
SkeletonTree grow_skeleton(const SpeciesParams& p, uint64_t seed);

// Unit-width 8-connected strokes on the 64x64 grid; (x,y) in the unit square
// maps to column round(63x), row round(63(1-y)) (y up, row 0 at the top).
SkeletonImage rasterize(const SkeletonTree& tree);

// Two-subiteration morphological thinning run to a fixed point; rejects
// non-binary input; preserves 8-connectivity; idempotent.
SkeletonImage thin(const SkeletonImage& img);

// grow -> rasterize -> thin, with output invariants enforced (binary, one
// 8-connected component, sane foreground fraction).
SkeletonImage synth_image(const SpeciesParams& p, uint64_t seed);

// Writes per_species images for every preset plus index.csv into out_dir.
// Deterministic: per-sample seeds are derived by hashing (seed, species, i).
DatasetIndex generate_dataset(int per_species, uint64_t seed,
                              const std::string& out_dir);

// Filesystem-safe stem for a species display name ("White Birch" -> "white_birch").
std::string species_file_stem(const std::string& species_name);

}  // namespace sketchlab
