#include "sketchlab/skeletonsynth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "sketchlab/rng.hpp"

namespace sketchlab {

namespace {
constexpr int kStepsPerBranch = 12;
}

void validate_params(const SpeciesParams& p) {
  SK_CHECK(!p.species_name.empty(), "species needs a name");
  SK_CHECK(p.trunk_length > 0.0 && p.trunk_length < 1.0,
           "trunk_length must be in (0,1), got " << p.trunk_length);
  SK_CHECK(p.split_levels >= 0 && p.split_levels <= 2,
           "split_levels must be in [0,2], got " << p.split_levels);
  SK_CHECK(p.branches_per_split >= 1,
           "branches_per_split must be >= 1, got " << p.branches_per_split);
  SK_CHECK(p.branch_angle_jitter >= 0.0, "branch_angle_jitter must be >= 0");
  SK_CHECK(p.length_decay > 0.0 && p.length_decay < 1.0,
           "length_decay must be in (0,1), got " << p.length_decay);
  SK_CHECK(p.jitter_scale >= 0.0, "jitter_scale must be >= 0");
}

const std::vector<SpeciesParams>& species_presets() {
  // Hand-tuned recipes; silhouettes range from tiered conifers (Cedar,
  // Larch, Pine: many near-horizontal children, strong length decay) to
  // broadleaf crowns (narrow-angled Elm/Aspen, weeping Callistemon/Birch).
  static const std::vector<SpeciesParams> presets = {
      {"Acacia", 0.32, 2, 3, 0.95, 0.10, 0.62, 0.010, -0.18, 1.0},
      {"Beech", 0.34, 2, 3, 0.62, 0.09, 0.68, 0.015, 0.05, 1.0},
      {"Callistemon", 0.38, 2, 2, 0.70, 0.08, 0.72, 0.035, 0.30, 1.2},
      {"Cedar", 0.50, 2, 4, 1.15, 0.07, 0.50, 0.008, 0.10, 0.8},
      {"Chestnut", 0.33, 2, 3, 0.75, 0.10, 0.66, 0.018, 0.02, 1.0},
      {"Elm", 0.40, 2, 3, 0.48, 0.08, 0.70, 0.012, -0.10, 1.0},
      {"Japanese Maple", 0.28, 2, 3, 1.00, 0.12, 0.72, 0.045, 0.12, 1.2},
      {"Kauri", 0.55, 2, 2, 0.85, 0.08, 0.48, 0.006, -0.05, 0.7},
      {"Larch", 0.52, 2, 4, 1.25, 0.06, 0.48, 0.010, 0.22, 0.8},
      {"Linden", 0.36, 2, 3, 0.66, 0.09, 0.70, 0.014, 0.08, 1.0},
      {"Pine", 0.50, 2, 3, 1.30, 0.08, 0.45, 0.008, 0.05, 0.8},
      {"Quaking Aspen", 0.46, 2, 2, 0.42, 0.07, 0.68, 0.010, -0.08, 1.0},
      {"Small Maple", 0.26, 2, 3, 0.82, 0.11, 0.70, 0.020, 0.06, 1.2},
      {"Teak", 0.35, 2, 2, 0.72, 0.09, 0.64, 0.030, 0.04, 1.0},
      {"White Birch", 0.44, 2, 2, 0.50, 0.08, 0.66, 0.022, 0.18, 1.1},
  };
  return presets;
}

namespace {

struct GrownBranch {
  std::vector<std::array<double, 2>> pts;
  std::vector<double> angles;  // tangent direction at each vertex
};

// Grow one branch as a polyline of kStepsPerBranch short steps whose
// direction drifts by per-step curvature (bending away from the parent on
// the branch's own side) plus seeded noise.
GrownBranch grow_branch(const SpeciesParams& p, Rng& rng,
                        std::array<double, 2> pos, double angle, double side,
                        double length) {
  GrownBranch br;
  br.pts.push_back(pos);
  br.angles.push_back(angle);
  double step = length / kStepsPerBranch;
  double a = angle;
  for (int i = 0; i < kStepsPerBranch; ++i) {
    a += side * p.curvature + p.jitter_scale * 0.06 * rng.gaussian();
    pos[0] = std::clamp(pos[0] + step * std::cos(a), 0.0, 1.0);
    pos[1] = std::clamp(pos[1] + step * std::sin(a), 0.0, 1.0);
    br.pts.push_back(pos);
    br.angles.push_back(a);
  }
  return br;
}

void grow_recursive(const SpeciesParams& p, Rng& rng, int depth,
                    std::array<double, 2> pos, double angle, double side,
                    double length, SkeletonTree& tree) {
  GrownBranch br = grow_branch(p, rng, pos, angle, side, length);
  tree.segments.push_back(br.pts);
  if (depth >= p.split_levels) return;

  int n = p.branches_per_split;
  for (int k = 0; k < n; ++k) {
    // Children attach at vertices of the upper half of this branch, the last
    // one at the tip; attaching at shared vertices keeps rasterized pixels
    // connected by construction.
    double frac = n == 1 ? 1.0 : 0.5 + 0.5 * (k + 1) / n;
    frac = std::clamp(frac + p.jitter_scale * 0.05 * rng.gaussian(), 0.3, 1.0);
    int vi = std::clamp(
        static_cast<int>(std::lround(frac * kStepsPerBranch)), 1,
        kStepsPerBranch);

    // Alternate sides; with an odd child count the last child continues
    // straight, so the signed-offset multiset is mirror-symmetric whenever
    // the jitters are zero.  Droop widens (or, if negative, narrows) the
    // offsets of deeper split levels.
    double child_side, offset;
    if (n % 2 == 1 && k == n - 1) {
      child_side = 0.0;
      offset = 0.0;
    } else {
      child_side = (k % 2 == 0) ? 1.0 : -1.0;
      offset = child_side * (p.branch_angle_mean + p.droop * depth);
    }
    offset += p.branch_angle_jitter * rng.gaussian();

    double child_len = length * p.length_decay *
                       std::clamp(1.0 + 0.2 * p.jitter_scale * rng.gaussian(),
                                  0.75, 1.3);
    grow_recursive(p, rng, depth + 1, br.pts[vi], br.angles[vi] + offset,
                   child_side == 0.0 ? side : child_side, child_len, tree);
  }
}

}  // namespace

SkeletonTree grow_skeleton(const SpeciesParams& p, uint64_t seed) {
  validate_params(p);
  SkeletonTree tree;
  tree.species_name = p.species_name;
  tree.seed = seed;
  Rng rng(seed);
  double trunk_len =
      p.trunk_length *
      std::clamp(1.0 + 0.15 * p.jitter_scale * rng.gaussian(), 0.75, 1.3);
  double lean = p.jitter_scale * 0.05 * rng.gaussian();
  grow_recursive(p, rng, 0, {0.5, 0.0}, std::numbers::pi / 2 + lean, 0.0,
                 trunk_len, tree);
  return tree;
}

namespace {

// Bresenham, 8-connected by construction.
void draw_line(SkeletonImage& img, int r0, int c0, int r1, int c1) {
  int dc = std::abs(c1 - c0), sc = c0 < c1 ? 1 : -1;
  int dr = -std::abs(r1 - r0), sr = r0 < r1 ? 1 : -1;
  int err = dc + dr;
  for (;;) {
    img.set(r0, c0, 1.0);
    if (r0 == r1 && c0 == c1) break;
    int e2 = 2 * err;
    if (e2 >= dr) {
      err += dr;
      c0 += sc;
    }
    if (e2 <= dc) {
      err += dc;
      r0 += sr;
    }
  }
}

int to_col(double x) {
  return std::clamp(
      static_cast<int>(std::lround(x * (kImageSize - 1))), 0, kImageSize - 1);
}
int to_row(double y) {
  return std::clamp(
      static_cast<int>(std::lround((1.0 - y) * (kImageSize - 1))), 0,
      kImageSize - 1);
}

}  // namespace

SkeletonImage rasterize(const SkeletonTree& tree) {
  SkeletonImage img;
  for (const auto& line : tree.segments) {
    for (size_t i = 0; i + 1 < line.size(); ++i) {
      SK_CHECK(line[i][0] >= 0 && line[i][0] <= 1 && line[i][1] >= 0 &&
                   line[i][1] <= 1,
               "tree coordinates must lie in the unit square");
      draw_line(img, to_row(line[i][1]), to_col(line[i][0]),
                to_row(line[i + 1][1]), to_col(line[i + 1][0]));
    }
  }
  return img;
}

namespace {

// One thinning sub-iteration; `phase` 0 deletes south/east-biased boundary
// pixels, phase 1 the north/west-biased ones.  Returns true if any pixel
// was removed.
bool thin_pass(SkeletonImage& img, int phase) {
  std::vector<int> kill;
  for (int r = 0; r < kImageSize; ++r) {
    for (int c = 0; c < kImageSize; ++c) {
      if (!img.on(r, c)) continue;
      // Neighbors clockwise from north: p2..p9.
      int p[8] = {img.on(r - 1, c),     img.on(r - 1, c + 1),
                  img.on(r, c + 1),     img.on(r + 1, c + 1),
                  img.on(r + 1, c),     img.on(r + 1, c - 1),
                  img.on(r, c - 1),     img.on(r - 1, c - 1)};
      int b = 0;
      for (int i = 0; i < 8; ++i) b += p[i];
      if (b < 2 || b > 6) continue;
      int a = 0;  // 0->1 transitions around the ring
      for (int i = 0; i < 8; ++i)
        if (!p[i] && p[(i + 1) % 8]) ++a;
      if (a != 1) continue;
      bool cond = phase == 0 ? (p[0] * p[2] * p[4] == 0 && p[2] * p[4] * p[6] == 0)
                             : (p[0] * p[2] * p[6] == 0 && p[0] * p[4] * p[6] == 0);
      if (cond) kill.push_back(r * kImageSize + c);
    }
  }
  for (int i : kill) img.px[i] = 0.0;
  return !kill.empty();
}

}  // namespace

SkeletonImage thin(const SkeletonImage& img) {
  SK_CHECK(img.is_binary(), "thinning requires a binary image");
  SkeletonImage out = img;
  bool changed = true;
  while (changed) {
    changed = false;
    if (thin_pass(out, 0)) changed = true;
    if (thin_pass(out, 1)) changed = true;
  }
  return out;
}

SkeletonImage synth_image(const SpeciesParams& p, uint64_t seed) {
  SkeletonImage img = thin(rasterize(grow_skeleton(p, seed)));
  SK_CHECK(count_components8(img) == 1,
           "generated skeleton must be one connected component ("
               << p.species_name << ", seed " << seed << ")");
  double frac = img.foreground_fraction();
  SK_CHECK(frac > 0.005 && frac < 0.25,
           "degenerate foreground fraction " << frac << " (" << p.species_name
                                             << ", seed " << seed << ")");
  return img;
}

std::string species_file_stem(const std::string& species_name) {
  std::string out;
  for (char ch : species_name)
    out += ch == ' ' ? '_' : static_cast<char>(std::tolower(
                                  static_cast<unsigned char>(ch)));
  return out;
}

DatasetIndex generate_dataset(int per_species, uint64_t seed,
                              const std::string& out_dir) {
  SK_CHECK(per_species >= 1, "per_species must be >= 1");
  std::filesystem::create_directories(out_dir);
  DatasetIndex index;
  index.root = out_dir;
  const auto& presets = species_presets();
  for (size_t s = 0; s < presets.size(); ++s) {
    std::string stem = species_file_stem(presets[s].species_name);
    for (int i = 0; i < per_species; ++i) {
      uint64_t key[3] = {seed, static_cast<uint64_t>(s),
                         static_cast<uint64_t>(i)};
      uint64_t sample_seed = fnv1a64(key, sizeof(key));
      SkeletonImage img = synth_image(presets[s], sample_seed);
      char name[128];
      std::snprintf(name, sizeof(name), "%s_%05d.pgm", stem.c_str(), i);
      write_pgm(img, out_dir + "/" + name);
      index.entries.push_back({name, presets[s].species_name, sample_seed});
    }
  }
  write_index(index);
  return index;
}

}  // namespace sketchlab
