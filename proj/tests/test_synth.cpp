#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <map>
#include <set>

#include "doctest.h"
#include "sketchlab/skeletonsynth.hpp"

using namespace sketchlab;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("species presets: fifteen distinct valid recipes") {
  const auto& presets = species_presets();
  CHECK(presets.size() == 15);
  std::set<std::string> names;
  for (const auto& p : presets) {
    validate_params(p);
    CHECK(p.split_levels <= 2);
    names.insert(p.species_name);
  }
  CHECK(names.size() == 15);
  CHECK(names.count("Acacia") == 1);
  CHECK(names.count("Larch") == 1);
  CHECK(names.count("White Birch") == 1);
  // Pure function: repeated calls agree.
  CHECK(species_presets()[3].trunk_length == presets[3].trunk_length);
}

TEST_CASE("grow_skeleton is deterministic") {
  const auto& larch = species_presets()[8];
  REQUIRE(larch.species_name == "Larch");
  SkeletonTree a = grow_skeleton(larch, 7);
  SkeletonTree b = grow_skeleton(larch, 7);
  REQUIRE(a.segments.size() == b.segments.size());
  for (size_t i = 0; i < a.segments.size(); ++i)
    CHECK(a.segments[i] == b.segments[i]);
  SkeletonTree c = grow_skeleton(larch, 8);
  CHECK(a.segments != c.segments);
}

TEST_CASE("polyline count follows the recursion formula") {
  for (const auto& p : species_presets()) {
    SkeletonTree t = grow_skeleton(p, 1);
    size_t expect = 1;
    size_t level = 1;
    for (int d = 1; d <= p.split_levels; ++d) {
      level *= static_cast<size_t>(p.branches_per_split);
      expect += level;
    }
    CHECK(t.segments.size() == expect);
  }
  // Larch: 4 branches per split, depth 2 -> 1 + 4 + 16 = 21.
  SkeletonTree larch = grow_skeleton(species_presets()[8], 1);
  CHECK(larch.segments.size() == 21);
}

TEST_CASE("zero jitter yields a mirror-symmetric branch angle set") {
  SpeciesParams p;
  p.species_name = "test";
  p.trunk_length = 0.4;
  p.split_levels = 1;
  p.branches_per_split = 4;
  p.branch_angle_mean = 0.8;
  p.branch_angle_jitter = 0.0;
  p.curvature = 0.0;
  p.jitter_scale = 0.0;
  SkeletonTree t = grow_skeleton(p, 3);
  REQUIRE(t.segments.size() == 5);

  // The trunk is exactly vertical; each child's initial direction is the
  // trunk direction plus its signed branch angle.
  std::vector<double> offsets;
  for (size_t i = 1; i < t.segments.size(); ++i) {
    const auto& seg = t.segments[i];
    double dx = seg[1][0] - seg[0][0];
    double dy = seg[1][1] - seg[0][1];
    offsets.push_back(std::atan2(dy, dx) - std::numbers::pi / 2);
  }
  std::sort(offsets.begin(), offsets.end());
  for (size_t i = 0; i < offsets.size(); ++i)
    CHECK(offsets[i] ==
          doctest::Approx(-offsets[offsets.size() - 1 - i]).epsilon(1e-12));
}

TEST_CASE("every branch starts on its parent polyline") {
  for (const auto& p : species_presets()) {
    SkeletonTree t = grow_skeleton(p, 11);
    for (size_t i = 1; i < t.segments.size(); ++i) {
      bool attached = false;
      for (size_t j = 0; j < i && !attached; ++j)
        for (const auto& v : t.segments[j])
          if (v == t.segments[i][0]) {
            attached = true;
            break;
          }
      CHECK(attached);
    }
    for (const auto& seg : t.segments)
      for (const auto& v : seg) {
        CHECK(v[0] >= 0.0);
        CHECK(v[0] <= 1.0);
        CHECK(v[1] >= 0.0);
        CHECK(v[1] <= 1.0);
      }
  }
}

TEST_CASE("rasterize: vertical unit segment -> one-pixel column") {
  SkeletonTree t;
  t.segments = {{{0.5, 0.0}, {0.5, 0.5}}};
  SkeletonImage img = rasterize(t);
  int count = img.foreground_count();
  CHECK(count >= 31);
  CHECK(count <= 33);
  for (int r = 0; r < kImageSize; ++r)
    for (int c = 0; c < kImageSize; ++c)
      if (img.on(r, c)) CHECK(c == 32);
  // Bottom row is ground level (y=0 maps to row 63).
  CHECK(img.on(63, 32));
  CHECK(img.on(32, 32));
  CHECK_FALSE(img.on(31, 32));
}

TEST_CASE("rasterize: empty tree -> blank image") {
  SkeletonTree t;
  SkeletonImage img = rasterize(t);
  CHECK(img.foreground_count() == 0);
}

TEST_CASE("rasterize: connected trees give one 8-connected component") {
  for (const auto& p : species_presets()) {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
      SkeletonImage img = rasterize(grow_skeleton(p, seed));
      CHECK(count_components8(img) == 1);
    }
  }
}

TEST_CASE("thin: unit-width strokes are fixed points") {
  SkeletonTree t;
  t.segments = {{{0.2, 0.1}, {0.2, 0.8}}};
  SkeletonImage line = rasterize(t);
  CHECK(thin(line) == line);

  SkeletonTree diag;
  diag.segments = {{{0.1, 0.1}, {0.8, 0.8}}};
  SkeletonImage dline = rasterize(diag);
  CHECK(thin(dline) == dline);
}

TEST_CASE("thin: solid block is reduced to unit width") {
  SkeletonImage img;
  for (int r = 9; r <= 11; ++r)
    for (int c = 9; c <= 11; ++c) img.set(r, c, 1.0);
  SkeletonImage out = thin(img);
  CHECK(out.foreground_count() >= 1);
  CHECK(out.foreground_count() < 9);
  // No pixel may keep a fully-foreground 3x3 neighborhood.
  for (int r = 0; r < kImageSize; ++r)
    for (int c = 0; c < kImageSize; ++c) {
      if (!out.on(r, c)) continue;
      bool full = true;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc)
          if (!out.on(r + dr, c + dc)) full = false;
      CHECK_FALSE(full);
    }
  CHECK(count_components8(out) == 1);
}

TEST_CASE("thin: blank image unchanged, non-binary rejected") {
  SkeletonImage blank;
  CHECK(thin(blank) == blank);
  SkeletonImage gray;
  gray.set(5, 5, 0.5);
  CHECK_THROWS_AS(thin(gray), Error);
}

TEST_CASE("thin is idempotent on its own output") {
  for (uint64_t seed : {4ull, 9ull}) {
    for (const auto& p : species_presets()) {
      SkeletonImage once = thin(rasterize(grow_skeleton(p, seed)));
      CHECK(thin(once) == once);
    }
  }
}

TEST_CASE("synth_image: binary, connected, sane density for all presets") {
  for (const auto& p : species_presets()) {
    for (uint64_t seed : {10ull, 20ull, 30ull, 40ull}) {
      SkeletonImage img = synth_image(p, seed);
      CHECK(img.is_binary());
      CHECK(count_components8(img) == 1);
      double frac = img.foreground_fraction();
      CHECK(frac > 0.005);
      CHECK(frac < 0.25);
      CHECK(thin(img) == img);
    }
  }
}

TEST_CASE("generate_dataset: balanced, indexed, deterministic") {
  fs::path d1 = fresh_dir("sketchlab_synth_a");
  fs::path d2 = fresh_dir("sketchlab_synth_b");
  DatasetIndex idx = generate_dataset(3, 77, d1.string());
  CHECK(idx.entries.size() == 45);

  std::map<std::string, int> counts;
  for (const auto& e : idx.entries) counts[e.species]++;
  CHECK(counts.size() == 15);
  for (const auto& [sp, n] : counts) CHECK(n == 3);

  DatasetIndex reread = read_index(d1.string());
  CHECK(reread.entries.size() == 45);
  CHECK(reread.entries[0].filename == idx.entries[0].filename);
  CHECK(reread.entries[0].seed == idx.entries[0].seed);

  generate_dataset(3, 77, d2.string());
  for (const auto& e : idx.entries)
    CHECK(read_bytes(d1 / e.filename) == read_bytes(d2 / e.filename));
  CHECK(read_bytes(d1 / "index.csv") == read_bytes(d2 / "index.csv"));

  // A different master seed produces different imagery.
  fs::path d3 = fresh_dir("sketchlab_synth_c");
  generate_dataset(3, 78, d3.string());
  CHECK(read_bytes(d1 / idx.entries[0].filename) !=
        read_bytes(d3 / idx.entries[0].filename));

  fs::remove_all(d1);
  fs::remove_all(d2);
  fs::remove_all(d3);
}
