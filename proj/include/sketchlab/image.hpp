#pragma once

#include <cmath>
#include <vector>

#include "sketchlab/common.hpp"

namespace sketchlab {

// 64x64 grayscale image, row-major with row 0 at the top, intensities in
// [0,1].  Binary images use exactly {0,1}.
struct SkeletonImage {
  std::vector<double> px = std::vector<double>(kImagePixels, 0.0);

  double at(int r, int c) const {
    return px[static_cast<size_t>(r) * kImageSize + c];
  }
  void set(int r, int c, double v) {
    px[static_cast<size_t>(r) * kImageSize + c] = v;
  }
  bool on(int r, int c) const {  // out-of-bounds reads as background
    if (r < 0 || r >= kImageSize || c < 0 || c >= kImageSize) return false;
    return at(r, c) != 0.0;
  }

  bool is_binary() const {
    for (double v : px)
      if (v != 0.0 && v != 1.0) return false;
    return true;
  }

  int foreground_count() const {
    int n = 0;
    for (double v : px)
      if (v != 0.0) ++n;
    return n;
  }

  double foreground_fraction() const {
    return static_cast<double>(foreground_count()) / kImagePixels;
  }

  bool operator==(const SkeletonImage& o) const { return px == o.px; }
};

// Number of 8-connected foreground components (iterative flood fill).
inline int count_components8(const SkeletonImage& img) {
  std::vector<uint8_t> seen(kImagePixels, 0);
  int components = 0;
  std::vector<int> stack;
  for (int r = 0; r < kImageSize; ++r) {
    for (int c = 0; c < kImageSize; ++c) {
      int i = r * kImageSize + c;
      if (img.px[i] == 0.0 || seen[i]) continue;
      ++components;
      seen[i] = 1;
      stack.push_back(i);
      while (!stack.empty()) {
        int j = stack.back();
        stack.pop_back();
        int jr = j / kImageSize, jc = j % kImageSize;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            int nr = jr + dr, nc = jc + dc;
            if (nr < 0 || nr >= kImageSize || nc < 0 || nc >= kImageSize)
              continue;
            int k = nr * kImageSize + nc;
            if (img.px[k] != 0.0 && !seen[k]) {
              seen[k] = 1;
              stack.push_back(k);
            }
          }
        }
      }
    }
  }
  return components;
}

}  // namespace sketchlab
