#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "celltrack/dataprep.hpp"
#include "celltrack/imaging.hpp"

namespace celltrack {

using BlobMap = LabelMap;      // connected regions of the primary segmentation
using InstanceMap = LabelMap;  // nonzero values are track ids

struct Seed {
  std::uint32_t track_id = 0;
  double x = 0.0, y = 0.0;
};

// Tracked centroids of one frame. Track ids must be unique.
struct SeedSet {
  std::vector<Seed> seeds;
};

// Threshold on interior and boundary channels, union the two masks, fill
// internal holes, label connected regions. Touching cells stay one blob here;
// splitting them is fine_segment's job.
inline BlobMap primary_segment(const ProbMap& prob, double theta_interior,
                               double theta_boundary) {
  if (prob.channels() != 3)
    throw std::invalid_argument("primary_segment: probability map must have 3 channels");
  if (theta_interior < 0.0 || theta_interior > 1.0 || theta_boundary < 0.0 ||
      theta_boundary > 1.0)
    throw std::invalid_argument("primary_segment: thresholds must be in [0, 1]");
  const int w = prob.width(), h = prob.height();
  BinaryMask mask(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      mask.at(x, y) = (prob.at(x, y, kSegInterior) >= theta_interior ||
                       prob.at(x, y, kSegBoundary) >= theta_boundary)
                          ? 1
                          : 0;
  mask = fill_holes(mask);
  return connected_components(mask, Connectivity::Eight).labels;
}

namespace detail {

// Nearest-seed assignment works on squared distances with coordinates
// quantized to 1/256 px, so comparisons are exact int64 arithmetic and the
// brute-force and accelerated routes agree bit for bit, including ties
// (equidistant pixels go to the smaller track id).
inline constexpr std::int64_t kSeedQuant = 256;

struct QSeed {
  std::int64_t x = 0, y = 0;  // quantized coordinates
  std::uint32_t id = 0;
};

inline std::vector<QSeed> quantize_seeds(const SeedSet& seeds) {
  if (seeds.seeds.empty()) throw std::invalid_argument("empty seed set");
  std::set<std::uint32_t> ids;
  std::vector<QSeed> out;
  out.reserve(seeds.seeds.size());
  for (const Seed& s : seeds.seeds) {
    if (!ids.insert(s.track_id).second)
      throw std::invalid_argument("duplicate track id in seed set");
    out.push_back({static_cast<std::int64_t>(std::llround(s.x * kSeedQuant)),
                   static_cast<std::int64_t>(std::llround(s.y * kSeedQuant)),
                   s.track_id});
  }
  return out;
}

inline std::uint32_t nearest_seed(std::int64_t px, std::int64_t py,
                                  const std::vector<QSeed>& seeds) {
  std::int64_t best_d2 = 0;
  std::uint32_t best_id = 0;
  bool first = true;
  for (const QSeed& s : seeds) {
    const std::int64_t dx = px - s.x, dy = py - s.y;
    const std::int64_t d2 = dx * dx + dy * dy;
    if (first || d2 < best_d2 || (d2 == best_d2 && s.id < best_id)) {
      best_d2 = d2;
      best_id = s.id;
      first = false;
    }
  }
  return best_id;
}

// Seeds sorted by quantized y; queries walk outward from the query row and
// stop once |dy|^2 alone exceeds the best distance so far.
class SeedIndex {
 public:
  explicit SeedIndex(std::vector<QSeed> seeds) : seeds_(std::move(seeds)) {
    std::sort(seeds_.begin(), seeds_.end(), [](const QSeed& a, const QSeed& b) {
      if (a.y != b.y) return a.y < b.y;
      if (a.x != b.x) return a.x < b.x;
      return a.id < b.id;
    });
  }

  std::uint32_t nearest(std::int64_t px, std::int64_t py) const {
    const auto begin = seeds_.begin();
    auto lo = std::lower_bound(begin, seeds_.end(), py,
                               [](const QSeed& s, std::int64_t y) { return s.y < y; });
    std::int64_t up = static_cast<std::int64_t>(lo - begin);  // first index with y >= py
    std::int64_t down = up - 1;
    std::int64_t best_d2 = 0;
    std::uint32_t best_id = 0;
    bool first = true;
    auto consider = [&](const QSeed& s) {
      const std::int64_t dx = px - s.x, dy = py - s.y;
      const std::int64_t d2 = dx * dx + dy * dy;
      if (first || d2 < best_d2 || (d2 == best_d2 && s.id < best_id)) {
        best_d2 = d2;
        best_id = s.id;
        first = false;
      }
    };
    const std::int64_t n = static_cast<std::int64_t>(seeds_.size());
    while (up < n || down >= 0) {
      const std::int64_t dy_up = up < n ? seeds_[up].y - py : -1;
      const std::int64_t dy_down = down >= 0 ? py - seeds_[down].y : -1;
      bool take_up;
      if (up >= n)
        take_up = false;
      else if (down < 0)
        take_up = true;
      else
        take_up = dy_up <= dy_down;
      if (take_up) {
        if (!first && dy_up * dy_up > best_d2) up = n;  // no closer row above
        else consider(seeds_[up++]);
      } else {
        if (!first && dy_down * dy_down > best_d2) down = -1;
        else consider(seeds_[down--]);
      }
    }
    return best_id;
  }

 private:
  std::vector<QSeed> seeds_;
};

// Voronoi cells of point sites are convex, so along any row each site owns a
// contiguous run: if both ends of a span share a winner, the whole span does.
// That makes per-row bisection exact, not heuristic. Span indices r are
// relative; the absolute pixel x is x_offset + r.
inline void fill_row_span(const SeedIndex& index, std::int64_t qy, int x_offset, int r0,
                          std::uint32_t w0, int r1, std::uint32_t w1, std::uint32_t* dst) {
  dst[r0] = w0;
  dst[r1] = w1;
  if (w0 == w1) {
    for (int r = r0 + 1; r < r1; ++r) dst[r] = w0;
    return;
  }
  if (r1 - r0 <= 1) return;
  const int rm = r0 + (r1 - r0) / 2;
  const std::uint32_t wm =
      index.nearest(static_cast<std::int64_t>(x_offset + rm) * kSeedQuant, qy);
  fill_row_span(index, qy, x_offset, r0, w0, rm, wm, dst);
  fill_row_span(index, qy, x_offset, rm, wm, r1, w1, dst);
}

// Fills the rectangle [x_begin, x_end) x [y_begin, y_end) with nearest-seed
// labels, writing into `out` starting at (out_x0, out_y0).
inline void voronoi_fill_rows(const SeedIndex& index, int x_begin, int x_end, int y_begin,
                              int y_end, LabelMap& out, int out_x0, int out_y0) {
  const int span = x_end - x_begin;
  for (int y = y_begin; y < y_end; ++y) {
    const std::int64_t qy = static_cast<std::int64_t>(y) * kSeedQuant;
    std::uint32_t* dst = &out.at(out_x0, out_y0 + (y - y_begin));
    const std::uint32_t w0 = index.nearest(static_cast<std::int64_t>(x_begin) * kSeedQuant, qy);
    if (span == 1) {
      dst[0] = w0;
      continue;
    }
    const std::uint32_t w1 =
        index.nearest(static_cast<std::int64_t>(x_end - 1) * kSeedQuant, qy);
    fill_row_span(index, qy, x_begin, 0, w0, span - 1, w1, dst);
  }
}

}  // namespace detail

// Direct Euclidean argmin over the given seeds for each listed pixel; ties go
// to the smaller track id. This is the reference route the accelerated
// Voronoi path must match pixel for pixel.
inline std::vector<std::uint32_t> assign_pixels_bruteforce(
    const std::vector<std::pair<int, int>>& blob_pixels, const SeedSet& seeds) {
  const std::vector<detail::QSeed> qseeds = detail::quantize_seeds(seeds);
  std::vector<std::uint32_t> out;
  out.reserve(blob_pixels.size());
  for (const auto& [x, y] : blob_pixels)
    out.push_back(detail::nearest_seed(static_cast<std::int64_t>(x) * detail::kSeedQuant,
                                       static_cast<std::int64_t>(y) * detail::kSeedQuant,
                                       qseeds));
  return out;
}

// Full-extent nearest-seed label map, pixel-identical to the brute-force
// assignment under the shared quantized metric and tie rule.
inline LabelMap voronoi_labels(const SeedSet& seeds, int width, int height) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("voronoi_labels: extent must be positive");
  detail::SeedIndex index(detail::quantize_seeds(seeds));
  LabelMap out(width, height, 1, 0);
  detail::voronoi_fill_rows(index, 0, width, 0, height, out, 0, 0);
  return out;
}

// Splits primary blobs among the frame's tracked centroids. A blob with one
// interior centroid takes that track id wholesale; with several, its pixels
// are divided by nearest centroid among those inside the blob; with none it
// is dropped as detector-unconfirmed.
inline InstanceMap fine_segment(const BlobMap& blobs, const SeedSet& seeds) {
  const int w = blobs.width(), h = blobs.height();

  std::uint32_t max_label = 0;
  for (const std::uint32_t v : blobs.storage()) max_label = std::max(max_label, v);

  struct BlobInfo {
    int xmin = 0, ymin = 0, xmax = -1, ymax = -1;
    std::vector<Seed> inside;
  };
  std::vector<BlobInfo> info(max_label + 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint32_t l = blobs.at(x, y);
      if (l == 0) continue;
      BlobInfo& b = info[l];
      if (b.xmax < b.xmin) {
        b.xmin = b.xmax = x;
        b.ymin = b.ymax = y;
      } else {
        b.xmin = std::min(b.xmin, x);
        b.xmax = std::max(b.xmax, x);
        b.ymin = std::min(b.ymin, y);
        b.ymax = std::max(b.ymax, y);
      }
    }
  }

  // Membership probe: the pixel under the rounded centroid, falling back to
  // the nearest blob pixel within 1 px (4-neighbors before diagonals).
  static constexpr int kProbe[9][2] = {{0, 0},  {0, -1}, {-1, 0}, {1, 0}, {0, 1},
                                       {-1, -1}, {1, -1}, {-1, 1}, {1, 1}};
  std::set<std::uint32_t> ids;
  for (const Seed& s : seeds.seeds) {
    if (!ids.insert(s.track_id).second)
      throw std::invalid_argument("fine_segment: duplicate track id in seed set");
    const int cx = static_cast<int>(std::llround(s.x));
    const int cy = static_cast<int>(std::llround(s.y));
    for (const auto& d : kProbe) {
      const int px = cx + d[0], py = cy + d[1];
      if (!blobs.in_bounds(px, py)) continue;
      const std::uint32_t l = blobs.at(px, py);
      if (l != 0) {
        info[l].inside.push_back(s);
        break;
      }
    }
  }

  InstanceMap out(w, h, 1, 0);
  std::vector<std::uint32_t> single(max_label + 1, 0);
  std::vector<LabelMap> local(max_label + 1);
  for (std::uint32_t l = 1; l <= max_label; ++l) {
    BlobInfo& b = info[l];
    if (b.inside.empty() || b.xmax < b.xmin) continue;
    if (b.inside.size() == 1) {
      single[l] = b.inside.front().track_id;
      continue;
    }
    detail::SeedIndex index(detail::quantize_seeds(SeedSet{b.inside}));
    local[l] = LabelMap(b.xmax - b.xmin + 1, b.ymax - b.ymin + 1, 1, 0);
    detail::voronoi_fill_rows(index, b.xmin, b.xmax + 1, b.ymin, b.ymax + 1, local[l], 0, 0);
  }

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint32_t l = blobs.at(x, y);
      if (l == 0) continue;
      if (single[l] != 0)
        out.at(x, y) = single[l];
      else if (!local[l].empty())
        out.at(x, y) = local[l].at(x - info[l].xmin, y - info[l].ymin);
    }
  }
  return out;
}

}  // namespace celltrack
