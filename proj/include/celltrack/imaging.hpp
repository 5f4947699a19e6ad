#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "celltrack/raster.hpp"

namespace celltrack {

enum class Connectivity { Four = 4, Eight = 8 };

struct RegionStats {
  std::uint32_t label = 0;
  long area = 0;
  double centroid_x = 0.0;  // arithmetic mean of member pixel centers
  double centroid_y = 0.0;
  int xmin = 0, ymin = 0, xmax = 0, ymax = 0;  // inclusive bounds
};

// Per-pixel comparison against channel `channel` of a probability map:
// output is 1 where value >= theta.
inline BinaryMask threshold(const ProbMap& map, int channel, double theta) {
  if (channel < 0 || channel >= map.channels())
    throw std::invalid_argument("threshold: channel out of range");
  if (theta < 0.0 || theta > 1.0)
    throw std::invalid_argument("threshold: theta must be in [0, 1]");
  BinaryMask out(map.width(), map.height());
  const int w = map.width(), h = map.height();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(x, y) = map.at(x, y, channel) >= theta ? 1 : 0;
  return out;
}

// Fills every background region not reachable from the raster border.
// Background connectivity is 4-conn, the dual of 8-conn foreground.
inline BinaryMask fill_holes(const BinaryMask& mask) {
  const int w = mask.width(), h = mask.height();
  std::vector<std::uint8_t> outside(static_cast<std::size_t>(w) * h, 0);
  std::vector<int> stack;
  auto push = [&](int x, int y) {
    const std::size_t i = static_cast<std::size_t>(y) * w + x;
    if (!outside[i] && mask.at(x, y) == 0) {
      outside[i] = 1;
      stack.push_back(y * w + x);
    }
  };
  for (int x = 0; x < w; ++x) {
    push(x, 0);
    push(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    push(0, y);
    push(w - 1, y);
  }
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    const int x = i % w, y = i / w;
    if (x > 0) push(x - 1, y);
    if (x + 1 < w) push(x + 1, y);
    if (y > 0) push(x, y - 1);
    if (y + 1 < h) push(x, y + 1);
  }
  BinaryMask out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(x, y) = (mask.at(x, y) != 0 || !outside[static_cast<std::size_t>(y) * w + x]) ? 1 : 0;
  return out;
}

struct ComponentResult {
  LabelMap labels;
  std::vector<RegionStats> regions;  // indexed by label - 1
};

namespace detail {

class UnionFind {
 public:
  std::uint32_t make() {
    parent_.push_back(static_cast<std::uint32_t>(parent_.size()));
    return static_cast<std::uint32_t>(parent_.size() - 1);
  }
  std::uint32_t find(std::uint32_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void merge(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b)
      parent_[b] = a;
    else
      parent_[a] = b;
  }

 private:
  std::vector<std::uint32_t> parent_;
};

}  // namespace detail

// Two-pass union-find labeling. Labels are assigned 1..K in raster-scan order
// of each region's first pixel, so runs are reproducible.
inline ComponentResult connected_components(const BinaryMask& mask, Connectivity conn) {
  const int w = mask.width(), h = mask.height();
  LabelMap provisional(w, h, 1, 0);
  detail::UnionFind uf;
  uf.make();  // slot 0 = background, never merged

  const bool eight = conn == Connectivity::Eight;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask.at(x, y) == 0) continue;
      std::uint32_t neighbors[4];
      int n = 0;
      if (x > 0 && provisional.at(x - 1, y)) neighbors[n++] = provisional.at(x - 1, y);
      if (y > 0) {
        if (provisional.at(x, y - 1)) neighbors[n++] = provisional.at(x, y - 1);
        if (eight) {
          if (x > 0 && provisional.at(x - 1, y - 1)) neighbors[n++] = provisional.at(x - 1, y - 1);
          if (x + 1 < w && provisional.at(x + 1, y - 1)) neighbors[n++] = provisional.at(x + 1, y - 1);
        }
      }
      if (n == 0) {
        provisional.at(x, y) = uf.make();
      } else {
        std::uint32_t m = neighbors[0];
        for (int i = 1; i < n; ++i) uf.merge(m, neighbors[i]);
        provisional.at(x, y) = uf.find(m);
      }
    }
  }

  ComponentResult result{LabelMap(w, h, 1, 0), {}};
  std::vector<std::uint32_t> dense;  // root -> final label, 0 = unseen
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint32_t p = provisional.at(x, y);
      if (p == 0) continue;
      const std::uint32_t root = uf.find(p);
      if (root >= dense.size()) dense.resize(root + 1, 0);
      if (dense[root] == 0) {
        dense[root] = static_cast<std::uint32_t>(result.regions.size() + 1);
        RegionStats rs;
        rs.label = dense[root];
        rs.xmin = rs.xmax = x;
        rs.ymin = rs.ymax = y;
        result.regions.push_back(rs);
      }
      const std::uint32_t label = dense[root];
      result.labels.at(x, y) = label;
      RegionStats& rs = result.regions[label - 1];
      rs.area += 1;
      rs.centroid_x += x;  // accumulate sums, divide below
      rs.centroid_y += y;
      if (x < rs.xmin) rs.xmin = x;
      if (x > rs.xmax) rs.xmax = x;
      if (y < rs.ymin) rs.ymin = y;
      if (y > rs.ymax) rs.ymax = y;
    }
  }
  for (RegionStats& rs : result.regions) {
    rs.centroid_x /= rs.area;
    rs.centroid_y /= rs.area;
  }
  return result;
}

}  // namespace celltrack
