#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "celltrack/imaging.hpp"

namespace celltrack {

// Channel / class order of detection probability maps and detection-style
// 3-class label maps. This order is fixed across the library and its file
// formats.
inline constexpr int kDetMitotic = 0;
inline constexpr int kDetNormal = 1;
inline constexpr int kDetBackground = 2;

enum class CellClass : std::uint8_t { Mitotic = 0, Normal = 1 };

struct DetectedCell {
  int frame = 0;
  double x = 0.0, y = 0.0;  // region centroid, sub-pixel
  CellClass cls = CellClass::Normal;
  long area = 0;
  std::uint32_t region_label = 0;  // label in that frame's detection label map
};

struct DetectionParams {
  double theta_cell = 0.5;  // threshold on 1 - P(background)
  long min_area = 4;
  Connectivity connectivity = Connectivity::Eight;
};

// One frame of a 3-class (mitotic, normal, background) map -> detections.
// Cell-vs-background is decided on 1 - P(background) so mitotic and normal
// evidence pools; the region class is the argmax of the mean class
// probability over the region's pixels, ties going to Normal.
inline std::vector<DetectedCell> detect_cells(const ProbMap& prob, int frame,
                                              const DetectionParams& params) {
  if (prob.channels() != 3)
    throw std::invalid_argument("detect_cells: probability map must have 3 channels");
  if (params.theta_cell < 0.0 || params.theta_cell > 1.0)
    throw std::invalid_argument("detect_cells: theta_cell must be in [0, 1]");
  if (params.min_area < 1)
    throw std::invalid_argument("detect_cells: min_area must be >= 1");

  const int w = prob.width(), h = prob.height();
  BinaryMask mask(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      mask.at(x, y) = (1.0 - prob.at(x, y, kDetBackground)) >= params.theta_cell ? 1 : 0;

  mask = fill_holes(mask);
  ComponentResult comps = connected_components(mask, params.connectivity);

  std::vector<double> mitotic_sum(comps.regions.size(), 0.0);
  std::vector<double> normal_sum(comps.regions.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint32_t label = comps.labels.at(x, y);
      if (label == 0) continue;
      mitotic_sum[label - 1] += prob.at(x, y, kDetMitotic);
      normal_sum[label - 1] += prob.at(x, y, kDetNormal);
    }
  }

  std::vector<DetectedCell> cells;
  for (const RegionStats& rs : comps.regions) {
    if (rs.area < params.min_area) continue;
    DetectedCell cell;
    cell.frame = frame;
    cell.x = rs.centroid_x;
    cell.y = rs.centroid_y;
    cell.cls = mitotic_sum[rs.label - 1] > normal_sum[rs.label - 1] ? CellClass::Mitotic
                                                                    : CellClass::Normal;
    cell.area = rs.area;
    cell.region_label = rs.label;
    cells.push_back(cell);
  }
  return cells;
}

}  // namespace celltrack
