#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "celltrack/detection.hpp"
#include "celltrack/tracker.hpp"

namespace celltrack {

struct MatchResult {
  long tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;

  static MatchResult from_counts(long tp, long fp, long fn) {
    MatchResult r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    r.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    r.f1 = r.precision + r.recall > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
  }
};

struct GtDetection {
  int frame = 0;
  double x = 0.0, y = 0.0;
  CellClass cls = CellClass::Normal;
};

struct DetectionScore {
  MatchResult overall, mitotic, normal;
};

// Greedy one-to-one matching by ascending centroid distance within r_match,
// restricted to same-frame pairs. The spatial matching is class-agnostic;
// the per-class tallies then require class agreement on matched pairs.
inline DetectionScore match_detections(const std::vector<DetectedCell>& pred,
                                       const std::vector<GtDetection>& gt, double r_match) {
  if (!(r_match > 0.0)) throw std::invalid_argument("match_detections: r_match must be > 0");
  struct Pair {
    double d2;
    int pi, gi;
  };
  std::vector<Pair> pairs;
  for (int pi = 0; pi < static_cast<int>(pred.size()); ++pi) {
    for (int gi = 0; gi < static_cast<int>(gt.size()); ++gi) {
      if (pred[pi].frame != gt[gi].frame) continue;
      const double dx = pred[pi].x - gt[gi].x, dy = pred[pi].y - gt[gi].y;
      const double d2 = dx * dx + dy * dy;
      if (d2 <= r_match * r_match) pairs.push_back({d2, pi, gi});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.d2 != b.d2) return a.d2 < b.d2;
    if (a.pi != b.pi) return a.pi < b.pi;
    return a.gi < b.gi;
  });
  std::vector<std::uint8_t> pred_used(pred.size(), 0), gt_used(gt.size(), 0);
  long tp = 0, tp_mit = 0, tp_norm = 0;
  for (const Pair& p : pairs) {
    if (pred_used[p.pi] || gt_used[p.gi]) continue;
    pred_used[p.pi] = 1;
    gt_used[p.gi] = 1;
    ++tp;
    if (pred[p.pi].cls == gt[p.gi].cls) {
      if (gt[p.gi].cls == CellClass::Mitotic)
        ++tp_mit;
      else
        ++tp_norm;
    }
  }
  const long pred_mit = std::count_if(pred.begin(), pred.end(),
                                      [](const DetectedCell& d) { return d.cls == CellClass::Mitotic; });
  const long gt_mit = std::count_if(gt.begin(), gt.end(),
                                    [](const GtDetection& d) { return d.cls == CellClass::Mitotic; });
  DetectionScore score;
  score.overall = MatchResult::from_counts(tp, static_cast<long>(pred.size()) - tp,
                                           static_cast<long>(gt.size()) - tp);
  score.mitotic = MatchResult::from_counts(tp_mit, pred_mit - tp_mit, gt_mit - tp_mit);
  score.normal = MatchResult::from_counts(tp_norm, static_cast<long>(pred.size()) - pred_mit - tp_norm,
                                          static_cast<long>(gt.size()) - gt_mit - tp_norm);
  return score;
}

struct MitosisEvent {
  int frame = 0;  // last frame of the mother
  double x = 0.0, y = 0.0;
};

// Events match when both the frame gap and the spatial distance are within
// tolerance; greedy one-to-one by lexicographic (frame gap, distance) cost.
inline MatchResult match_mitosis(const std::vector<MitosisEvent>& pred,
                                 const std::vector<MitosisEvent>& gt, int dt, double r) {
  if (dt < 0) throw std::invalid_argument("match_mitosis: dt must be >= 0");
  if (!(r > 0.0)) throw std::invalid_argument("match_mitosis: r must be > 0");
  struct Pair {
    int df;
    double d2;
    int pi, gi;
  };
  std::vector<Pair> pairs;
  for (int pi = 0; pi < static_cast<int>(pred.size()); ++pi) {
    for (int gi = 0; gi < static_cast<int>(gt.size()); ++gi) {
      const int df = std::abs(pred[pi].frame - gt[gi].frame);
      if (df > dt) continue;
      const double dx = pred[pi].x - gt[gi].x, dy = pred[pi].y - gt[gi].y;
      const double d2 = dx * dx + dy * dy;
      if (d2 <= r * r) pairs.push_back({df, d2, pi, gi});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.df != b.df) return a.df < b.df;
    if (a.d2 != b.d2) return a.d2 < b.d2;
    if (a.pi != b.pi) return a.pi < b.pi;
    return a.gi < b.gi;
  });
  std::vector<std::uint8_t> pred_used(pred.size(), 0), gt_used(gt.size(), 0);
  long tp = 0;
  for (const Pair& p : pairs) {
    if (pred_used[p.pi] || gt_used[p.gi]) continue;
    pred_used[p.pi] = 1;
    gt_used[p.gi] = 1;
    ++tp;
  }
  return MatchResult::from_counts(tp, static_cast<long>(pred.size()) - tp,
                                  static_cast<long>(gt.size()) - tp);
}

// One event per mother: the frame and position where it last appears.
inline std::vector<MitosisEvent> mitosis_events(const LineageForest& forest) {
  std::set<std::uint32_t> mothers;
  for (const auto& [id, t] : forest.trajectories)
    if (t.parent != 0) mothers.insert(t.parent);
  std::vector<MitosisEvent> events;
  for (const std::uint32_t m : mothers) {
    const auto it = forest.trajectories.find(m);
    if (it == forest.trajectories.end() || it->second.rows.empty()) continue;
    const StatusRow& end = it->second.last();
    events.push_back({end.frame, end.x, end.y});
  }
  return events;
}

// Jaccard-style segmentation accuracy: each ground-truth object scores the
// IoU of the unique predicted object covering a strict majority of it, or 0;
// the result is the mean over all ground-truth objects of all frames.
inline double seg_score(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("seg_score: sequence lengths differ");
  double total = 0.0;
  long objects = 0;
  for (std::size_t f = 0; f < gt.size(); ++f) {
    if (!pred[f].same_extent(gt[f]))
      throw std::invalid_argument("seg_score: extent mismatch");
    std::map<std::uint32_t, long> gt_area, pred_area;
    std::map<std::pair<std::uint32_t, std::uint32_t>, long> overlap;
    const int w = gt[f].width(), h = gt[f].height();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::uint32_t g = gt[f].at(x, y);
        const std::uint32_t p = pred[f].at(x, y);
        if (g != 0) ++gt_area[g];
        if (p != 0) ++pred_area[p];
        if (g != 0 && p != 0) ++overlap[{g, p}];
      }
    }
    for (const auto& [g, ga] : gt_area) {
      ++objects;
      for (const auto& [p, pa] : pred_area) {
        const auto it = overlap.find({g, p});
        if (it == overlap.end()) continue;
        if (2 * it->second > ga) {  // strict majority: at most one such p exists
          total += static_cast<double>(it->second) / (ga + pa - it->second);
          break;
        }
      }
    }
  }
  return objects > 0 ? total / objects : 0.0;
}

// Link-level tracking proxy. Nodes are (track, frame) entries matched
// per-frame by centroid distance; a predicted link (consecutive rows or
// parent-to-daughter) is a true positive when both endpoints correspond and
// the ground truth contains that link.
inline MatchResult link_score(const LineageForest& pred, const LineageForest& gt,
                              double r_match) {
  if (!(r_match > 0.0)) throw std::invalid_argument("link_score: r_match must be > 0");

  using Node = std::pair<std::uint32_t, int>;  // (track id, frame)
  struct FrameEntry {
    std::uint32_t id;
    double x, y;
  };
  auto by_frame = [](const LineageForest& f) {
    std::map<int, std::vector<FrameEntry>> out;
    for (const auto& [id, t] : f.trajectories)
      for (const StatusRow& r : t.rows) out[r.frame].push_back({id, r.x, r.y});
    return out;
  };
  const auto pred_frames = by_frame(pred);
  const auto gt_frames = by_frame(gt);

  std::map<Node, Node> to_gt;
  for (const auto& [frame, pnodes] : pred_frames) {
    const auto git = gt_frames.find(frame);
    if (git == gt_frames.end()) continue;
    const auto& gnodes = git->second;
    struct Pair {
      double d2;
      std::size_t pi, gi;
    };
    std::vector<Pair> pairs;
    for (std::size_t pi = 0; pi < pnodes.size(); ++pi) {
      for (std::size_t gi = 0; gi < gnodes.size(); ++gi) {
        const double dx = pnodes[pi].x - gnodes[gi].x, dy = pnodes[pi].y - gnodes[gi].y;
        const double d2 = dx * dx + dy * dy;
        if (d2 <= r_match * r_match) pairs.push_back({d2, pi, gi});
      }
    }
    std::sort(pairs.begin(), pairs.end(), [&](const Pair& a, const Pair& b) {
      if (a.d2 != b.d2) return a.d2 < b.d2;
      if (pnodes[a.pi].id != pnodes[b.pi].id) return pnodes[a.pi].id < pnodes[b.pi].id;
      return gnodes[a.gi].id < gnodes[b.gi].id;
    });
    std::vector<std::uint8_t> pu(pnodes.size(), 0), gu(gnodes.size(), 0);
    for (const Pair& p : pairs) {
      if (pu[p.pi] || gu[p.gi]) continue;
      pu[p.pi] = 1;
      gu[p.gi] = 1;
      to_gt[{pnodes[p.pi].id, frame}] = {gnodes[p.gi].id, frame};
    }
  }

  auto links_of = [](const LineageForest& f) {
    std::set<std::pair<Node, Node>> links;
    for (const auto& [id, t] : f.trajectories) {
      for (std::size_t i = 1; i < t.rows.size(); ++i)
        links.insert({{id, t.rows[i - 1].frame}, {id, t.rows[i].frame}});
      if (t.parent != 0) {
        const auto pit = f.trajectories.find(t.parent);
        if (pit != f.trajectories.end() && !pit->second.rows.empty())
          links.insert({{t.parent, pit->second.end_frame()}, {id, t.start_frame()}});
      }
    }
    return links;
  };
  const auto pred_links = links_of(pred);
  const auto gt_links = links_of(gt);

  long tp = 0;
  for (const auto& [a, b] : pred_links) {
    const auto ia = to_gt.find(a);
    const auto ib = to_gt.find(b);
    if (ia == to_gt.end() || ib == to_gt.end()) continue;
    if (gt_links.count({ia->second, ib->second})) ++tp;
  }
  return MatchResult::from_counts(tp, static_cast<long>(pred_links.size()) - tp,
                                  static_cast<long>(gt_links.size()) - tp);
}

// Detection-style view of a forest with classes derived from lineage: a cell
// counts as mitotic within n_mitosis frames of its division on either side.
// Applying the same rule to predicted and ground-truth forests makes the
// per-class detection metrics comparable when stored classes are absent.
inline std::vector<GtDetection> lineage_detections(const LineageForest& forest, int n_mitosis) {
  std::map<std::uint32_t, int> children;
  for (const auto& [id, t] : forest.trajectories)
    if (t.parent != 0) ++children[t.parent];
  std::vector<GtDetection> out;
  for (const auto& [id, t] : forest.trajectories) {
    const bool divides = children.count(id) > 0;
    for (const StatusRow& r : t.rows) {
      CellClass cls = CellClass::Normal;
      if (divides && r.frame > t.end_frame() - n_mitosis) cls = CellClass::Mitotic;
      if (t.parent != 0 && r.frame < t.start_frame() + n_mitosis) cls = CellClass::Mitotic;
      out.push_back({r.frame, r.x, r.y, cls});
    }
  }
  return out;
}

}  // namespace celltrack
