#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <stdexcept>
#include <vector>

#include "celltrack/detection.hpp"

namespace celltrack {

// Axis-aligned square box centered on a cell centroid.
struct BBox {
  double cx = 0.0, cy = 0.0;
  double size = 0.0;
};

inline BBox bbox_of(const DetectedCell& cell, double n_size) {
  if (!(n_size > 0.0)) throw std::invalid_argument("bbox_of: n_size must be > 0");
  return BBox{cell.x, cell.y, n_size};
}

// Intersection over union in unbounded plane geometry; boxes are never
// clipped to the raster.
inline double iou(const BBox& a, const BBox& b) {
  const double ix = std::min(a.cx + a.size / 2, b.cx + b.size / 2) -
                    std::max(a.cx - a.size / 2, b.cx - b.size / 2);
  const double iy = std::min(a.cy + a.size / 2, b.cy + b.size / 2) -
                    std::max(a.cy - a.size / 2, b.cy - b.size / 2);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.size * a.size + b.size * b.size - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

struct StatusRow {
  double x = 0.0, y = 0.0;
  int frame = 0;  // Z, strictly increasing along a trajectory
  CellClass status = CellClass::Normal;
};

// Rolling window of the most recent W_status rows of one trajectory.
class CellStatusMatrix {
 public:
  explicit CellStatusMatrix(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("CellStatusMatrix: capacity must be >= 1");
  }
  void push(const StatusRow& row) {
    if (!rows_.empty() && row.frame <= rows_.back().frame)
      throw std::invalid_argument("CellStatusMatrix: frames must be strictly increasing");
    rows_.push_back(row);
    if (static_cast<int>(rows_.size()) > capacity_) rows_.pop_front();
  }
  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(rows_.size()); }
  int mitotic_count() const {
    int n = 0;
    for (const StatusRow& r : rows_)
      if (r.status == CellClass::Mitotic) ++n;
    return n;
  }
  const std::deque<StatusRow>& rows() const { return rows_; }

 private:
  int capacity_;
  std::deque<StatusRow> rows_;
};

// Mitosis is declared only when the window holds strictly more than
// theta_mit mitotic rows.
inline bool detect_mitosis(const CellStatusMatrix& m, int theta_mit) {
  return m.mitotic_count() > theta_mit;
}

enum class TrackState { Active, Terminated, Tentative };

struct Trajectory {
  std::uint32_t id = 0;
  std::vector<StatusRow> rows;  // one row per frame, contiguous
  std::uint32_t parent = 0;     // 0 = none
  TrackState state = TrackState::Active;
  CellStatusMatrix status{1};

  int start_frame() const { return rows.front().frame; }
  int end_frame() const { return rows.back().frame; }
  int length() const { return static_cast<int>(rows.size()); }
  const StatusRow& last() const { return rows.back(); }
};

struct LineageForest {
  std::map<std::uint32_t, Trajectory> trajectories;
};

struct TrackerParams {
  double alpha = 0.2;      // minimum IOU that allows association
  double n_size = 0.0;     // <= 0: estimated from the first detections seen
  int w_status = 5;        // status matrix window length
  int theta_mit = 2;       // mitosis count threshold (strict)
  int l_min = 3;           // minimum trajectory length kept by pruning
  double r_daughter = 0.0; // <= 0: 2 * n_size

  void validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("tracker: alpha must be in [0, 1]");
    if (w_status < 1) throw std::invalid_argument("tracker: w_status must be >= 1");
    if (theta_mit < 0 || theta_mit > w_status)
      throw std::invalid_argument("tracker: theta_mit must be in [0, w_status]");
    if (l_min < 1) throw std::invalid_argument("tracker: l_min must be >= 1");
  }
};

struct Association {
  std::vector<std::pair<std::uint32_t, int>> matches;  // (track id, detection index)
  std::vector<std::uint32_t> unmatched_tracks;
  std::vector<int> unmatched_detections;
};

// Candidate pairs are (track end-cell box, detection box) with IOU >= alpha,
// accepted greedily in descending IOU order, each track and detection used at
// most once. Ties resolve by (track id, detection index) so runs reproduce.
inline Association associate(const std::vector<const Trajectory*>& active,
                             const std::vector<DetectedCell>& detections,
                             const TrackerParams& params) {
  struct Candidate {
    double overlap;
    std::uint32_t track;
    int det;
    std::size_t track_pos;
  };
  std::vector<Candidate> candidates;
  for (std::size_t ti = 0; ti < active.size(); ++ti) {
    const StatusRow& end = active[ti]->last();
    const BBox tb{end.x, end.y, params.n_size};
    for (int di = 0; di < static_cast<int>(detections.size()); ++di) {
      const BBox db{detections[di].x, detections[di].y, params.n_size};
      const double v = iou(tb, db);
      if (v >= params.alpha) candidates.push_back({v, active[ti]->id, di, ti});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    if (a.track != b.track) return a.track < b.track;
    return a.det < b.det;
  });

  Association out;
  std::vector<std::uint8_t> track_used(active.size(), 0), det_used(detections.size(), 0);
  for (const Candidate& c : candidates) {
    if (track_used[c.track_pos] || det_used[c.det]) continue;
    track_used[c.track_pos] = 1;
    det_used[c.det] = 1;
    out.matches.emplace_back(c.track, c.det);
  }
  for (std::size_t ti = 0; ti < active.size(); ++ti)
    if (!track_used[ti]) out.unmatched_tracks.push_back(active[ti]->id);
  for (int di = 0; di < static_cast<int>(detections.size()); ++di)
    if (!det_used[di]) out.unmatched_detections.push_back(di);
  return out;
}

// Removes childless trajectories shorter than l_min, iterating to a fixpoint;
// survivors whose parent vanished have the link cleared.
inline LineageForest prune_short(LineageForest forest, int l_min) {
  bool removed = true;
  while (removed) {
    removed = false;
    std::map<std::uint32_t, int> child_count;
    for (const auto& [id, t] : forest.trajectories)
      if (t.parent != 0) ++child_count[t.parent];
    for (auto it = forest.trajectories.begin(); it != forest.trajectories.end();) {
      if (it->second.length() < l_min && child_count[it->first] == 0) {
        it = forest.trajectories.erase(it);
        removed = true;
      } else {
        ++it;
      }
    }
  }
  for (auto& [id, t] : forest.trajectories)
    if (t.parent != 0 && !forest.trajectories.count(t.parent)) t.parent = 0;
  return forest;
}

// Frame-by-frame IOU tracker with mitosis detection via the per-track status
// matrix. step() must be called in strictly increasing frame order.
class Tracker {
 public:
  explicit Tracker(TrackerParams params) : params_(params) { params_.validate(); }

  void step(const std::vector<DetectedCell>& detections, int frame) {
    if (frame <= last_frame_)
      throw std::invalid_argument("Tracker::step: frame index must be strictly increasing");
    last_frame_ = frame;

    if (params_.n_size <= 0.0 && !detections.empty()) {
      double sum = 0.0;
      for (const DetectedCell& d : detections) sum += std::sqrt(static_cast<double>(d.area));
      params_.n_size = sum / detections.size();
    }

    std::vector<const Trajectory*> active;
    for (const auto& [id, t] : tracks_)
      if (t.state == TrackState::Active) active.push_back(&t);

    Association assoc;
    if (params_.n_size > 0.0) {
      assoc = associate(active, detections, params_);
    } else {
      for (const Trajectory* t : active) assoc.unmatched_tracks.push_back(t->id);
      for (int di = 0; di < static_cast<int>(detections.size()); ++di)
        assoc.unmatched_detections.push_back(di);
    }

    for (const auto& [track_id, det_index] : assoc.matches) {
      Trajectory& t = tracks_.at(track_id);
      const DetectedCell& d = detections[det_index];
      const StatusRow row{d.x, d.y, frame, d.cls};
      t.rows.push_back(row);
      t.status.push(row);
    }

    for (const std::uint32_t id : assoc.unmatched_tracks)
      tracks_.at(id).state = TrackState::Terminated;

    // Every unmatched detection opens a new trajectory; some become daughters
    // below, which is what separates newborn cells from ones entering the
    // field of view.
    std::vector<std::pair<int, std::uint32_t>> births;  // (detection index, new id)
    for (const int di : assoc.unmatched_detections) {
      const DetectedCell& d = detections[di];
      Trajectory t;
      t.id = next_id_++;
      t.parent = 0;
      t.state = TrackState::Active;
      t.status = CellStatusMatrix(params_.w_status);
      const StatusRow row{d.x, d.y, frame, d.cls};
      t.rows.push_back(row);
      t.status.push(row);
      births.emplace_back(di, t.id);
      tracks_.emplace(t.id, std::move(t));
    }

    // Mitosis: a mother that terminated this frame with a firing status
    // matrix claims the two nearest unclaimed births within r_daughter.
    const double r_daughter =
        params_.r_daughter > 0.0 ? params_.r_daughter : 2.0 * params_.n_size;
    std::vector<std::uint8_t> claimed(births.size(), 0);
    for (const std::uint32_t mother_id : assoc.unmatched_tracks) {
      const Trajectory& mother = tracks_.at(mother_id);
      if (!detect_mitosis(mother.status, params_.theta_mit)) continue;
      const StatusRow& end = mother.last();
      std::vector<std::pair<double, std::size_t>> near;  // (squared distance, births idx)
      for (std::size_t bi = 0; bi < births.size(); ++bi) {
        if (claimed[bi]) continue;
        const DetectedCell& d = detections[births[bi].first];
        const double dx = d.x - end.x, dy = d.y - end.y;
        const double d2 = dx * dx + dy * dy;
        if (d2 <= r_daughter * r_daughter) near.emplace_back(d2, bi);
      }
      if (near.size() < 2) continue;
      std::sort(near.begin(), near.end());
      for (int k = 0; k < 2; ++k) {
        claimed[near[k].second] = 1;
        tracks_.at(births[near[k].second].second).parent = mother_id;
      }
    }
  }

  // Terminates remaining active tracks, prunes short childless ones and
  // renumbers ids densely 1..K preserving parent links. Non-destructive.
  LineageForest finalize() const {
    LineageForest forest;
    forest.trajectories = tracks_;
    for (auto& [id, t] : forest.trajectories)
      if (t.state == TrackState::Active) t.state = TrackState::Terminated;
    forest = prune_short(std::move(forest), params_.l_min);

    std::map<std::uint32_t, std::uint32_t> remap;
    std::uint32_t next = 1;
    for (const auto& [id, t] : forest.trajectories) remap[id] = next++;
    LineageForest dense;
    for (auto& [id, t] : forest.trajectories) {
      Trajectory moved = std::move(t);
      moved.id = remap.at(id);
      moved.parent = moved.parent == 0 ? 0 : remap.at(moved.parent);
      dense.trajectories.emplace(moved.id, std::move(moved));
    }
    return dense;
  }

  double n_size() const { return params_.n_size; }
  const std::map<std::uint32_t, Trajectory>& tracks() const { return tracks_; }

 private:
  TrackerParams params_;
  std::map<std::uint32_t, Trajectory> tracks_;
  std::uint32_t next_id_ = 1;
  int last_frame_ = -1;
};

}  // namespace celltrack
