#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "celltrack/tracker.hpp"

namespace celltrack::test {

// Checks every structural invariant a lineage forest promises: ids >= 1,
// contiguous per-frame coverage, parent links acyclic with at most two
// children all starting right after the parent ends.
inline void check_forest_invariants(const LineageForest& forest) {
  std::map<std::uint32_t, std::vector<std::uint32_t>> children;
  for (const auto& [id, t] : forest.trajectories) {
    REQUIRE(id >= 1u);
    REQUIRE(t.id == id);
    REQUIRE(!t.rows.empty());
    REQUIRE(t.parent != id);
    for (std::size_t i = 1; i < t.rows.size(); ++i)
      REQUIRE(t.rows[i].frame == t.rows[i - 1].frame + 1);
    if (t.parent != 0) {
      REQUIRE(forest.trajectories.count(t.parent) == 1);
      children[t.parent].push_back(id);
    }
  }
  for (const auto& [parent, kids] : children) {
    REQUIRE(kids.size() <= 2);
    const Trajectory& p = forest.trajectories.at(parent);
    for (const std::uint32_t kid : kids)
      REQUIRE(forest.trajectories.at(kid).start_frame() == p.end_frame() + 1);
  }
  // Acyclicity: walking parents must terminate.
  for (const auto& [id, t] : forest.trajectories) {
    std::set<std::uint32_t> seen{id};
    std::uint32_t cur = t.parent;
    while (cur != 0) {
      REQUIRE(seen.insert(cur).second);
      cur = forest.trajectories.at(cur).parent;
    }
  }
}

// Forests are isomorphic when an id bijection preserves spans, row positions
// (within tol, absorbing mask-centroid discretization) and parent structure.
inline bool forest_isomorphic(const LineageForest& a, const LineageForest& b, double tol = 1.0) {
  if (a.trajectories.size() != b.trajectories.size()) return false;
  struct Cand {
    double d;
    std::uint32_t ia, ib;
  };
  std::vector<Cand> cands;
  for (const auto& [ia, ta] : a.trajectories) {
    for (const auto& [ib, tb] : b.trajectories) {
      if (ta.start_frame() != tb.start_frame() || ta.end_frame() != tb.end_frame()) continue;
      const double d = std::hypot(ta.rows.front().x - tb.rows.front().x,
                                  ta.rows.front().y - tb.rows.front().y);
      if (d <= tol) cands.push_back({d, ia, ib});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& l, const Cand& r) {
    if (l.d != r.d) return l.d < r.d;
    if (l.ia != r.ia) return l.ia < r.ia;
    return l.ib < r.ib;
  });
  std::map<std::uint32_t, std::uint32_t> fwd;
  std::set<std::uint32_t> used;
  for (const Cand& c : cands) {
    if (fwd.count(c.ia) || used.count(c.ib)) continue;
    fwd[c.ia] = c.ib;
    used.insert(c.ib);
  }
  if (fwd.size() != a.trajectories.size()) return false;
  for (const auto& [ia, ta] : a.trajectories) {
    const Trajectory& tb = b.trajectories.at(fwd.at(ia));
    if (ta.parent == 0 && tb.parent != 0) return false;
    if (ta.parent != 0 && (!fwd.count(ta.parent) || fwd.at(ta.parent) != tb.parent)) return false;
    for (std::size_t i = 0; i < ta.rows.size(); ++i)
      if (std::hypot(ta.rows[i].x - tb.rows[i].x, ta.rows[i].y - tb.rows[i].y) > tol) return false;
  }
  return true;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("celltrack_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace celltrack::test
