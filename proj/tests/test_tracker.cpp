#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "celltrack/synth.hpp"
#include "celltrack/tracker.hpp"
#include "test_util.hpp"

using namespace celltrack;

namespace {

DetectedCell cell_at(double x, double y, CellClass cls = CellClass::Normal, long area = 16) {
  DetectedCell d;
  d.x = x;
  d.y = y;
  d.cls = cls;
  d.area = area;
  return d;
}

Trajectory track_ending_at(std::uint32_t id, double x, double y, int frame,
                           CellClass cls = CellClass::Normal) {
  Trajectory t;
  t.id = id;
  t.rows.push_back({x, y, frame, cls});
  return t;
}

// Direct greedy definition: repeatedly take the globally best remaining pair.
Association associate_oracle(const std::vector<const Trajectory*>& active,
                             const std::vector<DetectedCell>& detections,
                             const TrackerParams& params) {
  Association out;
  std::set<std::uint32_t> used_tracks;
  std::set<int> used_dets;
  while (true) {
    double best = -1.0;
    std::uint32_t best_track = 0;
    int best_det = -1;
    for (const Trajectory* t : active) {
      if (used_tracks.count(t->id)) continue;
      for (int di = 0; di < static_cast<int>(detections.size()); ++di) {
        if (used_dets.count(di)) continue;
        const double v = iou(BBox{t->last().x, t->last().y, params.n_size},
                             BBox{detections[di].x, detections[di].y, params.n_size});
        if (v < params.alpha) continue;
        if (v > best || (v == best && (t->id < best_track || (t->id == best_track && di < best_det)))) {
          best = v;
          best_track = t->id;
          best_det = di;
        }
      }
    }
    if (best_det < 0) break;
    used_tracks.insert(best_track);
    used_dets.insert(best_det);
    out.matches.emplace_back(best_track, best_det);
  }
  for (const Trajectory* t : active)
    if (!used_tracks.count(t->id)) out.unmatched_tracks.push_back(t->id);
  for (int di = 0; di < static_cast<int>(detections.size()); ++di)
    if (!used_dets.count(di)) out.unmatched_detections.push_back(di);
  return out;
}

}  // namespace

TEST_CASE("bbox geometry") {
  const BBox b = bbox_of(cell_at(10.0, 10.0), 4.0);
  CHECK(b.cx - b.size / 2 == Catch::Approx(8.0));
  CHECK(b.cx + b.size / 2 == Catch::Approx(12.0));
  CHECK_THROWS_AS(bbox_of(cell_at(1, 1), 0.0), std::invalid_argument);
}

TEST_CASE("iou basics") {
  const BBox a{5, 5, 10};
  CHECK(iou(a, a) == Catch::Approx(1.0));
  CHECK(iou(a, BBox{50, 50, 10}) == 0.0);
  CHECK(iou(a, BBox{10, 5, 10}) == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("iou properties") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> pos(0.0, 40.0), size(1.0, 15.0);
  for (int i = 0; i < 300; ++i) {
    const BBox a{pos(rng), pos(rng), size(rng)};
    const BBox b{pos(rng), pos(rng), size(rng)};
    const double v = iou(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == iou(b, a));
    if (v == 1.0) {
      CHECK(a.cx == b.cx);
      CHECK(a.cy == b.cy);
      CHECK(a.size == b.size);
    }
  }
}

TEST_CASE("association follows Eq. 2-3") {
  TrackerParams params;
  params.alpha = 0.2;
  params.n_size = 10.0;

  const Trajectory t1 = track_ending_at(1, 10, 10, 0);
  std::vector<const Trajectory*> active{&t1};

  // IOU above alpha: matched.
  {
    const auto a = associate(active, {cell_at(12, 10)}, params);
    REQUIRE(a.matches.size() == 1);
    CHECK(a.matches[0] == std::make_pair(std::uint32_t{1}, 0));
  }
  // Best IOU below alpha: both sides unmatched.
  {
    const auto a = associate(active, {cell_at(19, 10)}, params);
    CHECK(a.matches.empty());
    CHECK(a.unmatched_tracks == std::vector<std::uint32_t>{1});
    CHECK(a.unmatched_detections == std::vector<int>{1 - 1});
  }
  // Two candidates: the argmax one wins.
  {
    const auto a = associate(active, {cell_at(16, 10), cell_at(11, 10)}, params);
    REQUIRE(a.matches.size() == 1);
    CHECK(a.matches[0] == std::make_pair(std::uint32_t{1}, 1));
    CHECK(a.unmatched_detections == std::vector<int>{0});
  }
}

TEST_CASE("greedy association equals the exhaustive oracle on random sets") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> pos(0.0, 60.0);
  std::uniform_int_distribution<int> count(0, 12);
  TrackerParams params;
  params.alpha = 0.3;
  params.n_size = 8.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Trajectory> tracks;
    const int nt = count(rng), nd = count(rng);
    for (int i = 0; i < nt; ++i) tracks.push_back(track_ending_at(i + 1, pos(rng), pos(rng), 0));
    std::vector<const Trajectory*> active;
    for (const auto& t : tracks) active.push_back(&t);
    std::vector<DetectedCell> dets;
    for (int i = 0; i < nd; ++i) dets.push_back(cell_at(pos(rng), pos(rng)));

    const Association got = associate(active, dets, params);
    const Association want = associate_oracle(active, dets, params);
    CHECK(got.matches == want.matches);
    CHECK(got.unmatched_tracks == want.unmatched_tracks);
    CHECK(got.unmatched_detections == want.unmatched_detections);

    std::set<int> dets_seen;
    for (const auto& [track, det] : got.matches) {
      CHECK(dets_seen.insert(det).second);  // each detection used at most once
      const auto& t = tracks[track - 1];
      CHECK(iou(BBox{t.last().x, t.last().y, params.n_size},
                BBox{dets[det].x, dets[det].y, params.n_size}) >= params.alpha);
    }
  }
}

TEST_CASE("association decisions are invariant to uniform geometry scaling") {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> pos(0.0, 60.0);
  TrackerParams params;
  params.alpha = 0.25;
  params.n_size = 9.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Trajectory> tracks;
    for (int i = 0; i < 6; ++i) tracks.push_back(track_ending_at(i + 1, pos(rng), pos(rng), 0));
    std::vector<DetectedCell> dets;
    for (int i = 0; i < 6; ++i) dets.push_back(cell_at(pos(rng), pos(rng)));

    std::vector<const Trajectory*> active;
    for (const auto& t : tracks) active.push_back(&t);
    const Association base = associate(active, dets, params);

    const double c = 3.0;
    std::vector<Trajectory> tracks2 = tracks;
    for (auto& t : tracks2) {
      t.rows[0].x *= c;
      t.rows[0].y *= c;
    }
    std::vector<DetectedCell> dets2 = dets;
    for (auto& d : dets2) {
      d.x *= c;
      d.y *= c;
    }
    TrackerParams params2 = params;
    params2.n_size *= c;
    std::vector<const Trajectory*> active2;
    for (const auto& t : tracks2) active2.push_back(&t);
    const Association scaled = associate(active2, dets2, params2);
    CHECK(base.matches == scaled.matches);
  }
}

TEST_CASE("mitosis threshold is strict") {
  CellStatusMatrix m(5);
  m.push({0, 0, 0, CellClass::Normal});
  m.push({0, 0, 1, CellClass::Mitotic});
  m.push({0, 0, 2, CellClass::Mitotic});
  CHECK_FALSE(detect_mitosis(m, 2));  // count == threshold
  m.push({0, 0, 3, CellClass::Mitotic});
  CHECK(detect_mitosis(m, 2));  // count 3 > 2

  CellStatusMatrix all_normal(4);
  for (int f = 0; f < 4; ++f) all_normal.push({0, 0, f, CellClass::Normal});
  CHECK_FALSE(detect_mitosis(all_normal, 0));

  // The window is bounded: old mitotic rows age out.
  CellStatusMatrix window(3);
  for (int f = 0; f < 3; ++f) window.push({0, 0, f, CellClass::Mitotic});
  for (int f = 3; f < 6; ++f) window.push({0, 0, f, CellClass::Normal});
  CHECK(window.mitotic_count() == 0);
  CHECK(window.size() == 3);
}

TEST_CASE("step requires strictly increasing frames and terminates on silence") {
  TrackerParams params;
  params.n_size = 6.0;
  params.l_min = 1;
  Tracker tracker(params);
  tracker.step({cell_at(10, 10)}, 0);
  CHECK_THROWS_AS(tracker.step({}, 0), std::invalid_argument);
  tracker.step({}, 1);  // empty detections terminate all actives
  const auto& tracks = tracker.tracks();
  REQUIRE(tracks.size() == 1);
  CHECK(tracks.at(1).state == TrackState::Terminated);
  CHECK(tracks.at(1).end_frame() == 0);
}

TEST_CASE("a firing status matrix plus two nearby births makes a division") {
  TrackerParams params;
  params.alpha = 0.2;
  params.n_size = 4.0;
  params.w_status = 5;
  params.theta_mit = 2;
  params.l_min = 1;
  params.r_daughter = 10.0;
  Tracker tracker(params);

  for (int f = 0; f <= 4; ++f) {
    const CellClass cls = f >= 2 ? CellClass::Mitotic : CellClass::Normal;
    tracker.step({cell_at(10.0 + 0.4 * f, 10.0, cls)}, f);
  }
  // Mother ends near (11.6, 10): daughters appear either side, out of IOU
  // range but within r_daughter.
  tracker.step({cell_at(6.0, 10.0), cell_at(15.0, 10.0)}, 5);

  const LineageForest forest = tracker.finalize();
  test::check_forest_invariants(forest);
  REQUIRE(forest.trajectories.size() == 3);
  const Trajectory& mother = forest.trajectories.at(1);
  CHECK(mother.end_frame() == 4);
  CHECK(forest.trajectories.at(2).parent == 1);
  CHECK(forest.trajectories.at(3).parent == 1);
  CHECK(forest.trajectories.at(2).start_frame() == 5);

  const auto events = mitosis_events(forest);
  REQUIRE(events.size() == 1);
  CHECK(events[0].frame == 4);
}

TEST_CASE("one nearby birth is not a division") {
  TrackerParams params;
  params.n_size = 4.0;
  params.theta_mit = 2;
  params.l_min = 1;
  params.r_daughter = 10.0;
  Tracker tracker(params);
  for (int f = 0; f <= 4; ++f)
    tracker.step({cell_at(10, 10, f >= 1 ? CellClass::Mitotic : CellClass::Normal)}, f);
  tracker.step({cell_at(15, 10)}, 5);
  const LineageForest forest = tracker.finalize();
  for (const auto& [id, t] : forest.trajectories) CHECK(t.parent == 0);
}

TEST_CASE("pruning removes short childless tracks only") {
  LineageForest forest;
  auto add = [&](std::uint32_t id, int b, int e, std::uint32_t parent) {
    Trajectory t;
    t.id = id;
    t.parent = parent;
    for (int f = b; f <= e; ++f) t.rows.push_back({0, 0, f, CellClass::Normal});
    forest.trajectories.emplace(id, std::move(t));
  };
  add(1, 0, 0, 0);   // 1 frame, childless: removed
  add(2, 0, 1, 0);   // 2 frames, mother of 3 and 4: kept
  add(3, 2, 40, 2);
  add(4, 2, 2, 2);   // 1 frame but has a parent; childless and short: removed
  const LineageForest pruned = prune_short(forest, 3);
  CHECK(pruned.trajectories.count(1) == 0);
  CHECK(pruned.trajectories.count(2) == 1);  // still has child 3
  CHECK(pruned.trajectories.count(3) == 1);
  CHECK(pruned.trajectories.count(4) == 0);

  // Unchanged when everything is long enough.
  const LineageForest again = prune_short(pruned, 1);
  CHECK(again.trajectories.size() == pruned.trajectories.size());

  // Cascade: removing the long child would leave the mother childless. With
  // l_min above everything, the whole family goes in waves.
  const LineageForest empty = prune_short(forest, 100);
  CHECK(empty.trajectories.empty());
}

TEST_CASE("finalize produces dense ids and preserved structure") {
  TrackerParams params;
  params.n_size = 5.0;
  params.l_min = 1;
  Tracker empty_tracker(params);
  CHECK(empty_tracker.finalize().trajectories.empty());

  Tracker tracker(params);
  for (int f = 0; f < 6; ++f) tracker.step({cell_at(20, 20)}, f);
  const LineageForest forest = tracker.finalize();
  REQUIRE(forest.trajectories.size() == 1);
  CHECK(forest.trajectories.at(1).start_frame() == 0);
  CHECK(forest.trajectories.at(1).end_frame() == 5);
  CHECK(forest.trajectories.at(1).parent == 0);
}

TEST_CASE("n_size defaults to the mean side length of first-frame detections") {
  TrackerParams params;
  Tracker tracker(params);
  tracker.step({cell_at(10, 10, CellClass::Normal, 16), cell_at(30, 30, CellClass::Normal, 36)}, 0);
  CHECK(tracker.n_size() == Catch::Approx(5.0));  // mean of sqrt(16), sqrt(36)
}

TEST_CASE("tracking a perfect synthetic sequence recovers ground truth") {
  SynthConfig cfg;
  cfg.width = 320;
  cfg.height = 320;
  cfg.frames = 30;
  cfg.initial_cells = 16;
  cfg.division_rate = 0.012;
  cfg.mitotic_lead = 3;
  cfg.seed = 21;
  const SynthScene scene = generate(cfg);
  const LineageForest gt = scene_forest(scene);
  REQUIRE(!scene.events.empty());

  Tracker tracker(TrackerParams{});
  for (int f = 0; f < scene.frames; ++f) {
    std::vector<DetectedCell> dets;
    for (const SynthCell& c : scene.cells[f]) {
      const double r = c.radius;
      dets.push_back(cell_at(c.x, c.y, c.cls, std::lround(3.14159 * r * r)));
    }
    tracker.step(dets, f);
  }
  const LineageForest forest = tracker.finalize();
  test::check_forest_invariants(forest);
  CHECK(test::forest_isomorphic(forest, gt, 0.1));
  CHECK(link_score(forest, gt, 3.0).f1 == 1.0);

  // Determinism: replaying the same stream gives the same forest.
  Tracker replay(TrackerParams{});
  for (int f = 0; f < scene.frames; ++f) {
    std::vector<DetectedCell> dets;
    for (const SynthCell& c : scene.cells[f])
      dets.push_back(cell_at(c.x, c.y, c.cls, std::lround(3.14159 * c.radius * c.radius)));
    replay.step(dets, f);
  }
  CHECK(test::forest_isomorphic(replay.finalize(), forest, 0.0));
}
