#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "celltrack/dataprep.hpp"
#include "celltrack/detection.hpp"
#include "celltrack/errors.hpp"
#include "celltrack/metrics.hpp"
#include "celltrack/raster.hpp"
#include "celltrack/rng.hpp"
#include "celltrack/tracker.hpp"

namespace celltrack {

// Detector-style corruption of the rendered probability maps. Dropout removes
// whole cells (every frame of the track), mirroring a detector that never
// picks a cell up; jitter perturbs blob centers per frame; false positives
// are spurious normal-class blobs.
struct SynthCorruption {
  double dropout_prob = 0.0;
  double centroid_jitter_sigma = 0.0;
  double false_positive_rate = 0.0;  // expected false blobs per frame
};

struct SynthConfig {
  int width = 512, height = 512;
  int frames = 50;
  int initial_cells = 30;
  double cell_radius_mean = 6.0;
  double cell_radius_jitter = 1.5;
  double drift_sigma = 1.0;          // px/frame Brownian step
  double division_rate = 0.004;      // probability/frame/cell
  int mitotic_lead = 3;              // frames flagged Mitotic before the split
  int impurity_count = 8;            // static non-cell blobs in the images
  SynthCorruption corruption;
  std::uint64_t seed = 1;

  void validate() const {
    auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (width < 16 || height < 16) throw ConfigError("synth: extent must be at least 16 px");
    if (frames < 1) throw ConfigError("synth: frames must be >= 1");
    if (initial_cells < 0) throw ConfigError("synth: initial_cells must be >= 0");
    if (!(cell_radius_mean > 0.0) || cell_radius_jitter < 0.0)
      throw ConfigError("synth: radii must be positive");
    if (drift_sigma < 0.0) throw ConfigError("synth: drift_sigma must be >= 0");
    if (!prob(division_rate)) throw ConfigError("synth: division_rate must be in [0, 1]");
    if (mitotic_lead < 1) throw ConfigError("synth: mitotic_lead must be >= 1");
    if (impurity_count < 0) throw ConfigError("synth: impurity_count must be >= 0");
    if (!prob(corruption.dropout_prob) || corruption.centroid_jitter_sigma < 0.0 ||
        corruption.false_positive_rate < 0.0)
      throw ConfigError("synth: corruption parameters out of range");
  }
};

struct SynthCell {
  std::uint32_t id = 0;
  double x = 0.0, y = 0.0;
  double radius = 0.0;
  CellClass cls = CellClass::Normal;
};

struct SynthImpurity {
  double x = 0.0, y = 0.0, radius = 0.0;
};

// Ground-truth world state: per-frame cell snapshots, the division events and
// the static impurities. Cells never overlap; a minimum inter-cell gap keeps
// rendered blobs from touching.
struct SynthScene {
  int width = 0, height = 0, frames = 0;
  std::vector<std::vector<SynthCell>> cells;  // per frame, ascending id
  std::vector<DivisionEvent> events;
  std::vector<SynthImpurity> impurities;
  std::uint64_t seed = 0;
};

namespace synth_detail {

enum StreamId : std::uint64_t {
  kRadius = 1,
  kPlacement = 2,
  kMotion = 3,
  kDivision = 4,
  kDaughter = 5,
  kImpurity = 6,
  kDropout = 7,
  kJitter = 8,
  kFalsePositive = 9,
  kImageNoise = 10,
};

constexpr double kMinGap = 6.0;  // blobs must never become 8-connected

struct LiveCell {
  std::uint32_t id = 0;
  double x = 0.0, y = 0.0;
  double radius = 0.0;
  int born = 0;
  int newborn_mitotic_until = -1;  // daughters stay mitotic this long
  int divide_at = -1;              // -1 = not armed
};

inline bool separated(double x, double y, double r, const std::vector<LiveCell>& cells,
                      const LiveCell* skip) {
  for (const LiveCell& c : cells) {
    if (&c == skip) continue;
    const double dx = x - c.x, dy = y - c.y;
    const double need = r + c.radius + kMinGap;
    if (dx * dx + dy * dy < need * need) return false;
  }
  return true;
}

inline double draw_radius(std::uint64_t seed, std::uint32_t id, const SynthConfig& cfg) {
  Rng rng = Rng::stream(seed, kRadius, id);
  return std::max(1.5, cfg.cell_radius_mean + cfg.cell_radius_jitter * rng.uniform(-1.0, 1.0));
}

}  // namespace synth_detail

// Deterministic colony simulation. All randomness flows from config.seed
// through streams keyed on (purpose, frame, cell), so sub-streams replay
// independently of evaluation order.
inline SynthScene generate(const SynthConfig& cfg) {
  using namespace synth_detail;
  cfg.validate();

  SynthScene scene;
  scene.width = cfg.width;
  scene.height = cfg.height;
  scene.frames = cfg.frames;
  scene.seed = cfg.seed;

  std::vector<LiveCell> live;
  std::uint32_t next_id = 1;

  auto margin_clamp = [&](double v, double r, int extent) {
    return std::clamp(v, r + 1.0, extent - 2.0 - r);
  };

  for (int i = 0; i < cfg.initial_cells; ++i) {
    LiveCell cell;
    cell.id = next_id++;
    cell.radius = draw_radius(cfg.seed, cell.id, cfg);
    if (cfg.width < 2 * cell.radius + 4 || cfg.height < 2 * cell.radius + 4)
      throw ConfigError("synth: extent too small for cell radius");
    Rng rng = Rng::stream(cfg.seed, kPlacement, cell.id);
    bool placed = false;
    for (int attempt = 0; attempt < 2000; ++attempt) {
      cell.x = rng.uniform(cell.radius + 1.0, cfg.width - 2.0 - cell.radius);
      cell.y = rng.uniform(cell.radius + 1.0, cfg.height - 2.0 - cell.radius);
      if (separated(cell.x, cell.y, cell.radius, live, nullptr)) {
        placed = true;
        break;
      }
    }
    if (!placed) throw ConfigError("synth: infeasible packing, cells cannot fit without overlap");
    live.push_back(cell);
  }

  for (int k = 0; k < cfg.impurity_count; ++k) {
    Rng rng = Rng::stream(cfg.seed, kImpurity, static_cast<std::uint64_t>(k));
    SynthImpurity imp;
    imp.radius = rng.uniform(1.5, 3.0);
    imp.x = rng.uniform(2.0, cfg.width - 3.0);
    imp.y = rng.uniform(2.0, cfg.height - 3.0);
    scene.impurities.push_back(imp);
  }

  scene.cells.resize(cfg.frames);
  auto snapshot = [&](int frame) {
    auto& out = scene.cells[frame];
    for (const LiveCell& c : live) {
      CellClass cls = CellClass::Normal;
      if (c.divide_at >= 0 || frame <= c.newborn_mitotic_until) cls = CellClass::Mitotic;
      out.push_back({c.id, c.x, c.y, c.radius, cls});
    }
    std::sort(out.begin(), out.end(),
              [](const SynthCell& a, const SynthCell& b) { return a.id < b.id; });
  };

  auto arm_divisions = [&](int frame) {
    // Daughters must live at least mitotic_lead frames, which also keeps them
    // long enough to survey their own mitotic window.
    if (frame + 2 * cfg.mitotic_lead > cfg.frames - 1) return;
    for (LiveCell& c : live) {
      if (c.divide_at >= 0) continue;
      Rng rng = Rng::stream(cfg.seed, kDivision, c.id, static_cast<std::uint64_t>(frame));
      if (rng.bernoulli(cfg.division_rate)) c.divide_at = frame + cfg.mitotic_lead;
    }
  };

  arm_divisions(0);
  if (cfg.frames > 0) snapshot(0);

  for (int frame = 1; frame < cfg.frames; ++frame) {
    // Divisions scheduled for this frame replace the mother by two daughters
    // placed symmetrically about her last position.
    std::vector<LiveCell> next_live;
    next_live.reserve(live.size() + 4);
    for (LiveCell& c : live) {
      if (c.divide_at != frame) {
        next_live.push_back(c);
        continue;
      }
      const std::uint32_t da = next_id, db = next_id + 1;
      const double ra = draw_radius(cfg.seed, da, cfg);
      const double rb = draw_radius(cfg.seed, db, cfg);
      const double offset = std::max(ra, rb) + 3.5;
      Rng rng = Rng::stream(cfg.seed, kDaughter, c.id, static_cast<std::uint64_t>(frame));
      bool placed = false;
      double ax = 0, ay = 0, bx = 0, by = 0;
      for (int attempt = 0; attempt < 256 && !placed; ++attempt) {
        const double theta = rng.uniform(0.0, 6.283185307179586477);
        ax = margin_clamp(c.x + offset * std::cos(theta), ra, cfg.width);
        ay = margin_clamp(c.y + offset * std::sin(theta), ra, cfg.height);
        bx = margin_clamp(c.x - offset * std::cos(theta), rb, cfg.width);
        by = margin_clamp(c.y - offset * std::sin(theta), rb, cfg.height);
        const double ddx = ax - bx, ddy = ay - by;
        const double need = ra + rb + kMinGap;
        if (ddx * ddx + ddy * ddy < need * need) continue;
        if (!separated(ax, ay, ra, live, &c) || !separated(ax, ay, ra, next_live, nullptr))
          continue;
        if (!separated(bx, by, rb, live, &c) || !separated(bx, by, rb, next_live, nullptr))
          continue;
        placed = true;
      }
      if (!placed) {  // crowded neighborhood: cancel, the mother lives on
        c.divide_at = -1;
        next_live.push_back(c);
        continue;
      }
      next_id += 2;
      LiveCell a{da, ax, ay, ra, frame, frame + cfg.mitotic_lead - 1, -1};
      LiveCell b{db, bx, by, rb, frame, frame + cfg.mitotic_lead - 1, -1};
      scene.events.push_back({c.id, frame - 1, da, db});
      next_live.push_back(a);
      next_live.push_back(b);
    }
    live = std::move(next_live);

    // Brownian drift, clamped to the frame and rejected on contact.
    for (LiveCell& c : live) {
      if (c.born == frame) continue;
      Rng rng = Rng::stream(cfg.seed, kMotion, c.id, static_cast<std::uint64_t>(frame));
      for (int attempt = 0; attempt < 20; ++attempt) {
        const double nx = margin_clamp(c.x + rng.normal(cfg.drift_sigma), c.radius, cfg.width);
        const double ny = margin_clamp(c.y + rng.normal(cfg.drift_sigma), c.radius, cfg.height);
        if (separated(nx, ny, c.radius, live, &c)) {
          c.x = nx;
          c.y = ny;
          break;
        }
      }
    }

    arm_divisions(frame);
    snapshot(frame);
  }
  return scene;
}

// Ground-truth instance mask of one frame: filled disks labeled by track id.
inline LabelMap scene_mask(const SynthScene& scene, int frame) {
  LabelMap mask(scene.width, scene.height, 1, 0);
  for (const SynthCell& c : scene.cells.at(frame)) {
    const int x0 = std::max(0, static_cast<int>(std::floor(c.x - c.radius)));
    const int x1 = std::min(scene.width - 1, static_cast<int>(std::ceil(c.x + c.radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(c.y - c.radius)));
    const int y1 = std::min(scene.height - 1, static_cast<int>(std::ceil(c.y + c.radius)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - c.x, dy = y - c.y;
        if (dx * dx + dy * dy <= c.radius * c.radius) mask.at(x, y) = c.id;
      }
    }
  }
  return mask;
}

inline LineageForest scene_forest(const SynthScene& scene) {
  LineageForest forest;
  for (int f = 0; f < scene.frames; ++f) {
    for (const SynthCell& c : scene.cells[f]) {
      auto [it, inserted] = forest.trajectories.try_emplace(c.id);
      Trajectory& t = it->second;
      if (inserted) {
        t.id = c.id;
        t.state = TrackState::Terminated;
      }
      t.rows.push_back({c.x, c.y, f, c.cls});
    }
  }
  for (const DivisionEvent& ev : scene.events) {
    forest.trajectories.at(ev.daughter_a).parent = ev.mother;
    forest.trajectories.at(ev.daughter_b).parent = ev.mother;
  }
  return forest;
}

inline std::vector<GtDetection> scene_detections(const SynthScene& scene) {
  std::vector<GtDetection> out;
  for (int f = 0; f < scene.frames; ++f)
    for (const SynthCell& c : scene.cells[f]) out.push_back({f, c.x, c.y, c.cls});
  return out;
}

// Cells as soft-edged bright disks over a noisy background; impurities are
// dimmer static blobs. Rendered support never leaves the ground-truth mask
// dilated by one pixel.
inline std::vector<ImageF> render_images(const SynthScene& scene) {
  using namespace synth_detail;
  std::vector<ImageF> out;
  out.reserve(scene.frames);
  auto splat = [](ImageF& img, double cx, double cy, double r, double amp) {
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
    const int x1 = std::min(img.width() - 1, static_cast<int>(std::ceil(cx + r + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
    const int y1 = std::min(img.height() - 1, static_cast<int>(std::ceil(cy + r + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d = std::hypot(x - cx, y - cy);
        const double cov = std::clamp(r + 0.5 - d, 0.0, 1.0);
        if (cov > 0.0) img.at(x, y) = static_cast<float>(std::min(1.0, img.at(x, y) + amp * cov));
      }
    }
  };
  for (int f = 0; f < scene.frames; ++f) {
    ImageF img(scene.width, scene.height);
    Rng noise = Rng::stream(scene.seed, kImageNoise, static_cast<std::uint64_t>(f));
    for (float& v : img.storage())
      v = static_cast<float>(std::clamp(0.08 + noise.normal(0.02), 0.0, 1.0));
    for (const SynthImpurity& imp : scene.impurities)
      splat(img, imp.x, imp.y, imp.radius, 0.22);
    for (const SynthCell& c : scene.cells[f])
      splat(img, c.x, c.y, c.radius, c.cls == CellClass::Mitotic ? 0.82 : 0.62);
    out.push_back(std::move(img));
  }
  return out;
}

struct SynthProbMaps {
  std::vector<ProbMap> det;  // (mitotic, normal, background)
  std::vector<ProbMap> seg;  // (boundary, interior, background)
};

// Idealized detector outputs: one-hot blobs at (possibly corrupted) cell
// supports. Dropout and jitter draw once per cell so the DET and SEG maps
// stay mutually consistent; everything is keyed off scene.seed.
inline SynthProbMaps render_probmaps(const SynthScene& scene, const SynthCorruption& corr) {
  using namespace synth_detail;
  SynthProbMaps maps;
  maps.det.reserve(scene.frames);
  maps.seg.reserve(scene.frames);

  struct Blob {
    double x, y, r;
    CellClass cls;
  };

  for (int f = 0; f < scene.frames; ++f) {
    std::vector<Blob> blobs;
    for (const SynthCell& c : scene.cells[f]) {
      if (corr.dropout_prob > 0.0 &&
          Rng::stream(scene.seed, kDropout, c.id).bernoulli(corr.dropout_prob))
        continue;
      double x = c.x, y = c.y;
      if (corr.centroid_jitter_sigma > 0.0) {
        Rng rng = Rng::stream(scene.seed, kJitter, c.id, static_cast<std::uint64_t>(f));
        x += rng.normal(corr.centroid_jitter_sigma);
        y += rng.normal(corr.centroid_jitter_sigma);
      }
      blobs.push_back({x, y, c.radius, c.cls});
    }
    if (corr.false_positive_rate > 0.0) {
      Rng rng = Rng::stream(scene.seed, kFalsePositive, static_cast<std::uint64_t>(f));
      const int count = rng.poisson(corr.false_positive_rate);
      for (int k = 0; k < count; ++k) {
        Blob b{rng.uniform(4.0, scene.width - 5.0), rng.uniform(4.0, scene.height - 5.0),
               rng.uniform(2.0, 4.0), CellClass::Normal};
        blobs.push_back(b);
      }
    }

    ProbMap det(scene.width, scene.height, 3, 0.0f);
    ProbMap seg(scene.width, scene.height, 3, 0.0f);
    for (int y = 0; y < scene.height; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        det.at(x, y, kDetBackground) = 1.0f;
        seg.at(x, y, kSegBackground) = 1.0f;
      }
    }
    for (const Blob& b : blobs) {
      const int x0 = std::max(0, static_cast<int>(std::floor(b.x - b.r)));
      const int x1 = std::min(scene.width - 1, static_cast<int>(std::ceil(b.x + b.r)));
      const int y0 = std::max(0, static_cast<int>(std::floor(b.y - b.r)));
      const int y1 = std::min(scene.height - 1, static_cast<int>(std::ceil(b.y + b.r)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double dx = x - b.x, dy = y - b.y;
          const double d2 = dx * dx + dy * dy;
          if (d2 > b.r * b.r) continue;
          const int det_ch = b.cls == CellClass::Mitotic ? kDetMitotic : kDetNormal;
          det.at(x, y, kDetMitotic) = 0.0f;
          det.at(x, y, kDetNormal) = 0.0f;
          det.at(x, y, det_ch) = 1.0f;
          det.at(x, y, kDetBackground) = 0.0f;
          const int seg_ch = d2 <= (b.r - 1.0) * (b.r - 1.0) ? kSegInterior : kSegBoundary;
          seg.at(x, y, kSegBoundary) = 0.0f;
          seg.at(x, y, kSegInterior) = 0.0f;
          seg.at(x, y, seg_ch) = 1.0f;
          seg.at(x, y, kSegBackground) = 0.0f;
        }
      }
    }
    maps.det.push_back(std::move(det));
    maps.seg.push_back(std::move(seg));
  }
  return maps;
}

}  // namespace celltrack
