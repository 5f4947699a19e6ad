#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "celltrack/config.hpp"
#include "celltrack/ctc_io.hpp"
#include "celltrack/detection.hpp"
#include "celltrack/errors.hpp"
#include "celltrack/metrics.hpp"
#include "celltrack/parallel.hpp"
#include "celltrack/segmentation.hpp"
#include "celltrack/synth.hpp"
#include "celltrack/tracker.hpp"

namespace celltrack {

struct StageTimings {
  double detect_s = 0.0, track_s = 0.0, segment_s = 0.0, export_s = 0.0;
};

struct PipelineResult {
  LineageForest forest;
  int frames = 0;
  StageTimings timings;
};

namespace pipeline_detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Tracked centroids per frame, the seeds of the fine segmentation.
inline std::map<int, SeedSet> forest_seeds(const LineageForest& forest) {
  std::map<int, SeedSet> seeds;
  for (const auto& [id, t] : forest.trajectories)
    for (const StatusRow& r : t.rows) seeds[r.frame].seeds.push_back({id, r.x, r.y});
  return seeds;
}

}  // namespace pipeline_detail

// Full downstream pipeline over one dataset: probability maps -> detections
// -> trajectories -> blobs -> instances -> CTC-format export. Per-frame
// stages run with bounded parallelism; tracking is strictly frame-ordered.
// Results are staged and moved into place only when complete.
inline PipelineResult run_pipeline(const std::filesystem::path& dataset_root,
                                   const std::filesystem::path& out_dir,
                                   const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  const SequenceLayout layout{dataset_root, "01"};
  const fs::path prob = layout.prob_dir();
  const int frames = count_frames(prob, "det", ".ctkr");
  if (frames == 0)
    throw ConfigError("no probability maps found under " + prob.string() +
                      " (expected det000.ctkr, ...)");
  if (count_frames(prob, "seg", ".ctkr") != frames)
    throw ConfigError("det/seg probability map counts differ under " + prob.string());

  PipelineResult result;
  result.frames = frames;
  auto t0 = std::chrono::steady_clock::now();

  std::vector<std::vector<DetectedCell>> detections(frames);
  parallel_for(frames, cfg.threads, [&](int f) {
    const ProbMap map = read_probmap(prob / frame_name("det", f, ".ctkr"));
    detections[f] = detect_cells(map, f, cfg.detection);
  });
  result.timings.detect_s = pipeline_detail::seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  Tracker tracker(cfg.tracker);
  for (int f = 0; f < frames; ++f) tracker.step(detections[f], f);
  result.forest = tracker.finalize();
  result.timings.track_s = pipeline_detail::seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  const std::map<int, SeedSet> seeds = pipeline_detail::forest_seeds(result.forest);
  std::vector<InstanceMap> instances(frames);
  parallel_for(frames, cfg.threads, [&](int f) {
    const ProbMap map = read_probmap(prob / frame_name("seg", f, ".ctkr"));
    const BlobMap blobs = primary_segment(map, cfg.seg_theta_interior, cfg.seg_theta_boundary);
    const auto it = seeds.find(f);
    if (it != seeds.end() && !it->second.seeds.empty())
      instances[f] = fine_segment(blobs, it->second);
    else
      instances[f] = InstanceMap(blobs.width(), blobs.height(), 1, 0);
  });
  result.timings.segment_s = pipeline_detail::seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  const fs::path staging = out_dir.string() + ".staging";
  fs::remove_all(staging);
  export_forest(result.forest, instances, staging);
  write_tracked_points(result.forest, staging / "tracked_points.txt");
  fs::remove_all(out_dir);
  fs::rename(staging, out_dir);
  result.timings.export_s = pipeline_detail::seconds_since(t0);
  return result;
}

// Writes a full synthetic dataset in CTC layout: images, TRA/SEG ground
// truth, detector-style probability maps and a manifest carrying the seed.
inline void write_synth_dataset(const SynthConfig& synth_cfg, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const SynthScene scene = generate(synth_cfg);
  const SynthProbMaps maps = render_probmaps(scene, synth_cfg.corruption);
  const std::vector<ImageF> images = render_images(scene);

  const SequenceLayout layout{root, "01"};
  fs::create_directories(layout.images_dir());
  fs::create_directories(layout.gt_tra_dir());
  fs::create_directories(layout.gt_seg_dir());
  fs::create_directories(layout.prob_dir());

  for (int f = 0; f < scene.frames; ++f) {
    write_image_tiff(images[f], layout.images_dir() / frame_name("t", f, ".tif"));
    const LabelMap mask = scene_mask(scene, f);
    write_label_tiff(mask, layout.gt_tra_dir() / frame_name("man_track", f, ".tif"));
    write_label_tiff(mask, layout.gt_seg_dir() / frame_name("man_seg", f, ".tif"));

    // One-hot maps are exactly representable in u8.
    auto quantize = [](const ProbMap& m) {
      Raster<std::uint8_t> q(m.width(), m.height(), m.channels());
      for (std::size_t i = 0; i < m.size(); ++i)
        q.storage()[i] = static_cast<std::uint8_t>(std::llround(m.storage()[i] * 255.0f));
      return q;
    };
    write_raster_container(quantize(maps.det[f]), layout.prob_dir() / frame_name("det", f, ".ctkr"));
    write_raster_container(quantize(maps.seg[f]), layout.prob_dir() / frame_name("seg", f, ".ctkr"));
  }

  const LineageForest gt = scene_forest(scene);
  write_track_file(forest_records(gt), layout.gt_tra_dir() / "man_track.txt");
  write_tracked_points(gt, layout.gt_tra_dir() / "tracked_points.txt");

  std::ostringstream manifest;
  manifest << "{\n"
           << "  \"seed\": " << synth_cfg.seed << ",\n"
           << "  \"width\": " << synth_cfg.width << ",\n"
           << "  \"height\": " << synth_cfg.height << ",\n"
           << "  \"frames\": " << synth_cfg.frames << ",\n"
           << "  \"initial_cells\": " << synth_cfg.initial_cells << ",\n"
           << "  \"division_events\": " << scene.events.size() << "\n"
           << "}\n";
  const std::string s = manifest.str();
  io_detail::write_file(root / "manifest.json", std::vector<std::uint8_t>(s.begin(), s.end()));
}

// ------------------------------------------------------------- evaluation --

struct EvalReport {
  DetectionScore detection;
  MatchResult mitosis;
  MatchResult links;
  double seg = 0.0;
  double r_match = 0.0, mitosis_r = 0.0;
  int mitosis_dt = 0;
};

namespace pipeline_detail {

// Tolerances default relative to the mean cell scale, estimated from the
// ground-truth masks of the first frame when the tracker's n_size is auto.
inline double estimate_n_size(const std::vector<LabelMap>& gt_masks) {
  if (gt_masks.empty()) return 0.0;
  std::map<std::uint32_t, long> areas;
  for (const std::uint32_t v : gt_masks.front().storage())
    if (v != 0) ++areas[v];
  if (areas.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [id, a] : areas) sum += std::sqrt(static_cast<double>(a));
  return sum / static_cast<double>(areas.size());
}

}  // namespace pipeline_detail

// Compares an exported result directory against CTC-style ground truth.
inline EvalReport evaluate_results(const std::filesystem::path& res_dir,
                                   const std::filesystem::path& gt_root,
                                   const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path tra = gt_root / "TRA";
  const fs::path seg = gt_root / "SEG";
  if (!fs::exists(tra / "man_track.txt"))
    throw ConfigError("missing ground truth track file under " + tra.string());
  if (!fs::exists(res_dir / "res_track.txt"))
    throw ConfigError("missing results track file under " + res_dir.string());

  const LineageForest pred = import_forest(res_dir, "mask", "res_track.txt");
  const LineageForest gt = import_forest(tra, "man_track", "man_track.txt");

  const std::vector<LabelMap> pred_masks = read_mask_sequence(res_dir, "mask");
  const std::vector<LabelMap> gt_seg = read_mask_sequence(seg, "man_seg");
  const std::vector<LabelMap> gt_tra_masks = read_mask_sequence(tra, "man_track");
  if (pred_masks.size() != gt_tra_masks.size())
    throw ConfigError("result and ground-truth mask counts differ");

  EvalReport report;
  double n_size = cfg.tracker.n_size;
  if (n_size <= 0.0) n_size = pipeline_detail::estimate_n_size(gt_tra_masks);
  if (n_size <= 0.0) n_size = 10.0;
  report.r_match = cfg.metrics_r_match > 0.0 ? cfg.metrics_r_match : n_size / 2.0;
  report.mitosis_r = cfg.metrics_mitosis_r > 0.0 ? cfg.metrics_mitosis_r : n_size;
  report.mitosis_dt = cfg.metrics_mitosis_dt;

  // Classes are not stored in CTC track files; both sides get them derived
  // from lineage with the same mitotic window.
  const auto pred_det_rows = lineage_detections(pred, cfg.metrics_n_mitosis);
  const auto gt_det_rows = lineage_detections(gt, cfg.metrics_n_mitosis);
  std::vector<DetectedCell> pred_cells;
  pred_cells.reserve(pred_det_rows.size());
  for (const GtDetection& d : pred_det_rows)
    pred_cells.push_back({d.frame, d.x, d.y, d.cls, 1, 0});

  report.detection = match_detections(pred_cells, gt_det_rows, report.r_match);
  report.mitosis =
      match_mitosis(mitosis_events(pred), mitosis_events(gt), report.mitosis_dt, report.mitosis_r);
  report.links = link_score(pred, gt, report.r_match);
  if (!gt_seg.empty()) {
    if (gt_seg.size() != pred_masks.size())
      throw ConfigError("result and SEG ground-truth mask counts differ");
    report.seg = seg_score(pred_masks, gt_seg);
  }
  return report;
}

}  // namespace celltrack
