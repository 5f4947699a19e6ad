// celltrack: synthetic data generation, the joint detection/tracking/
// segmentation pipeline, evaluation and overlay rendering.
//
// Exit codes: 0 success, 2 usage/config/input error, 3 internal invariant
// violation.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "celltrack/config.hpp"
#include "celltrack/ctc_io.hpp"
#include "celltrack/errors.hpp"
#include "celltrack/overlay.hpp"
#include "celltrack/pipeline.hpp"

namespace fs = std::filesystem;
using namespace celltrack;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string in_dir, out_dir, gt_dir;
  std::int64_t seed = -1;
  int threads = -1;
};

PipelineConfig load_effective_config(const CommonArgs& args) {
  PipelineConfig cfg;
  if (!args.config_path.empty()) cfg = load_config(args.config_path);
  if (args.seed >= 0) cfg.synth.seed = static_cast<std::uint64_t>(args.seed);
  if (args.threads >= 0) cfg.threads = args.threads;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool in, bool out, bool gt) {
  cmd->add_option("--config", args.config_path, "Configuration file (key = value lines)");
  cmd->add_option("--seed", args.seed, "Override synth.seed");
  cmd->add_option("--threads", args.threads, "Override worker thread count (0 = hardware)");
  if (in) cmd->add_option("--in", args.in_dir, "Input directory")->required();
  if (out) cmd->add_option("--out", args.out_dir, "Output directory or file")->required();
  if (gt) cmd->add_option("--gt", args.gt_dir, "Ground-truth directory")->required();
}

void print_match(const char* name, const MatchResult& m) {
  std::printf("%-18s P=%.4f R=%.4f F1=%.4f  (tp=%ld fp=%ld fn=%ld)\n", name, m.precision,
              m.recall, m.f1, m.tp, m.fp, m.fn);
}

int run_eval(const CommonArgs& args) {
  const PipelineConfig cfg = load_effective_config(args);
  const EvalReport report = evaluate_results(args.in_dir, args.gt_dir, cfg);
  std::printf("evaluation (r_match=%.2f, mitosis dt=%d r=%.2f)\n", report.r_match,
              report.mitosis_dt, report.mitosis_r);
  print_match("detection", report.detection.overall);
  print_match("detection/mitotic", report.detection.mitotic);
  print_match("detection/normal", report.detection.normal);
  print_match("mitosis events", report.mitosis);
  print_match("links", report.links);
  std::printf("%-18s %.4f\n", "seg", report.seg);

  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    std::ofstream out(fs::path(args.out_dir) / "eval_summary.json");
    auto block = [&](const char* key, const MatchResult& m, bool comma = true) {
      out << "  \"" << key << "\": {\"precision\": " << m.precision << ", \"recall\": " << m.recall
          << ", \"f1\": " << m.f1 << ", \"tp\": " << m.tp << ", \"fp\": " << m.fp
          << ", \"fn\": " << m.fn << "}" << (comma ? ",\n" : "\n");
    };
    out << "{\n";
    block("detection", report.detection.overall);
    block("detection_mitotic", report.detection.mitotic);
    block("detection_normal", report.detection.normal);
    block("mitosis", report.mitosis);
    block("links", report.links);
    out << "  \"seg\": " << report.seg << ",\n";
    out << "  \"r_match\": " << report.r_match << ",\n";
    out << "  \"mitosis_dt\": " << report.mitosis_dt << ",\n";
    out << "  \"mitosis_r\": " << report.mitosis_r << "\n";
    out << "}\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint detection and segmentation multi-cell tracking pipeline"};
  app.require_subcommand(1);

  CommonArgs synth_args, pipeline_args, detect_args, track_args, fineseg_args, eval_args,
      overlay_args;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic CTC-layout dataset");
  add_common(synth, synth_args, false, true, false);

  CLI::App* pipeline = app.add_subcommand("pipeline", "Run the full pipeline on a dataset");
  add_common(pipeline, pipeline_args, true, true, false);

  CLI::App* detect = app.add_subcommand("detect", "Detect cells; write detections.txt");
  add_common(detect, detect_args, true, true, false);

  CLI::App* track = app.add_subcommand("track", "Track detections.txt into a lineage forest");
  add_common(track, track_args, true, true, false);

  CLI::App* fineseg =
      app.add_subcommand("fineseg", "Fine-segment using tracked points already in --out");
  add_common(fineseg, fineseg_args, true, true, false);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate results against ground truth");
  add_common(eval, eval_args, true, false, true);
  eval->add_option("--out", eval_args.out_dir, "Directory for eval_summary.json");

  CLI::App* overlay = app.add_subcommand("overlay", "Render annotated overlay images");
  add_common(overlay, overlay_args, true, true, false);
  overlay->add_option("--res", overlay_args.gt_dir, "Results directory (defaults to --in/01_RES)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) {
      const PipelineConfig cfg = load_effective_config(synth_args);
      write_synth_dataset(cfg.synth, synth_args.out_dir);
      std::printf("synth: wrote dataset to %s (seed %llu)\n", synth_args.out_dir.c_str(),
                  static_cast<unsigned long long>(cfg.synth.seed));
      return 0;
    }
    if (pipeline->parsed()) {
      const PipelineConfig cfg = load_effective_config(pipeline_args);
      const PipelineResult result = run_pipeline(pipeline_args.in_dir, pipeline_args.out_dir, cfg);
      std::printf("pipeline: %d frames, %zu tracks\n", result.frames,
                  result.forest.trajectories.size());
      std::printf("  detect   %.3f s\n", result.timings.detect_s);
      std::printf("  track    %.3f s\n", result.timings.track_s);
      std::printf("  segment  %.3f s\n", result.timings.segment_s);
      std::printf("  export   %.3f s\n", result.timings.export_s);
      return 0;
    }
    if (detect->parsed()) {
      const PipelineConfig cfg = load_effective_config(detect_args);
      const SequenceLayout layout{detect_args.in_dir, "01"};
      const int frames = count_frames(layout.prob_dir(), "det", ".ctkr");
      if (frames == 0)
        throw ConfigError("no probability maps under " + layout.prob_dir().string());
      std::vector<std::vector<DetectedCell>> detections(frames);
      parallel_for(frames, cfg.threads, [&](int f) {
        detections[f] =
            detect_cells(read_probmap(layout.prob_dir() / frame_name("det", f, ".ctkr")), f,
                         cfg.detection);
      });
      fs::create_directories(detect_args.out_dir);
      write_detections(detections, fs::path(detect_args.out_dir) / "detections.txt");
      std::size_t n = 0;
      for (const auto& d : detections) n += d.size();
      std::printf("detect: %zu detections over %d frames\n", n, frames);
      return 0;
    }
    if (track->parsed()) {
      const PipelineConfig cfg = load_effective_config(track_args);
      const auto detections = read_detections(fs::path(track_args.in_dir) / "detections.txt");
      Tracker tracker(cfg.tracker);
      for (int f = 0; f < static_cast<int>(detections.size()); ++f)
        tracker.step(detections[f], f);
      const LineageForest forest = tracker.finalize();
      fs::create_directories(track_args.out_dir);
      write_track_file(forest_records(forest), fs::path(track_args.out_dir) / "res_track.txt");
      write_tracked_points(forest, fs::path(track_args.out_dir) / "tracked_points.txt");
      std::printf("track: %zu trajectories\n", forest.trajectories.size());
      return 0;
    }
    if (fineseg->parsed()) {
      const PipelineConfig cfg = load_effective_config(fineseg_args);
      const SequenceLayout layout{fineseg_args.in_dir, "01"};
      const fs::path out_dir = fineseg_args.out_dir;
      const auto points = read_tracked_points(out_dir / "tracked_points.txt");
      const int frames = count_frames(layout.prob_dir(), "seg", ".ctkr");
      if (frames == 0)
        throw ConfigError("no probability maps under " + layout.prob_dir().string());
      std::vector<InstanceMap> instances(frames);
      parallel_for(frames, cfg.threads, [&](int f) {
        const BlobMap blobs =
            primary_segment(read_probmap(layout.prob_dir() / frame_name("seg", f, ".ctkr")),
                            cfg.seg_theta_interior, cfg.seg_theta_boundary);
        SeedSet seeds;
        const auto it = points.find(f);
        if (it != points.end())
          for (const TrackedPoint& p : it->second) seeds.seeds.push_back({p.id, p.x, p.y});
        instances[f] = seeds.seeds.empty() ? InstanceMap(blobs.width(), blobs.height(), 1, 0)
                                           : fine_segment(blobs, seeds);
      });
      for (int f = 0; f < frames; ++f)
        write_label_tiff(instances[f], out_dir / frame_name("mask", f, ".tif"));
      std::printf("fineseg: wrote %d instance masks\n", frames);
      return 0;
    }
    if (eval->parsed()) return run_eval(eval_args);
    if (overlay->parsed()) {
      const fs::path res = overlay_args.gt_dir.empty()
                               ? fs::path(overlay_args.in_dir) / "01_RES"
                               : fs::path(overlay_args.gt_dir);
      const int frames = render_overlays(overlay_args.in_dir, res, overlay_args.out_dir);
      std::printf("overlay: wrote %d frames\n", frames);
      return 0;
    }
  } catch (const InvariantError& e) {
    std::fprintf(stderr, "internal invariant violation: %s\n", e.what());
    return 3;
  } catch (const std::logic_error& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
