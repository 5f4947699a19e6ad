#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "celltrack/ctc_io.hpp"
#include "celltrack/errors.hpp"
#include "celltrack/raster.hpp"

namespace celltrack {

// RGB byte raster + binary PPM (P6) writer; portable and lossless.
using RgbImage = Raster<std::uint8_t>;  // 3 channels

inline void write_ppm(const RgbImage& img, const std::filesystem::path& path) {
  if (img.channels() != 3) throw std::invalid_argument("write_ppm: image must have 3 channels");
  io_detail::Writer out;
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  out.raw(header.data(), header.size());
  out.raw(img.storage().data(), img.storage().size());
  io_detail::write_file(path, out.bytes);
}

namespace overlay_detail {

struct Rgb {
  std::uint8_t r, g, b;
};

inline Rgb id_color(std::uint32_t id) {
  // Golden-angle hue walk keeps adjacent ids visually distinct.
  const double hue = std::fmod(id * 0.61803398875, 1.0) * 6.0;
  const int i = static_cast<int>(hue);
  const double f = hue - i;
  const double q = 1.0 - f;
  double r = 0, g = 0, b = 0;
  switch (i % 6) {
    case 0: r = 1, g = f, b = 0; break;
    case 1: r = q, g = 1, b = 0; break;
    case 2: r = 0, g = 1, b = f; break;
    case 3: r = 0, g = q, b = 1; break;
    case 4: r = f, g = 0, b = 1; break;
    default: r = 1, g = 0, b = q; break;
  }
  auto byte = [](double v) { return static_cast<std::uint8_t>(std::lround(80 + 175 * v)); };
  return {byte(r), byte(g), byte(b)};
}

inline void put(RgbImage& img, int x, int y, Rgb c) {
  if (!img.in_bounds(x, y)) return;
  img.at(x, y, 0) = c.r;
  img.at(x, y, 1) = c.g;
  img.at(x, y, 2) = c.b;
}

// 3x5 digit glyphs, row-major bit masks.
inline const std::uint8_t* digit_glyph(int d) {
  static const std::uint8_t glyphs[10][5] = {
      {0b111, 0b101, 0b101, 0b101, 0b111},  // 0
      {0b010, 0b110, 0b010, 0b010, 0b111},  // 1
      {0b111, 0b001, 0b111, 0b100, 0b111},  // 2
      {0b111, 0b001, 0b111, 0b001, 0b111},  // 3
      {0b101, 0b101, 0b111, 0b001, 0b001},  // 4
      {0b111, 0b100, 0b111, 0b001, 0b111},  // 5
      {0b111, 0b100, 0b111, 0b101, 0b111},  // 6
      {0b111, 0b001, 0b010, 0b010, 0b010},  // 7
      {0b111, 0b101, 0b111, 0b101, 0b111},  // 8
      {0b111, 0b101, 0b111, 0b001, 0b111},  // 9
  };
  return glyphs[d];
}

inline void draw_number(RgbImage& img, int x, int y, std::uint32_t value, Rgb c) {
  const std::string s = std::to_string(value);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const std::uint8_t* glyph = digit_glyph(s[k] - '0');
    for (int gy = 0; gy < 5; ++gy)
      for (int gx = 0; gx < 3; ++gx)
        if (glyph[gy] & (1 << (2 - gx))) put(img, x + static_cast<int>(k) * 4 + gx, y + gy, c);
  }
}

inline void draw_cross(RgbImage& img, int cx, int cy, int arm, Rgb c) {
  for (int d = -arm; d <= arm; ++d) {
    put(img, cx + d, cy, c);
    put(img, cx, cy + d, c);
  }
}

inline void draw_box(RgbImage& img, int cx, int cy, int half, Rgb c) {
  for (int d = -half; d <= half; ++d) {
    put(img, cx + d, cy - half, c);
    put(img, cx + d, cy + half, c);
    put(img, cx - half, cy + d, c);
    put(img, cx + half, cy + d, c);
  }
}

}  // namespace overlay_detail

// Renders per-frame annotation images: instance contours colored by track
// id, white id numbers, red crosses on mitotic detections and yellow boxes
// where a mitosis event was declared. Output files are overlay%03d.ppm.
// Returns the number of frames written.
inline int render_overlays(const std::filesystem::path& dataset_root,
                           const std::filesystem::path& res_dir,
                           const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  using namespace overlay_detail;

  const SequenceLayout layout{dataset_root, "01"};
  const int frames = count_frames(layout.images_dir(), "t", ".tif");
  if (frames == 0) throw ConfigError("no images found under " + layout.images_dir().string());
  const int mask_frames = count_frames(res_dir, "mask", ".tif");
  if (mask_frames != 0 && mask_frames != frames)
    throw ConfigError("mask count does not match image count in " + res_dir.string());

  std::vector<TrackRecord> records;
  if (fs::exists(res_dir / "res_track.txt")) records = read_track_file(res_dir / "res_track.txt");
  std::map<int, std::vector<TrackedPoint>> points;
  if (fs::exists(res_dir / "tracked_points.txt"))
    points = read_tracked_points(res_dir / "tracked_points.txt");

  // Mitosis events: mothers referenced as parents, marked at their end frame.
  std::map<std::uint32_t, TrackRecord> by_label;
  for (const TrackRecord& r : records) by_label[r.label] = r;
  std::map<int, std::vector<std::uint32_t>> events_by_frame;
  {
    std::set<std::uint32_t> mothers;
    for (const TrackRecord& r : records)
      if (r.parent != 0 && by_label.count(r.parent)) mothers.insert(r.parent);
    for (const std::uint32_t m : mothers) events_by_frame[by_label[m].end].push_back(m);
  }

  fs::create_directories(out_dir);
  for (int f = 0; f < frames; ++f) {
    const ImageF gray = read_image_tiff(layout.images_dir() / frame_name("t", f, ".tif"));
    RgbImage img(gray.width(), gray.height(), 3);
    for (int y = 0; y < gray.height(); ++y) {
      for (int x = 0; x < gray.width(); ++x) {
        const auto v = static_cast<std::uint8_t>(
            std::lround(std::clamp(gray.at(x, y), 0.0f, 1.0f) * 255.0f));
        img.at(x, y, 0) = img.at(x, y, 1) = img.at(x, y, 2) = v;
      }
    }

    std::map<std::uint32_t, std::pair<double, double>> centroids;
    if (mask_frames != 0) {
      const LabelMap mask = read_label_tiff(res_dir / frame_name("mask", f, ".tif"));
      std::map<std::uint32_t, std::array<double, 3>> acc;
      for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
          const std::uint32_t id = mask.at(x, y);
          if (id == 0) continue;
          auto& a = acc[id];
          a[0] += x;
          a[1] += y;
          a[2] += 1;
          const bool contour = (x > 0 && mask.at(x - 1, y) != id) ||
                               (x + 1 < mask.width() && mask.at(x + 1, y) != id) ||
                               (y > 0 && mask.at(x, y - 1) != id) ||
                               (y + 1 < mask.height() && mask.at(x, y + 1) != id);
          if (contour) put(img, x, y, id_color(id));
        }
      }
      for (const auto& [id, a] : acc) centroids[id] = {a[0] / a[2], a[1] / a[2]};
    }

    for (const auto& [id, c] : centroids)
      draw_number(img, static_cast<int>(std::lround(c.first)) + 3,
                  static_cast<int>(std::lround(c.second)) - 8, id, Rgb{255, 255, 255});

    const auto pit = points.find(f);
    if (pit != points.end())
      for (const TrackedPoint& p : pit->second)
        if (p.cls == CellClass::Mitotic)
          draw_cross(img, static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)), 3,
                     Rgb{255, 40, 40});

    const auto eit = events_by_frame.find(f);
    if (eit != events_by_frame.end()) {
      for (const std::uint32_t mother : eit->second) {
        std::pair<double, double> pos{0.0, 0.0};
        bool have = false;
        const auto cit = centroids.find(mother);
        if (cit != centroids.end()) {
          pos = cit->second;
          have = true;
        } else if (pit != points.end()) {
          for (const TrackedPoint& p : pit->second)
            if (p.id == mother) {
              pos = {p.x, p.y};
              have = true;
            }
        }
        if (have)
          draw_box(img, static_cast<int>(std::lround(pos.first)),
                   static_cast<int>(std::lround(pos.second)), 9, Rgb{255, 220, 0});
      }
    }

    write_ppm(img, out_dir / frame_name("overlay", f, ".ppm"));
  }
  return frames;
}

}  // namespace celltrack
