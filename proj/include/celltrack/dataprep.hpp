#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "celltrack/detection.hpp"
#include "celltrack/raster.hpp"
#include "celltrack/rng.hpp"

namespace celltrack {

// Class order of segmentation-style 3-class label maps and probability maps.
inline constexpr int kSegBoundary = 0;
inline constexpr int kSegInterior = 1;
inline constexpr int kSegBackground = 2;

// h(i, j): pre-softmax network outputs; g(i): true class; w(i): weight map.
struct LossInputs {
  Raster<float> logits;   // C channels
  LabelMap labels;        // values in [0, C)
  Raster<float> weights;  // single channel, >= 0
};

// -(1/T) sum_i w(i) log softmax(h(i, .))[g(i)], T = pixel count.
// The softmax is evaluated with max subtraction so large logits stay finite.
inline double weighted_cross_entropy(const LossInputs& in) {
  const int w = in.logits.width(), h = in.logits.height(), c = in.logits.channels();
  if (!in.labels.same_extent(in.logits) || !in.weights.same_extent(in.logits) ||
      in.labels.channels() != 1 || in.weights.channels() != 1)
    throw std::invalid_argument("weighted_cross_entropy: raster extents must agree");
  for (const float v : in.logits.storage())
    if (!std::isfinite(v)) throw std::invalid_argument("weighted_cross_entropy: non-finite logit");
  for (const float v : in.weights.storage())
    if (!(v >= 0.0f)) throw std::invalid_argument("weighted_cross_entropy: weights must be >= 0");

  double total = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint32_t g = in.labels.at(x, y);
      if (g >= static_cast<std::uint32_t>(c))
        throw std::invalid_argument("weighted_cross_entropy: label out of range");
      double m = in.logits.at(x, y, 0);
      for (int j = 1; j < c; ++j) m = std::max(m, static_cast<double>(in.logits.at(x, y, j)));
      double sum = 0.0;
      for (int j = 0; j < c; ++j) sum += std::exp(in.logits.at(x, y, j) - m);
      total += in.weights.at(x, y) * (std::log(sum) - (in.logits.at(x, y, g) - m));
    }
  }
  return total / (static_cast<double>(w) * h);
}

// Per-class weight table indexed by class id. The same 3-slot shape serves
// detection maps (mitotic, normal, background) and segmentation maps
// (boundary, interior, background).
struct ClassWeights {
  std::array<double, 3> w{0.5, 0.3, 0.2};

  static ClassWeights detection_default() { return ClassWeights{{0.5, 0.3, 0.2}}; }
  static ClassWeights segmentation_default() { return ClassWeights{{0.5, 0.3, 0.2}}; }
};

inline Raster<float> make_weight_map(const LabelMap& labels, const ClassWeights& cw) {
  for (const double v : cw.w)
    if (!(v >= 0.0)) throw std::invalid_argument("make_weight_map: weights must be >= 0");
  Raster<float> out(labels.width(), labels.height());
  for (int y = 0; y < labels.height(); ++y) {
    for (int x = 0; x < labels.width(); ++x) {
      const std::uint32_t cls = labels.at(x, y);
      if (cls >= cw.w.size())
        throw std::invalid_argument("make_weight_map: label outside weight table");
      out.at(x, y) = static_cast<float>(cw.w[cls]);
    }
  }
  return out;
}

struct DivisionEvent {
  std::uint32_t mother = 0;
  int frame = 0;  // last frame the mother appears
  std::uint32_t daughter_a = 0, daughter_b = 0;
};

// Converts tracking ground truth (track-id label maps) into detection-class
// maps: a mother's pixels in its last n_mitosis frames and each daughter's
// pixels in its first n_mitosis frames become Mitotic, all other cell pixels
// Normal, background stays background.
inline std::vector<LabelMap> relabel_mitotic(const std::vector<LabelMap>& tra_gt,
                                             const std::vector<DivisionEvent>& lineage,
                                             int n_mitosis) {
  if (n_mitosis < 0) throw std::invalid_argument("relabel_mitotic: n_mitosis must be >= 0");
  const int frames = static_cast<int>(tra_gt.size());

  std::vector<std::set<std::uint32_t>> present(frames);
  for (int f = 0; f < frames; ++f)
    for (const std::uint32_t v : tra_gt[f].storage())
      if (v != 0) present[f].insert(v);

  std::vector<std::set<std::uint32_t>> mitotic(frames);
  for (const DivisionEvent& ev : lineage) {
    if (ev.frame < 0 || ev.frame + 1 >= frames)
      throw std::invalid_argument("relabel_mitotic: event frame outside sequence");
    if (!present[ev.frame].count(ev.mother))
      throw std::invalid_argument("relabel_mitotic: unknown mother label");
    if (!present[ev.frame + 1].count(ev.daughter_a) ||
        !present[ev.frame + 1].count(ev.daughter_b))
      throw std::invalid_argument("relabel_mitotic: unknown daughter label");
    for (int f = std::max(0, ev.frame - n_mitosis + 1); f <= ev.frame; ++f)
      mitotic[f].insert(ev.mother);
    for (int f = ev.frame + 1; f <= std::min(frames - 1, ev.frame + n_mitosis); ++f) {
      mitotic[f].insert(ev.daughter_a);
      mitotic[f].insert(ev.daughter_b);
    }
  }

  std::vector<LabelMap> out;
  out.reserve(frames);
  for (int f = 0; f < frames; ++f) {
    LabelMap classes(tra_gt[f].width(), tra_gt[f].height(), 1, kDetBackground);
    for (int y = 0; y < tra_gt[f].height(); ++y) {
      for (int x = 0; x < tra_gt[f].width(); ++x) {
        const std::uint32_t id = tra_gt[f].at(x, y);
        if (id == 0) continue;
        classes.at(x, y) = mitotic[f].count(id) ? kDetMitotic : kDetNormal;
      }
    }
    out.push_back(std::move(classes));
  }
  return out;
}

// N_input consecutive frames ending at frame t, oldest first. Frames before
// the sequence start are replaced by frame 0.
struct FrameStack {
  std::vector<ImageF> frames;
};

inline FrameStack stack_frames(const std::vector<ImageF>& seq, int t, int n_input) {
  if (seq.empty()) throw std::invalid_argument("stack_frames: empty sequence");
  if (t < 0 || t >= static_cast<int>(seq.size()))
    throw std::invalid_argument("stack_frames: frame index out of range");
  if (n_input < 1) throw std::invalid_argument("stack_frames: n_input must be >= 1");
  FrameStack stack;
  stack.frames.reserve(n_input);
  for (int k = 0; k < n_input; ++k) {
    const int idx = std::max(0, t - n_input + 1 + k);
    stack.frames.push_back(seq[idx]);
  }
  return stack;
}

// Boundary = cell pixel with a different label (another cell or background)
// within Chebyshev distance `boundary_width`; Interior = any other cell pixel.
inline LabelMap boundary_interior_labels(const LabelMap& seg_gt, int boundary_width) {
  if (boundary_width < 1)
    throw std::invalid_argument("boundary_interior_labels: boundary_width must be >= 1");
  const int w = seg_gt.width(), h = seg_gt.height(), bw = boundary_width;
  LabelMap out(w, h, 1, kSegBackground);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint32_t id = seg_gt.at(x, y);
      if (id == 0) continue;
      bool boundary = false;
      for (int dy = -bw; dy <= bw && !boundary; ++dy) {
        for (int dx = -bw; dx <= bw; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (!seg_gt.in_bounds(nx, ny)) continue;
          if (seg_gt.at(nx, ny) != id) {
            boundary = true;
            break;
          }
        }
      }
      out.at(x, y) = boundary ? kSegBoundary : kSegInterior;
    }
  }
  return out;
}

struct CropPair {
  ImageF image;
  LabelMap labels;
};

// One s_crop x s_crop crop per centroid, shifted (not shrunk) to stay inside
// the raster.
inline std::vector<CropPair> crop_samples(const ImageF& image, const LabelMap& seg_gt,
                                          const std::vector<std::pair<double, double>>& centroids,
                                          int s_crop) {
  if (s_crop < 1) throw std::invalid_argument("crop_samples: s_crop must be >= 1");
  if (s_crop > image.width() || s_crop > image.height())
    throw std::invalid_argument("crop_samples: s_crop larger than raster");
  if (!image.same_extent(seg_gt))
    throw std::invalid_argument("crop_samples: image and labels must share extent");

  std::vector<CropPair> crops;
  crops.reserve(centroids.size());
  for (const auto& [cx, cy] : centroids) {
    int x0 = static_cast<int>(std::llround(cx)) - s_crop / 2;
    int y0 = static_cast<int>(std::llround(cy)) - s_crop / 2;
    x0 = std::clamp(x0, 0, image.width() - s_crop);
    y0 = std::clamp(y0, 0, image.height() - s_crop);
    CropPair pair{ImageF(s_crop, s_crop), LabelMap(s_crop, s_crop)};
    for (int y = 0; y < s_crop; ++y) {
      for (int x = 0; x < s_crop; ++x) {
        pair.image.at(x, y) = image.at(x0 + x, y0 + y);
        pair.labels.at(x, y) = seg_gt.at(x0 + x, y0 + y);
      }
    }
    crops.push_back(std::move(pair));
  }
  return crops;
}

struct AugmentSpec {
  bool hflip = false;
  bool vflip = false;
  double gaussian_sigma = 0.0;     // 0 disables
  double salt_pepper_prob = 0.0;   // 0 disables
};

struct Sample {
  ImageF image;
  LabelMap labels;
  Raster<float> weights;
};

namespace detail {

template <typename T>
Raster<T> flipped(const Raster<T>& r, bool hflip, bool vflip) {
  Raster<T> out(r.width(), r.height(), r.channels());
  for (int y = 0; y < r.height(); ++y) {
    const int sy = vflip ? r.height() - 1 - y : y;
    for (int x = 0; x < r.width(); ++x) {
      const int sx = hflip ? r.width() - 1 - x : x;
      for (int c = 0; c < r.channels(); ++c) out.at(x, y, c) = r.at(sx, sy, c);
    }
  }
  return out;
}

}  // namespace detail

// Flips are applied to image, labels and weights alike so pixelwise
// co-registration is preserved; noise touches the image only. Deterministic
// for a given rng_seed.
inline Sample augment(const Sample& s, const AugmentSpec& spec, std::uint64_t rng_seed) {
  Sample out{detail::flipped(s.image, spec.hflip, spec.vflip),
             detail::flipped(s.labels, spec.hflip, spec.vflip),
             detail::flipped(s.weights, spec.hflip, spec.vflip)};
  Rng rng(rng_seed);
  if (spec.gaussian_sigma > 0.0) {
    for (float& v : out.image.storage())
      v = static_cast<float>(std::clamp(v + rng.normal(spec.gaussian_sigma), 0.0, 1.0));
  }
  if (spec.salt_pepper_prob > 0.0) {
    for (float& v : out.image.storage()) {
      const double u = rng.uniform();
      if (u < spec.salt_pepper_prob / 2.0)
        v = 0.0f;
      else if (u < spec.salt_pepper_prob)
        v = 1.0f;
    }
  }
  return out;
}

}  // namespace celltrack
