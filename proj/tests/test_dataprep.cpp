#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "celltrack/dataprep.hpp"

using namespace celltrack;

namespace {

// Independent scalar route: plain exp/sum softmax, no max subtraction. Valid
// for the bounded logits used in these tests.
double cross_entropy_oracle(const LossInputs& in) {
  double total = 0.0;
  const int c = in.logits.channels();
  for (int y = 0; y < in.logits.height(); ++y) {
    for (int x = 0; x < in.logits.width(); ++x) {
      double denom = 0.0;
      for (int j = 0; j < c; ++j) denom += std::exp(static_cast<double>(in.logits.at(x, y, j)));
      const double p = std::exp(static_cast<double>(in.logits.at(x, y, in.labels.at(x, y)))) / denom;
      total += -in.weights.at(x, y) * std::log(p);
    }
  }
  return total / (static_cast<double>(in.logits.width()) * in.logits.height());
}

LossInputs random_loss_inputs(int w, int h, int c, std::uint32_t seed, float weight_lo = 0.0f,
                              float weight_hi = 2.0f) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> logit(-8.0f, 8.0f);
  std::uniform_real_distribution<float> weight(weight_lo, weight_hi);
  std::uniform_int_distribution<std::uint32_t> label(0, c - 1);
  LossInputs in{Raster<float>(w, h, c), LabelMap(w, h), Raster<float>(w, h)};
  for (auto& v : in.logits.storage()) v = logit(rng);
  for (auto& v : in.labels.storage()) v = label(rng);
  for (auto& v : in.weights.storage()) v = weight(rng);
  return in;
}

}  // namespace

TEST_CASE("uniform logits cost ln C") {
  LossInputs in{Raster<float>(1, 1, 3, 0.0f), LabelMap(1, 1, 1, 0), Raster<float>(1, 1, 1, 1.0f)};
  CHECK(weighted_cross_entropy(in) == Catch::Approx(std::log(3.0)).epsilon(1e-12));
  in.weights.at(0, 0) = 0.5f;
  CHECK(weighted_cross_entropy(in) == Catch::Approx(0.5 * std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("loss matches the scalar softmax oracle") {
  for (std::uint32_t seed = 0; seed < 50; ++seed) {
    const LossInputs in = random_loss_inputs(2, 2, 3, seed);
    const double got = weighted_cross_entropy(in);
    CHECK(got >= 0.0);
    CHECK(got == Catch::Approx(cross_entropy_oracle(in)).epsilon(1e-9));
  }
}

TEST_CASE("loss is linear in the weight map") {
  const LossInputs base = random_loss_inputs(3, 2, 4, 99);
  const double l1 = weighted_cross_entropy(base);
  // Power-of-two factors scale float weights exactly, so the comparison
  // probes the loss itself rather than input rounding.
  for (const double c : {0.25, 2.0, 8.0}) {
    LossInputs scaled = base;
    for (auto& v : scaled.weights.storage()) v = static_cast<float>(v * c);
    CHECK(weighted_cross_entropy(scaled) == Catch::Approx(c * l1).epsilon(1e-12));
  }
}

TEST_CASE("loss rejects bad inputs") {
  LossInputs in{Raster<float>(1, 1, 3, 0.0f), LabelMap(1, 1, 1, 0), Raster<float>(1, 1, 1, 1.0f)};
  in.logits.at(0, 0, 1) = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(weighted_cross_entropy(in), std::invalid_argument);
  in.logits.at(0, 0, 1) = 0.0f;
  in.labels.at(0, 0) = 3;
  CHECK_THROWS_AS(weighted_cross_entropy(in), std::invalid_argument);
  in.labels.at(0, 0) = 0;
  in.weights.at(0, 0) = -1.0f;
  CHECK_THROWS_AS(weighted_cross_entropy(in), std::invalid_argument);
}

TEST_CASE("weight map lookup") {
  const ClassWeights cw = ClassWeights::detection_default();
  LabelMap labels(4, 3, 1, kDetBackground);
  CHECK(make_weight_map(labels, cw).at(2, 2) == Catch::Approx(0.2));

  labels.at(1, 1) = kDetMitotic;
  labels.at(2, 1) = kDetNormal;
  const auto weights = make_weight_map(labels, cw);
  CHECK(weights.at(1, 1) == Catch::Approx(0.5));
  CHECK(weights.at(2, 1) == Catch::Approx(0.3));
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x)
      CHECK(weights.at(x, y) == Catch::Approx(cw.w[labels.at(x, y)]));

  labels.at(0, 0) = 7;
  CHECK_THROWS_AS(make_weight_map(labels, cw), std::invalid_argument);
}

namespace {

// Tracks: id 1 lives frames 0..10, divides into 2 and 3 living 11..14.
std::vector<LabelMap> tiny_tra_gt() {
  std::vector<LabelMap> maps;
  for (int f = 0; f < 15; ++f) {
    LabelMap m(8, 4, 1, 0);
    if (f <= 10) {
      m.at(2, 1) = 1;
      m.at(3, 1) = 1;
    } else {
      m.at(1, 2) = 2;
      m.at(5, 2) = 3;
    }
    maps.push_back(m);
  }
  return maps;
}

}  // namespace

TEST_CASE("mitotic relabeling windows") {
  const auto tra = tiny_tra_gt();
  const std::vector<DivisionEvent> lineage{{1, 10, 2, 3}};
  const auto classes = relabel_mitotic(tra, lineage, 2);
  REQUIRE(classes.size() == tra.size());

  auto class_at = [&](int f, int x, int y) { return classes[f].at(x, y); };
  CHECK(class_at(8, 2, 1) == static_cast<std::uint32_t>(kDetNormal));
  CHECK(class_at(9, 2, 1) == static_cast<std::uint32_t>(kDetMitotic));
  CHECK(class_at(10, 3, 1) == static_cast<std::uint32_t>(kDetMitotic));
  CHECK(class_at(11, 1, 2) == static_cast<std::uint32_t>(kDetMitotic));
  CHECK(class_at(12, 5, 2) == static_cast<std::uint32_t>(kDetMitotic));
  CHECK(class_at(13, 1, 2) == static_cast<std::uint32_t>(kDetNormal));

  // Support never changes, only classes.
  for (std::size_t f = 0; f < tra.size(); ++f)
    for (std::size_t i = 0; i < tra[f].size(); ++i)
      CHECK((tra[f].storage()[i] != 0) ==
            (classes[f].storage()[i] != static_cast<std::uint32_t>(kDetBackground)));

  // N_mitosis = 0: nothing mitotic. No events: all cell pixels normal.
  for (const auto& m : relabel_mitotic(tra, lineage, 0))
    for (const auto v : m.storage()) CHECK(v != static_cast<std::uint32_t>(kDetMitotic));
  for (const auto& m : relabel_mitotic(tra, {}, 2))
    for (const auto v : m.storage()) CHECK(v != static_cast<std::uint32_t>(kDetMitotic));

  CHECK_THROWS_AS(relabel_mitotic(tra, {{9, 10, 2, 3}}, 2), std::invalid_argument);
  CHECK_THROWS_AS(relabel_mitotic(tra, {{1, 10, 2, 9}}, 2), std::invalid_argument);
  CHECK_THROWS_AS(relabel_mitotic(tra, {{1, 14, 2, 3}}, 2), std::invalid_argument);
}

TEST_CASE("frame stacking") {
  std::vector<ImageF> seq;
  for (int f = 0; f < 8; ++f) seq.emplace_back(2, 2, 1, static_cast<float>(f));

  const FrameStack one = stack_frames(seq, 4, 1);
  REQUIRE(one.frames.size() == 1);
  CHECK(one.frames[0].at(0, 0) == 4.0f);

  const FrameStack padded = stack_frames(seq, 0, 3);
  REQUIRE(padded.frames.size() == 3);
  for (const auto& fr : padded.frames) CHECK(fr.at(0, 0) == 0.0f);

  const FrameStack mid = stack_frames(seq, 5, 3);
  REQUIRE(mid.frames.size() == 3);
  CHECK(mid.frames[0].at(0, 0) == 3.0f);
  CHECK(mid.frames[1].at(0, 0) == 4.0f);
  CHECK(mid.frames[2].at(0, 0) == 5.0f);

  for (int t = 0; t < 8; ++t) {
    const FrameStack s = stack_frames(seq, t, 4);
    CHECK(s.frames.size() == 4);
    CHECK(s.frames.back().at(0, 0) == static_cast<float>(t));
  }

  CHECK_THROWS_AS(stack_frames({}, 0, 3), std::invalid_argument);
  CHECK_THROWS_AS(stack_frames(seq, 8, 3), std::invalid_argument);
}

TEST_CASE("boundary and interior labels") {
  LabelMap lone(3, 3, 1, 0);
  lone.at(1, 1) = 5;
  CHECK(boundary_interior_labels(lone, 1).at(1, 1) == static_cast<std::uint32_t>(kSegBoundary));

  LabelMap solid(9, 9, 1, 0);
  for (int y = 2; y < 7; ++y)
    for (int x = 2; x < 7; ++x) solid.at(x, y) = 1;
  const auto labels = boundary_interior_labels(solid, 1);
  long boundary = 0, interior = 0;
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 9; ++x) {
      const auto v = labels.at(x, y);
      if (v == static_cast<std::uint32_t>(kSegBoundary)) ++boundary;
      if (v == static_cast<std::uint32_t>(kSegInterior)) ++interior;
      // Per-pixel neighborhood oracle.
      if (solid.at(x, y) == 0) {
        CHECK(v == static_cast<std::uint32_t>(kSegBackground));
      } else {
        bool diff = false;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || nx >= 9 || ny < 0 || ny >= 9) continue;
            if (solid.at(nx, ny) != solid.at(x, y)) diff = true;
          }
        CHECK(v == static_cast<std::uint32_t>(diff ? kSegBoundary : kSegInterior));
      }
    }
  }
  CHECK(boundary == 16);
  CHECK(interior == 9);

  // Two touching cells: the contact edge is boundary on both sides.
  LabelMap touching(8, 4, 1, 0);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) touching.at(x, y) = 1;
    for (int x = 4; x < 8; ++x) touching.at(x, y) = 2;
  }
  const auto t2 = boundary_interior_labels(touching, 1);
  for (int y = 0; y < 4; ++y) {
    CHECK(t2.at(3, y) == static_cast<std::uint32_t>(kSegBoundary));
    CHECK(t2.at(4, y) == static_cast<std::uint32_t>(kSegBoundary));
  }

  CHECK_THROWS_AS(boundary_interior_labels(solid, 0), std::invalid_argument);
}

TEST_CASE("crop placement and clamping") {
  ImageF image(21, 21);
  for (int y = 0; y < 21; ++y)
    for (int x = 0; x < 21; ++x) image.at(x, y) = static_cast<float>(y * 21 + x);
  LabelMap gt(21, 21, 1, 3);

  const auto centered = crop_samples(image, gt, {{10.0, 10.0}}, 5);
  REQUIRE(centered.size() == 1);
  CHECK(centered[0].image.at(2, 2) == image.at(10, 10));

  const auto corner = crop_samples(image, gt, {{0.0, 0.0}}, 5);
  CHECK(corner[0].image.at(0, 0) == image.at(0, 0));

  const auto many = crop_samples(image, gt, {{3, 3}, {10, 4}, {18, 18}, {7, 12}}, 7);
  CHECK(many.size() == 4);
  for (const auto& pair : many) {
    CHECK(pair.image.width() == 7);
    CHECK(pair.labels.height() == 7);
  }

  CHECK_THROWS_AS(crop_samples(image, gt, {{1, 1}}, 22), std::invalid_argument);
}

TEST_CASE("augmentation") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Sample sample{ImageF(6, 4), LabelMap(6, 4), Raster<float>(6, 4)};
  for (auto& v : sample.image.storage()) v = u(rng);
  for (auto& v : sample.labels.storage()) v = static_cast<std::uint32_t>(u(rng) * 3);
  for (auto& v : sample.weights.storage()) v = u(rng);

  AugmentSpec hflip;
  hflip.hflip = true;
  const Sample once = augment(sample, hflip, 1);
  const Sample twice = augment(once, hflip, 1);
  CHECK(twice.image == sample.image);
  CHECK(twice.labels == sample.labels);
  CHECK(twice.weights == sample.weights);

  // Flips co-register: flipped label at mirrored position, counts unchanged.
  std::map<std::uint32_t, int> before, after;
  for (const auto v : sample.labels.storage()) ++before[v];
  for (const auto v : once.labels.storage()) ++after[v];
  CHECK(before == after);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) CHECK(once.labels.at(x, y) == sample.labels.at(5 - x, y));

  AugmentSpec noisy;
  noisy.vflip = true;
  noisy.gaussian_sigma = 0.05;
  noisy.salt_pepper_prob = 0.1;
  const Sample n1 = augment(sample, noisy, 77);
  const Sample n2 = augment(sample, noisy, 77);
  CHECK(n1.image == n2.image);
  CHECK(n1.labels == n2.labels);
  const Sample n3 = augment(sample, noisy, 78);
  CHECK(n1.image != n3.image);
  CHECK(n1.labels == n3.labels);  // noise never touches labels
}
