#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"

using namespace coopv2v;

namespace {
Box make_box(double x, double y, double w, double l) {
  Box b;
  b.x = x;
  b.y = y;
  b.w = w;
  b.l = l;
  b.h = 1.5;
  b.z = 0.75;
  return b;
}
}  // namespace

TEST_CASE("IoU of identical boxes is one") {
  Box b = make_box(3.0, 4.0, 2.0, 4.5);
  REQUIRE(bev_iou(b, b) == Catch::Approx(1.0));
}

TEST_CASE("IoU of disjoint boxes is zero") {
  REQUIRE(bev_iou(make_box(0, 0, 2, 2), make_box(10, 10, 2, 2)) == 0.0);
}

TEST_CASE("unit squares overlapping half give one third") {
  // intersection 0.5, union 1.5
  REQUIRE(bev_iou(make_box(0, 0, 1, 1), make_box(0.5, 0, 1, 1)) ==
          Catch::Approx(1.0 / 3.0));
}

TEST_CASE("IoU requires positive sizes") {
  REQUIRE_THROWS_AS(bev_iou(make_box(0, 0, 0, 1), make_box(0, 0, 1, 1)),
                    std::invalid_argument);
}

TEST_CASE("a perfect detector scores AP one") {
  std::vector<std::vector<Box>> gts{{make_box(1, 1, 2, 4), make_box(9, 9, 2, 4)},
                                    {make_box(5, 5, 2, 4)}};
  std::vector<ScoredDetection> dets;
  int rank = 0;
  for (std::size_t f = 0; f < gts.size(); ++f)
    for (const Box& g : gts[f])
      dets.push_back({g, 0.9, static_cast<int>(f), rank++});
  REQUIRE(average_precision(dets, gts, 0.7) == Catch::Approx(1.0));
}

TEST_CASE("no detections against nonempty ground truth scores zero") {
  std::vector<std::vector<Box>> gts{{make_box(1, 1, 2, 4)}};
  REQUIRE(average_precision({}, gts, 0.3) == 0.0);
}

TEST_CASE("detections against empty ground truth score zero, empty-empty one") {
  std::vector<std::vector<Box>> empty_gts{{}};
  std::vector<ScoredDetection> dets{{make_box(1, 1, 2, 4), 0.9, 0, 0}};
  ApDiagnostics diag;
  REQUIRE(average_precision(dets, empty_gts, 0.3, &diag) == 0.0);
  REQUIRE(diag.empty_both == 0);
  REQUIRE(average_precision({}, empty_gts, 0.3, &diag) == 1.0);
  REQUIRE(diag.empty_both == 1);
}

TEST_CASE("three detections over two ground truths match the hand-computed area") {
  std::vector<std::vector<Box>> gts{{make_box(2, 2, 2, 4), make_box(12, 12, 2, 4)}};
  std::vector<ScoredDetection> dets{
      {make_box(2, 2, 2, 4), 0.9, 0, 0},    // true positive
      {make_box(30, 30, 2, 4), 0.8, 0, 1},  // false positive
      {make_box(12, 12, 2, 4), 0.7, 0, 2},  // true positive
  };
  // ranked: TP (p=1, r=1/2), FP (p=1/2, r=1/2), TP (p=2/3, r=1)
  // envelope: [1, 2/3, 2/3]; area = 0.5*1 + 0.5*(2/3)
  REQUIRE(average_precision(dets, gts, 0.5) ==
          Catch::Approx(0.5 + 0.5 * (2.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("each ground truth is matched at most once") {
  std::vector<std::vector<Box>> gts{{make_box(2, 2, 2, 4)}};
  std::vector<ScoredDetection> dets{
      {make_box(2, 2, 2, 4), 0.9, 0, 0},
      {make_box(2, 2, 2, 4), 0.8, 0, 1},  // duplicate becomes a false positive
  };
  // TP (p=1, r=1), FP (p=1/2, r=1) -> area = 1
  REQUIRE(average_precision(dets, gts, 0.5) == Catch::Approx(1.0));
}

TEST_CASE("AP is invariant to strictly monotone score transformations") {
  Rng rng(211);
  std::vector<std::vector<Box>> gts(5);
  std::vector<ScoredDetection> dets;
  int rank = 0;
  for (int f = 0; f < 5; ++f) {
    int n = rng.uniform_int(1, 4);
    for (int i = 0; i < n; ++i)
      gts[static_cast<std::size_t>(f)].push_back(
          make_box(rng.uniform(2, 30), rng.uniform(2, 30), 2, 4));
    for (int i = 0; i < 6; ++i) {
      Box guess = make_box(rng.uniform(2, 30), rng.uniform(2, 30), 2, 4);
      if (rng.uniform() < 0.5 && !gts[static_cast<std::size_t>(f)].empty())
        guess = gts[static_cast<std::size_t>(f)][0];
      dets.push_back({guess, rng.uniform(0.0, 1.0), f, rank++});
    }
  }
  double base03 = average_precision(dets, gts, 0.3);
  double base07 = average_precision(dets, gts, 0.7);
  std::vector<ScoredDetection> warped = dets;
  for (ScoredDetection& d : warped) d.score = std::exp(3.0 * d.score) + 5.0;
  REQUIRE(average_precision(warped, gts, 0.3) == Catch::Approx(base03));
  REQUIRE(average_precision(warped, gts, 0.7) == Catch::Approx(base07));
}
