#include <doctest.h>

#include <cmath>
#include <random>

#include "coco_oracle.hpp"
#include "trapkit/cocoeval.hpp"

using namespace trapkit;

namespace {

using coco_oracle::Case;
using coco_oracle::random_box;
using coco_oracle::random_case;
using coco_oracle::rect_mask;

GroundTruth gt_box(std::int64_t img, int cls, BoundingBox b) { return {img, cls, b, rect_mask(b)}; }

Detection det_box(std::int64_t img, int cls, double score, BoundingBox b) { return {img, cls, score, b, rect_mask(b)}; }

EvalConfig cfg_for(IouKind k, int classes = 3) {
  EvalConfig cfg;
  cfg.iou_kind = k;
  cfg.num_classes = classes;
  return cfg;
}

void require_reports_equal(const EvalReport& a, const EvalReport& b) {
  REQUIRE(a.ap_mean == b.ap_mean);
  REQUIRE(a.ap_per_threshold == b.ap_per_threshold);
  REQUIRE(a.per_class == b.per_class);
  REQUIRE(a.per_class_threshold == b.per_class_threshold);
  REQUIRE(a.pr_curve50 == b.pr_curve50);
}

}  // namespace

TEST_CASE("default thresholds") {
  const auto t = EvalConfig::default_thresholds();
  REQUIRE(t.size() == 10);
  CHECK(t.front() == 0.5);
  CHECK(t[5] == 0.75);
  CHECK(t.back() == 0.95);
  EvalConfig bad;
  bad.iou_thresholds = {0.5, 0.5};
  CHECK_THROWS(bad.validate());
  bad.iou_thresholds = {0.0};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("match_detections examples") {
  const GroundTruth g = gt_box(1, 0, {2, 2, 6, 6});
  CHECK(match_detections({det_box(1, 0, 0.9, {2, 2, 6, 6})}, {g}, 0.5, IouKind::Box) == std::vector<bool>{true});
  CHECK(match_detections({det_box(1, 0, 0.9, {2, 2, 6, 6}), det_box(1, 0, 0.3, {0, 0, 2, 2})}, {}, 0.5, IouKind::Box) ==
        std::vector<bool>{false, false});
  // Listed low score first: the 0.9 detection still wins the single ground truth.
  const auto flags = match_detections({det_box(1, 0, 0.8, {2, 2, 6, 6}), det_box(1, 0, 0.9, {2, 2, 6, 5})}, {g}, 0.5, IouKind::Box);
  CHECK(flags == std::vector<bool>{false, true});
}

TEST_CASE("average_precision examples") {
  CHECK(*average_precision({{0.9, true}, {0.8, true}}, 2) == 1.0);
  CHECK(*average_precision({}, 3) == 0.0);
  CHECK(*average_precision({{0.5, false}}, 0) == 0.0);
  CHECK_FALSE(average_precision({}, 0).has_value());
  // One TP then one FP with 2 GT: precision 1 up to recall 0.5.
  CHECK(*average_precision({{0.9, true}, {0.1, false}}, 2) == doctest::Approx(51.0 / 101.0));
}

TEST_CASE("single detection at IoU 0.6 across the ten thresholds") {
  const std::vector<GroundTruth> gts{gt_box(1, 0, {0, 0, 10, 10})};
  const std::vector<Detection> dets{det_box(1, 0, 0.7, {0, 0, 6, 10})};
  const EvalReport r = evaluate(dets, gts, cfg_for(IouKind::Box, 1));
  const std::vector<double> expect{1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  CHECK(r.per_class_threshold.at(0) == expect);
  CHECK(r.ap_mean == doctest::Approx(0.3));
  CHECK(r.ap50 == 1.0);
  CHECK(r.ap75 == 0.0);
}

TEST_CASE("perfect and empty detectors") {
  std::mt19937_64 rng(81);
  for (int k = 0; k < 2; ++k) {
    const IouKind kind = k ? IouKind::Mask : IouKind::Box;
    Case c = random_case(rng);
    while (c.gts.empty()) c = random_case(rng);
    std::vector<Detection> perfect;
    for (const auto& g : c.gts) perfect.push_back({g.image_id, g.class_id, 0.9, g.bbox, g.mask});
    const EvalReport p = evaluate(perfect, c.gts, cfg_for(kind));
    CHECK(p.ap_mean == 1.0);
    CHECK(p.ap50 == 1.0);
    CHECK(p.ap75 == 1.0);
    const EvalReport e = evaluate({}, c.gts, cfg_for(kind));
    CHECK(e.ap_mean == 0.0);
    CHECK(e.ap50 == 0.0);
    CHECK(e.ap75 == 0.0);
  }
  const EvalReport none = evaluate({}, {}, EvalConfig{});
  CHECK(none.ap_mean == 0.0);
  CHECK(none.per_class.empty());
}

TEST_CASE("unknown classes are rejected") {
  CHECK_THROWS(evaluate({det_box(1, 4, 0.5, {0, 0, 2, 2})}, {}, EvalConfig{}));
  CHECK_THROWS(evaluate({}, {gt_box(1, -1, {0, 0, 2, 2})}, EvalConfig{}));
}

TEST_CASE("detections are capped per image by score") {
  std::vector<Detection> dets;
  for (int i = 0; i < 5; ++i) dets.push_back(det_box(1, 0, 0.1 * (i + 1), {0, 0, 3, 3}));
  EvalConfig cfg = cfg_for(IouKind::Box, 1);
  cfg.max_detections_per_image = 2;
  const EvalReport r = evaluate(dets, {gt_box(1, 0, {0, 0, 3, 3})}, cfg);
  CHECK(r.num_detections == 2);
  CHECK(r.ap_mean == 1.0);
}

TEST_CASE("property: evaluate matches the brute-force reference") {
  std::mt19937_64 rng(82);
  for (int c = 0; c < 1000; ++c) {
    const Case k = random_case(rng);
    for (IouKind kind : {IouKind::Box, IouKind::Mask}) {
      const EvalConfig cfg = cfg_for(kind);
      const EvalReport r = evaluate(k.dets, k.gts, cfg);
      REQUIRE(coco_oracle::discrepancy(r, coco_oracle::evaluate(k.dets, k.gts, cfg)) <= 1e-9);
    }
  }
}

TEST_CASE("property: match_detections matches each ground truth at most once") {
  std::mt19937_64 rng(83);
  for (int c = 0; c < 1000; ++c) {
    Case k = random_case(rng, 1);
    for (auto& d : k.dets) d.image_id = 1;
    for (auto& g : k.gts) g.image_id = 1;
    const auto flags = match_detections(k.dets, k.gts, 0.5, IouKind::Mask);
    const long tp = std::count(flags.begin(), flags.end(), true);
    REQUIRE(tp <= static_cast<long>(k.gts.size()));
    for (std::size_t i = 0; i < flags.size(); ++i) {
      if (!flags[i]) continue;
      bool any = false;
      for (const auto& g : k.gts) any = any || iou(k.dets[i], g, IouKind::Mask) >= 0.5;
      REQUIRE(any);
    }
  }
}

TEST_CASE("property: adding a false positive never increases AP") {
  std::mt19937_64 rng(84);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int c = 0; c < 1000; ++c) {
    Case k = random_case(rng);
    const EvalConfig cfg = cfg_for(c % 2 ? IouKind::Mask : IouKind::Box);
    const EvalReport before = evaluate(k.dets, k.gts, cfg);
    // An image no ground truth lives in.
    k.dets.push_back(det_box(99, static_cast<int>(rng() % 3), score(rng), random_box(rng)));
    const EvalReport after = evaluate(k.dets, k.gts, cfg);
    REQUIRE(after.ap_mean <= before.ap_mean + 1e-12);
    for (std::size_t t = 0; t < after.ap_per_threshold.size(); ++t)
      REQUIRE(after.ap_per_threshold[t] <= before.ap_per_threshold[t] + 1e-12);
    for (const auto& [cls, ap] : before.per_class) REQUIRE(after.per_class.at(cls) <= ap + 1e-12);
  }
}

TEST_CASE("adding a low-scored matched pair can lower AP") {
  const std::vector<GroundTruth> gts{gt_box(1, 0, {0, 0, 4, 4})};
  std::vector<Detection> dets{det_box(1, 0, 0.9, {0, 0, 4, 4}), det_box(1, 0, 0.8, {8, 8, 4, 4})};
  const EvalConfig cfg = cfg_for(IouKind::Box, 1);
  CHECK(evaluate(dets, gts, cfg).ap_mean == 1.0);
  auto more_gts = gts;
  more_gts.push_back(gt_box(2, 0, {0, 0, 4, 4}));
  dets.push_back(det_box(2, 0, 0.1, {0, 0, 4, 4}));
  CHECK(evaluate(dets, more_gts, cfg).ap_mean < 1.0);
}

// A new pair ranked above every existing detection shifts the whole PR curve up and to the right.
TEST_CASE("property: adding a top-ranked matched pair never decreases AP") {
  std::mt19937_64 rng(85);
  for (int c = 0; c < 1000; ++c) {
    Case k = random_case(rng);
    const EvalConfig cfg = cfg_for(c % 2 ? IouKind::Mask : IouKind::Box);
    const EvalReport before = evaluate(k.dets, k.gts, cfg);
    const int cls = static_cast<int>(rng() % 3);
    const BoundingBox b = random_box(rng);
    k.gts.push_back(gt_box(99, cls, b));
    k.dets.push_back(det_box(99, cls, 1.0, b));
    const EvalReport after = evaluate(k.dets, k.gts, cfg);
    if (before.per_class.count(cls)) {
      REQUIRE(after.per_class.at(cls) >= before.per_class.at(cls) - 1e-12);
      for (std::size_t t = 0; t < cfg.iou_thresholds.size(); ++t)
        REQUIRE(after.per_class_threshold.at(cls)[t] >= before.per_class_threshold.at(cls)[t] - 1e-12);
    } else {
      REQUIRE(after.per_class.at(cls) == 1.0);
    }
  }
}

TEST_CASE("property: scaling all scores leaves the report unchanged") {
  std::mt19937_64 rng(86);
  for (int c = 0; c < 1000; ++c) {
    Case k = random_case(rng);
    const EvalConfig cfg = cfg_for(c % 2 ? IouKind::Mask : IouKind::Box);
    const EvalReport a = evaluate(k.dets, k.gts, cfg);
    for (auto& d : k.dets) d.score *= 0.25;
    require_reports_equal(a, evaluate(k.dets, k.gts, cfg));
  }
}

TEST_CASE("property: AP50 >= mean AP >= AP95 for every class") {
  std::mt19937_64 rng(87);
  for (int c = 0; c < 1000; ++c) {
    const Case k = random_case(rng);
    const EvalConfig cfg = cfg_for(c % 2 ? IouKind::Mask : IouKind::Box);
    const EvalReport r = evaluate(k.dets, k.gts, cfg);
    for (const auto& [cls, aps] : r.per_class_threshold) {
      REQUIRE(aps.front() >= r.per_class.at(cls) - 1e-12);
      REQUIRE(r.per_class.at(cls) >= aps.back() - 1e-12);
      for (double v : aps) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
      }
    }
    if (!r.per_class.empty()) {
      REQUIRE(r.ap50 >= r.ap_mean - 1e-12);
      REQUIRE(r.ap_mean >= r.ap_per_threshold.back() - 1e-12);
    }
  }
}

TEST_CASE("property: box and mask agree when masks fill their boxes") {
  std::mt19937_64 rng(88);
  for (int c = 0; c < 1000; ++c) {
    const Case k = random_case(rng, 3, true);
    require_reports_equal(evaluate(k.dets, k.gts, cfg_for(IouKind::Box)), evaluate(k.dets, k.gts, cfg_for(IouKind::Mask)));
  }
}

TEST_CASE("iou kind names") {
  CHECK(iou_kind_from_string("box") == IouKind::Box);
  CHECK(iou_kind_from_string("mask") == IouKind::Mask);
  CHECK(iou_kind_from_string("segm") == IouKind::Mask);
  CHECK_THROWS(iou_kind_from_string("polygon"));
}
