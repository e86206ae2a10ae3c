#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "support.hpp"
#include "trapkit/report.hpp"

using namespace trapkit;

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

GroundTruth gt(std::int64_t img, int cls, BoundingBox b) {
  BinaryMask m(24, 24);
  for (int y = b.y; y < b.y + b.h; ++y)
    for (int x = b.x; x < b.x + b.w; ++x) m.set(x, y);
  return {img, cls, b, m};
}

struct World {
  std::vector<GroundTruth> gts;
  std::vector<Detection> good, poor;
};

// Every class present; `good` jitters boxes a little, `poor` a lot.
World random_world(std::mt19937_64& rng) {
  World w;
  std::uniform_int_distribution<int> pos(0, 12), ext(4, 10), small(-1, 1), big(-4, 4);
  std::uniform_real_distribution<double> score(0.05, 1.0);
  for (int i = 0; i < 16; ++i) w.gts.push_back(gt(i / 4, i % kNumClasses, {pos(rng), pos(rng), ext(rng), ext(rng)}));
  auto perturb = [&](const GroundTruth& g, std::uniform_int_distribution<int>& d) {
    BoundingBox b = g.bbox;
    b.x = std::clamp(b.x + d(rng), 0, 20);
    b.y = std::clamp(b.y + d(rng), 0, 20);
    b.w = std::clamp(b.w + d(rng), 1, 24 - b.x);
    b.h = std::clamp(b.h + d(rng), 1, 24 - b.y);
    const GroundTruth t = gt(g.image_id, g.class_id, b);
    return Detection{t.image_id, t.class_id, score(rng), t.bbox, t.mask};
  };
  for (const auto& g : w.gts) {
    w.good.push_back(perturb(g, small));
    w.poor.push_back(perturb(g, big));
  }
  return w;
}

EvalConfig kind(IouKind k) {
  EvalConfig c;
  c.iou_kind = k;
  return c;
}

}  // namespace

TEST_CASE("identical reports give zero deltas") {
  std::mt19937_64 rng(5);
  const World w = random_world(rng);
  const EvalReport r = evaluate(w.good, w.gts, kind(IouKind::Box));
  for (const auto& row : compare_reports(r, r, "box")) CHECK(row.delta == 0.0);
}

TEST_CASE("perfect against empty gives unit deltas") {
  std::mt19937_64 rng(6);
  const World w = random_world(rng);
  std::vector<Detection> perfect;
  for (const auto& g : w.gts) perfect.push_back({g.image_id, g.class_id, 1.0, g.bbox, g.mask});
  for (IouKind k : {IouKind::Box, IouKind::Mask}) {
    const auto rows = compare_reports(evaluate(perfect, w.gts, kind(k)), evaluate({}, w.gts, kind(k)), "x");
    CHECK(rows.size() == 3 + kNumClasses);
    for (const auto& row : rows) CHECK(row.delta == 1.0);
  }
}

TEST_CASE("class set mismatch is rejected") {
  std::mt19937_64 rng(7);
  const World w = random_world(rng);
  const EvalReport all = evaluate(w.good, w.gts, kind(IouKind::Box));
  std::vector<GroundTruth> some(w.gts.begin(), w.gts.begin() + 1);
  std::vector<Detection> one(w.good.begin(), w.good.begin() + 1);
  CHECK_THROWS(compare_reports(all, evaluate(one, some, kind(IouKind::Box)), "box"));
}

TEST_CASE("comparison csv deltas equal report subtraction") {
  std::mt19937_64 rng(8);
  for (int round = 0; round < 20; ++round) {
    const World w = random_world(rng);
    const EvalReport box_on = evaluate(w.good, w.gts, kind(IouKind::Box));
    const EvalReport box_off = evaluate(w.poor, w.gts, kind(IouKind::Box));
    const EvalReport mask_on = evaluate(w.good, w.gts, kind(IouKind::Mask));
    const EvalReport mask_off = evaluate(w.poor, w.gts, kind(IouKind::Mask));
    test_support::TempDir dir;
    const ReportFiles files = emit_report(box_on, box_off, mask_on, mask_off, dir.path());
    REQUIRE(files.charts.size() == 2);
    for (const auto& c : files.charts) CHECK(test_support::read_file(c).rfind("<svg", 0) == 0);

    // Recompute every expected row directly from the reports.
    std::map<std::pair<std::string, std::string>, std::pair<double, double>> expect;
    auto put = [&](const std::string& fam, const EvalReport& on, const EvalReport& off) {
      expect[{fam + "_ap_mean", "all"}] = {on.ap_mean, off.ap_mean};
      expect[{fam + "_ap50", "all"}] = {on.ap50, off.ap50};
      expect[{fam + "_ap75", "all"}] = {on.ap75, off.ap75};
      for (int c = 0; c < kNumClasses; ++c) expect[{fam + "_ap", kClassNames[c]}] = {on.per_class.at(c), off.per_class.at(c)};
    };
    put("box", box_on, box_off);
    put("mask", mask_on, mask_off);

    const auto rows = read_csv(files.csv);
    REQUIRE(rows.size() == expect.size() + 1);
    CHECK(rows[0] == std::vector<std::string>{"metric", "class", "depth_on", "depth_off", "delta"});
    for (std::size_t i = 1; i < rows.size(); ++i) {
      REQUIRE(rows[i].size() == 5);
      const auto& [on, off] = expect.at({rows[i][0], rows[i][1]});
      REQUIRE(std::abs(std::stod(rows[i][2]) - on) <= 1e-9);
      REQUIRE(std::abs(std::stod(rows[i][3]) - off) <= 1e-9);
      REQUIRE(std::abs(std::stod(rows[i][4]) - (on - off)) <= 1e-9);
    }
  }
}

TEST_CASE("eval csv and precision-recall charts") {
  std::mt19937_64 rng(9);
  const World w = random_world(rng);
  const EvalReport r = evaluate(w.good, w.gts, kind(IouKind::Mask));
  test_support::TempDir dir;
  write_eval_csv(r, dir.path() / "report.csv");
  const auto rows = read_csv(dir.path() / "report.csv");
  REQUIRE(rows.size() == 1 + 3 + kNumClasses + 2);
  CHECK(rows[1][0] == "ap_mean");
  CHECK(std::stod(rows[1][2]) == r.ap_mean);
  CHECK(rows[4][1] == kClassNames[0]);
  CHECK(std::stod(rows[4][2]) == r.per_class.at(0));
  const auto charts = write_pr_curves(r, dir.path(), "pr");
  CHECK(charts.size() == r.pr_curve50.size());
  CHECK(std::filesystem::exists(dir.path() / (std::string("pr_") + kClassNames[0] + ".svg")));
}

TEST_CASE("metric formatting roundtrips doubles") {
  CHECK(format_metric(std::nan("")) == "nan");
  for (double v : {0.0, 1.0, 1.0 / 3.0, 0.1 + 0.2}) CHECK(std::stod(format_metric(v)) == v);
}
