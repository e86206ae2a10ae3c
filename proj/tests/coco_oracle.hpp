#pragma once

// Brute-force reference evaluator used as the test oracle for cocoeval.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "trapkit/cocoeval.hpp"

namespace coco_oracle {

struct Report {
  double ap_mean = 0.0;
  std::map<int, double> per_class;
  std::map<int, std::vector<double>> per_class_threshold;
  std::vector<double> ap_per_threshold;
  std::map<int, std::vector<double>> pr_curve50;
  std::size_t num_detections = 0;
  std::size_t num_ground_truths = 0;
};

inline double oracle_box_iou(const trapkit::BoundingBox& a, const trapkit::BoundingBox& b) {
  long inter = 0;
  for (int y = std::min(a.y, b.y); y < std::max(a.y + a.h, b.y + b.h); ++y)
    for (int x = std::min(a.x, b.x); x < std::max(a.x + a.w, b.x + b.w); ++x) inter += a.contains(x, y) && b.contains(x, y);
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

inline double oracle_mask_iou(const trapkit::BinaryMask& a, const trapkit::BinaryMask& b) {
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

inline double pair_iou(const trapkit::Detection& d, const trapkit::GroundTruth& g, trapkit::IouKind k) {
  return k == trapkit::IouKind::Box ? oracle_box_iou(d.bbox, g.bbox) : oracle_mask_iou(d.mask, g.mask);
}

// Direct enumeration: for every recall point, the best precision at any cut-off reaching it.
inline std::vector<double> curve_from_ranked(const std::vector<bool>& tp_in_rank_order, std::size_t num_gt,
                                             int recall_points) {
  std::vector<double> curve(static_cast<std::size_t>(recall_points), 0.0);
  if (num_gt == 0) return curve;
  std::vector<double> rec, prec;
  long tp = 0, fp = 0;
  for (bool t : tp_in_rank_order) {
    (t ? tp : fp) += 1;
    rec.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
    prec.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
  }
  for (int i = 0; i < recall_points; ++i) {
    const double r = i / static_cast<double>(recall_points - 1);
    for (std::size_t k = 0; k < rec.size(); ++k)
      if (rec[k] >= r) curve[static_cast<std::size_t>(i)] = std::max(curve[static_cast<std::size_t>(i)], prec[k]);
  }
  return curve;
}

inline double ap_from_ranked(const std::vector<bool>& tp_in_rank_order, std::size_t num_gt, int recall_points) {
  double sum = 0.0;
  for (double p : curve_from_ranked(tp_in_rank_order, num_gt, recall_points)) sum += p;
  return sum / recall_points;
}

inline Report evaluate(const std::vector<trapkit::Detection>& preds, const std::vector<trapkit::GroundTruth>& gts,
                       const trapkit::EvalConfig& cfg) {
  // Per-image cap: keep the highest-scoring detections, earlier input first among equal scores.
  std::vector<std::size_t> keep;
  std::set<std::int64_t> images;
  for (const auto& d : preds) images.insert(d.image_id);
  for (const auto& g : gts) images.insert(g.image_id);
  for (auto img : images) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (preds[i].image_id == img) idx.push_back(i);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
    for (std::size_t k = 0; k < idx.size() && k < static_cast<std::size_t>(cfg.max_detections_per_image); ++k)
      keep.push_back(idx[k]);
  }

  Report rep;
  rep.num_detections = keep.size();
  rep.num_ground_truths = gts.size();
  const std::size_t nt = cfg.iou_thresholds.size();
  std::vector<double> thr_sum(nt, 0.0);
  for (int c = 0; c < cfg.num_classes; ++c) {
    std::size_t num_gt = 0;
    for (const auto& g : gts) num_gt += g.class_id == c;
    std::vector<std::size_t> cdets;
    for (auto i : keep)
      if (preds[i].class_id == c) cdets.push_back(i);
    if (num_gt == 0 && cdets.empty()) continue;
    std::vector<double> per_t;
    for (double t : cfg.iou_thresholds) {
      std::map<std::size_t, bool> is_tp;
      for (auto img : images) {
        std::vector<std::size_t> d, g;
        for (auto i : cdets)
          if (preds[i].image_id == img) d.push_back(i);
        for (std::size_t j = 0; j < gts.size(); ++j)
          if (gts[j].image_id == img && gts[j].class_id == c) g.push_back(j);
        std::stable_sort(d.begin(), d.end(), [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
        std::vector<bool> used(g.size(), false);
        for (auto i : d) {
          int best = -1;
          double best_iou = t;
          for (std::size_t j = 0; j < g.size(); ++j) {
            if (used[j]) continue;
            const double v = pair_iou(preds[i], gts[g[j]], cfg.iou_kind);
            if (v >= best_iou && (best < 0 || v > best_iou)) {
              best = static_cast<int>(j);
              best_iou = v;
            }
          }
          if (best >= 0) used[static_cast<std::size_t>(best)] = true;
          is_tp[i] = best >= 0;
        }
      }
      std::vector<std::size_t> ranked = cdets;
      std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
        if (preds[a].score != preds[b].score) return preds[a].score > preds[b].score;
        return preds[a].image_id < preds[b].image_id;
      });
      std::vector<bool> flags;
      for (auto i : ranked) flags.push_back(is_tp[i]);
      if (std::abs(t - 0.5) < 1e-12) rep.pr_curve50[c] = curve_from_ranked(flags, num_gt, cfg.recall_points);
      per_t.push_back(ap_from_ranked(flags, num_gt, cfg.recall_points));
    }
    double s = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
      s += per_t[t];
      thr_sum[t] += per_t[t];
    }
    rep.per_class[c] = s / static_cast<double>(nt);
    rep.per_class_threshold[c] = per_t;
  }
  const double nc = static_cast<double>(rep.per_class.size());
  for (std::size_t t = 0; t < nt; ++t) rep.ap_per_threshold.push_back(nc > 0 ? thr_sum[t] / nc : 0.0);
  double m = 0.0;
  for (const auto& [c, v] : rep.per_class) m += v;
  rep.ap_mean = nc > 0 ? m / nc : 0.0;
  return rep;
}

// Largest absolute difference over every metric in the report; infinity when the shapes differ.
inline double discrepancy(const trapkit::EvalReport& r, const Report& o) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (r.per_class.size() != o.per_class.size() || r.pr_curve50.size() != o.pr_curve50.size() ||
      r.ap_per_threshold.size() != o.ap_per_threshold.size() || r.num_detections != o.num_detections ||
      r.num_ground_truths != o.num_ground_truths)
    return kInf;
  double worst = std::abs(r.ap_mean - o.ap_mean);
  auto cmp = [&](const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
      worst = kInf;
      return;
    }
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  };
  cmp(r.ap_per_threshold, o.ap_per_threshold);
  for (const auto& [c, v] : o.per_class) {
    if (!r.per_class.count(c) || !r.per_class_threshold.count(c)) return kInf;
    worst = std::max(worst, std::abs(r.per_class.at(c) - v));
    cmp(r.per_class_threshold.at(c), o.per_class_threshold.at(c));
  }
  for (const auto& [c, v] : o.pr_curve50) {
    if (!r.pr_curve50.count(c)) return kInf;
    cmp(r.pr_curve50.at(c), v);
  }
  if (!o.per_class.empty()) {
    const auto& thr = trapkit::EvalConfig::default_thresholds();
    for (std::size_t t = 0; t < thr.size() && t < o.ap_per_threshold.size(); ++t) {
      if (std::abs(thr[t] - 0.5) < 1e-12) worst = std::max(worst, std::abs(r.ap50 - o.ap_per_threshold[t]));
      if (std::abs(thr[t] - 0.75) < 1e-12) worst = std::max(worst, std::abs(r.ap75 - o.ap_per_threshold[t]));
    }
  }
  return worst;
}

// Random evaluation instance on a 16x16 canvas: up to 10 ground truths and 15 detections over
// three images, most detections jittered copies of a ground truth.
struct Case {
  std::vector<trapkit::Detection> dets;
  std::vector<trapkit::GroundTruth> gts;
};

constexpr int kSide = 16;

inline trapkit::BinaryMask rect_mask(const trapkit::BoundingBox& b) {
  trapkit::BinaryMask m(kSide, kSide);
  for (int y = b.y; y < b.y + b.h; ++y)
    for (int x = b.x; x < b.x + b.w; ++x) m.set(x, y);
  return m;
}

inline trapkit::BoundingBox random_box(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pos(0, kSide - 4), ext(2, 8);
  trapkit::BoundingBox b{pos(rng), pos(rng), ext(rng), ext(rng)};
  b.w = std::min(b.w, kSide - b.x);
  b.h = std::min(b.h, kSide - b.y);
  return b;
}

// Rectangle with a few pixels knocked out unless `fill_box`.
inline trapkit::BinaryMask ragged(std::mt19937_64& rng, const trapkit::BoundingBox& b, bool fill_box) {
  trapkit::BinaryMask m = rect_mask(b);
  if (!fill_box) {
    std::bernoulli_distribution drop(0.2);
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i] && drop(rng)) m[i] = 0;
    if (!m.any()) m.set(b.x, b.y);
  }
  return m;
}

inline Case random_case(std::mt19937_64& rng, int classes = 3, bool fill_box = false) {
  std::uniform_int_distribution<int> ngt(0, 10), ndet(0, 15), img(1, 3), cls(0, classes - 1), jitter(-2, 2);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  std::bernoulli_distribution near_gt(0.7);
  Case c;
  const int g = ngt(rng);
  for (int i = 0; i < g; ++i) {
    const trapkit::BoundingBox b = random_box(rng);
    trapkit::BinaryMask m = ragged(rng, b, fill_box);
    c.gts.push_back({img(rng), cls(rng), trapkit::bbox_from_mask(m), std::move(m)});
  }
  const int d = ndet(rng);
  for (int i = 0; i < d; ++i) {
    trapkit::BoundingBox b;
    std::int64_t im = img(rng);
    int cl = cls(rng);
    if (!c.gts.empty() && near_gt(rng)) {
      const auto& src = c.gts[std::uniform_int_distribution<std::size_t>(0, c.gts.size() - 1)(rng)];
      im = src.image_id;
      if (near_gt(rng)) cl = src.class_id;
      b = src.bbox;
      b.x = std::clamp(b.x + jitter(rng), 0, kSide - 1);
      b.y = std::clamp(b.y + jitter(rng), 0, kSide - 1);
      b.w = std::clamp(b.w + jitter(rng), 1, kSide - b.x);
      b.h = std::clamp(b.h + jitter(rng), 1, kSide - b.y);
    } else {
      b = random_box(rng);
    }
    trapkit::BinaryMask m = ragged(rng, b, fill_box);
    c.dets.push_back({im, cl, score(rng), trapkit::bbox_from_mask(m), std::move(m)});
  }
  return c;
}

}  // namespace coco_oracle
