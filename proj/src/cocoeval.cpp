#include "trapkit/cocoeval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace trapkit {

const char* to_string(IouKind k) { return k == IouKind::Box ? "box" : "mask"; }

IouKind iou_kind_from_string(const std::string& s) {
  if (s == "box" || s == "bbox") return IouKind::Box;
  if (s == "mask" || s == "segm") return IouKind::Mask;
  throw std::invalid_argument("unknown IoU kind: " + s);
}

std::vector<double> EvalConfig::default_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  return t;
}

void EvalConfig::validate() const {
  if (iou_thresholds.empty()) throw std::invalid_argument("eval: no IoU thresholds");
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    const double t = iou_thresholds[i];
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("eval: IoU threshold outside (0,1]");
    if (i > 0 && !(t > iou_thresholds[i - 1])) throw std::invalid_argument("eval: IoU thresholds must increase");
  }
  if (max_detections_per_image < 1) throw std::invalid_argument("eval: max_detections_per_image must be positive");
  if (recall_points < 2) throw std::invalid_argument("eval: recall_points must be >= 2");
  if (num_classes < 1) throw std::invalid_argument("eval: num_classes must be positive");
}

double iou(const Detection& d, const GroundTruth& g, IouKind kind) {
  return kind == IouKind::Box ? bbox_iou(d.bbox, g.bbox) : mask_iou(d.mask, g.mask);
}

namespace {

std::vector<std::size_t> score_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

// dets must already be in ranking order; ious is [det][gt].
std::vector<bool> greedy_match(const std::vector<std::vector<double>>& ious, std::size_t num_gt, double threshold) {
  std::vector<bool> taken(num_gt, false);
  std::vector<bool> tp(ious.size(), false);
  for (std::size_t d = 0; d < ious.size(); ++d) {
    double best = -1.0;
    std::size_t best_g = num_gt;
    for (std::size_t g = 0; g < num_gt; ++g) {
      if (taken[g] || ious[d][g] < threshold) continue;
      if (ious[d][g] > best) {
        best = ious[d][g];
        best_g = g;
      }
    }
    if (best_g < num_gt) {
      taken[best_g] = true;
      tp[d] = true;
    }
  }
  return tp;
}

}  // namespace

std::vector<bool> match_detections(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                   double iou_threshold, IouKind kind) {
  const auto order = score_order(dets);
  std::vector<std::vector<double>> ious(dets.size(), std::vector<double>(gts.size()));
  for (std::size_t k = 0; k < order.size(); ++k) {
    for (std::size_t g = 0; g < gts.size(); ++g) ious[k][g] = iou(dets[order[k]], gts[g], kind);
  }
  const auto ranked = greedy_match(ious, gts.size(), iou_threshold);
  std::vector<bool> out(dets.size(), false);
  for (std::size_t k = 0; k < order.size(); ++k) out[order[k]] = ranked[k];
  return out;
}

std::vector<double> interpolated_precision(std::vector<RankedFlag> flags, std::size_t num_gt, int recall_points) {
  if (num_gt == 0) return {};
  std::stable_sort(flags.begin(), flags.end(), [](const RankedFlag& a, const RankedFlag& b) { return a.score > b.score; });
  const std::size_t n = flags.size();
  std::vector<double> recall(n), precision(n);
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    (flags[i].tp ? tp : fp) += 1.0;
    recall[i] = tp / static_cast<double>(num_gt);
    precision[i] = tp / (tp + fp);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  std::vector<double> q(static_cast<std::size_t>(recall_points), 0.0);
  for (int r = 0; r < recall_points; ++r) {
    const double level = static_cast<double>(r) / (recall_points - 1);
    const auto it = std::lower_bound(recall.begin(), recall.end(), level);
    if (it != recall.end()) q[static_cast<std::size_t>(r)] = precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return q;
}

std::optional<double> average_precision(std::vector<RankedFlag> flags, std::size_t num_gt, int recall_points) {
  if (num_gt == 0) {
    if (flags.empty()) return std::nullopt;
    return 0.0;
  }
  const auto q = interpolated_precision(std::move(flags), num_gt, recall_points);
  return std::accumulate(q.begin(), q.end(), 0.0) / static_cast<double>(q.size());
}

EvalReport evaluate(const std::vector<Detection>& preds, const std::vector<GroundTruth>& gts, const EvalConfig& cfg) {
  cfg.validate();
  for (const auto& d : preds) {
    if (d.class_id < 0 || d.class_id >= cfg.num_classes)
      throw std::invalid_argument("eval: unknown class id " + std::to_string(d.class_id) + " in predictions");
  }
  for (const auto& g : gts) {
    if (g.class_id < 0 || g.class_id >= cfg.num_classes)
      throw std::invalid_argument("eval: unknown class id " + std::to_string(g.class_id) + " in ground truth");
  }

  // Per-image cap by score; survivors keep their input order among equal scores.
  std::map<std::int64_t, std::vector<std::size_t>> by_image;
  for (std::size_t i = 0; i < preds.size(); ++i) by_image[preds[i].image_id].push_back(i);
  std::map<std::int64_t, std::vector<std::size_t>> kept;
  EvalReport rep;
  for (auto& [img, idx] : by_image) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
    if (idx.size() > static_cast<std::size_t>(cfg.max_detections_per_image))
      idx.resize(static_cast<std::size_t>(cfg.max_detections_per_image));
    rep.num_detections += idx.size();
    kept[img] = idx;
  }
  rep.num_ground_truths = gts.size();

  std::map<std::pair<int, std::int64_t>, std::vector<std::size_t>> gt_cells;
  for (std::size_t i = 0; i < gts.size(); ++i) gt_cells[{gts[i].class_id, gts[i].image_id}].push_back(i);

  const std::size_t nt = cfg.iou_thresholds.size();
  rep.ap_per_threshold.assign(nt, 0.0);
  for (int c = 0; c < cfg.num_classes; ++c) {
    std::vector<std::int64_t> images;
    for (const auto& [img, idx] : kept) {
      for (auto i : idx) {
        if (preds[i].class_id == c) {
          images.push_back(img);
          break;
        }
      }
    }
    std::size_t num_gt = 0;
    for (const auto& [key, idx] : gt_cells) {
      if (key.first != c) continue;
      num_gt += idx.size();
      images.push_back(key.second);
    }
    std::sort(images.begin(), images.end());
    images.erase(std::unique(images.begin(), images.end()), images.end());

    std::vector<std::vector<RankedFlag>> flags(nt);
    for (auto img : images) {
      std::vector<std::size_t> dets;
      if (auto it = kept.find(img); it != kept.end()) {
        for (auto i : it->second) {
          if (preds[i].class_id == c) dets.push_back(i);
        }
      }
      static const std::vector<std::size_t> kNone;
      const auto git = gt_cells.find({c, img});
      const auto& gidx = git == gt_cells.end() ? kNone : git->second;
      std::vector<std::vector<double>> ious(dets.size(), std::vector<double>(gidx.size()));
      for (std::size_t k = 0; k < dets.size(); ++k) {
        for (std::size_t g = 0; g < gidx.size(); ++g) {
          const Detection& d = preds[dets[k]];
          const GroundTruth& gt = gts[gidx[g]];
          ious[k][g] = iou(d, gt, cfg.iou_kind);
        }
      }
      for (std::size_t t = 0; t < nt; ++t) {
        const auto tp = greedy_match(ious, gidx.size(), cfg.iou_thresholds[t]);
        for (std::size_t k = 0; k < dets.size(); ++k) flags[t].push_back({preds[dets[k]].score, tp[k]});
      }
    }
    if (num_gt == 0 && flags[0].empty()) continue;
    std::vector<double> aps(nt);
    for (std::size_t t = 0; t < nt; ++t) {
      if (std::abs(cfg.iou_thresholds[t] - 0.5) < 1e-9) {
        auto q = interpolated_precision(flags[t], num_gt, cfg.recall_points);
        if (q.empty()) q.assign(static_cast<std::size_t>(cfg.recall_points), 0.0);
        rep.pr_curve50[c] = std::move(q);
      }
      aps[t] = *average_precision(std::move(flags[t]), num_gt, cfg.recall_points);
    }
    rep.per_class[c] = std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(nt);
    rep.per_class_threshold[c] = std::move(aps);
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  rep.ap50 = nan;
  rep.ap75 = nan;
  if (rep.per_class.empty()) {
    rep.ap_mean = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
      if (std::abs(cfg.iou_thresholds[t] - 0.5) < 1e-9) rep.ap50 = 0.0;
      if (std::abs(cfg.iou_thresholds[t] - 0.75) < 1e-9) rep.ap75 = 0.0;
    }
    return rep;
  }
  const double nc = static_cast<double>(rep.per_class.size());
  for (std::size_t t = 0; t < nt; ++t) {
    double s = 0.0;
    for (const auto& [c, aps] : rep.per_class_threshold) s += aps[t];
    rep.ap_per_threshold[t] = s / nc;
    if (std::abs(cfg.iou_thresholds[t] - 0.5) < 1e-9) rep.ap50 = rep.ap_per_threshold[t];
    if (std::abs(cfg.iou_thresholds[t] - 0.75) < 1e-9) rep.ap75 = rep.ap_per_threshold[t];
  }
  double s = 0.0;
  for (const auto& [c, ap] : rep.per_class) s += ap;
  rep.ap_mean = s / nc;
  return rep;
}

}  // namespace trapkit
