#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trapkit/imaging.hpp"

namespace trapkit {

enum class IouKind { Box, Mask };

const char* to_string(IouKind k);
IouKind iou_kind_from_string(const std::string& s);

struct Detection {
  std::int64_t image_id = 0;
  int class_id = 0;
  double score = 0.0;
  BoundingBox bbox;
  BinaryMask mask;
};

struct GroundTruth {
  std::int64_t image_id = 0;
  int class_id = 0;
  BoundingBox bbox;
  BinaryMask mask;
};

struct EvalConfig {
  std::vector<double> iou_thresholds = default_thresholds();
  IouKind iou_kind = IouKind::Box;
  int max_detections_per_image = 100;
  int recall_points = 101;
  int num_classes = kNumClasses;

  static std::vector<double> default_thresholds();
  void validate() const;
};

struct EvalReport {
  double ap_mean = 0.0;
  double ap50 = 0.0;  // NaN when 0.50 is not among the thresholds
  double ap75 = 0.0;  // NaN when 0.75 is not among the thresholds
  std::vector<double> ap_per_threshold;                 // class mean at each threshold
  std::map<int, double> per_class;                      // threshold mean per evaluated class
  std::map<int, std::vector<double>> per_class_threshold;
  std::map<int, std::vector<double>> pr_curve50;        // interpolated precision at each recall point
  std::size_t num_detections = 0;
  std::size_t num_ground_truths = 0;
};

double iou(const Detection& d, const GroundTruth& g, IouKind kind);

/// Greedy score-ordered matching within one image and class. Returns TP flags indexed like `dets`.
std::vector<bool> match_detections(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                   double iou_threshold, IouKind kind);

struct RankedFlag {
  double score;
  bool tp;
};

/// Interpolated precision at `recall_points` evenly spaced recalls; empty when num_gt == 0.
std::vector<double> interpolated_precision(std::vector<RankedFlag> flags, std::size_t num_gt, int recall_points);

/// nullopt when the class has neither ground truth nor detections.
std::optional<double> average_precision(std::vector<RankedFlag> flags, std::size_t num_gt, int recall_points = 101);

EvalReport evaluate(const std::vector<Detection>& preds, const std::vector<GroundTruth>& gts, const EvalConfig& cfg);

}  // namespace trapkit
