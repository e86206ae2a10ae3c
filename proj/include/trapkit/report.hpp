#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "trapkit/cocoeval.hpp"

namespace trapkit {

struct ComparisonRow {
  std::string metric;  // ap_mean, ap50, ap75 or ap
  std::string family;  // box or mask
  std::string cls;     // "all" or a class name
  double depth_on = 0.0;
  double depth_off = 0.0;
  double delta = 0.0;
};

/// Side-by-side rows for one metric family. Throws when the two reports cover different classes.
std::vector<ComparisonRow> compare_reports(const EvalReport& depth_on, const EvalReport& depth_off,
                                           const std::string& family);

struct ReportFiles {
  std::filesystem::path csv;
  std::vector<std::filesystem::path> charts;
};

/// Writes comparison.csv and one bar chart per family (comparison_box.svg, comparison_mask.svg).
ReportFiles emit_report(const EvalReport& box_on, const EvalReport& box_off, const EvalReport& mask_on,
                        const EvalReport& mask_off, const std::filesystem::path& out_dir);

/// `metric,class,value` rows for one report.
void write_eval_csv(const EvalReport& r, const std::filesystem::path& path);

/// One precision-recall chart per class at IoU 0.50, named `<stem>_<class>.svg`.
std::vector<std::filesystem::path> write_pr_curves(const EvalReport& r, const std::filesystem::path& dir,
                                                   const std::string& stem);

std::string format_metric(double v);

}  // namespace trapkit
