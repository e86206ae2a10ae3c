#include "trapkit/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace trapkit {

namespace fs = std::filesystem;

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string class_label(int c) { return c >= 0 && c < kNumClasses ? kClassNames[c] : "class" + std::to_string(c); }

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

void write_bar_chart(const std::vector<ComparisonRow>& rows, const std::string& title, const fs::path& path) {
  const double bar = 16, gap = 14, left = 50, top = 40, plot_h = 200;
  const double width = left + rows.size() * (2 * bar + gap) + 20;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << top + plot_h + 90 << "\">\n";
  s << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << svg_escape(title) << "</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << width - 10 << "\" y2=\"" << top + plot_h
    << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double y = top + plot_h - tick * plot_h / 4;
    s << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">"
      << tick * 0.25 << "</text>\n";
  }
  double x = left + gap / 2;
  for (const auto& r : rows) {
    const double h_on = std::clamp(std::isnan(r.depth_on) ? 0.0 : r.depth_on, 0.0, 1.0) * plot_h;
    const double h_off = std::clamp(std::isnan(r.depth_off) ? 0.0 : r.depth_off, 0.0, 1.0) * plot_h;
    s << "<rect x=\"" << x << "\" y=\"" << top + plot_h - h_on << "\" width=\"" << bar << "\" height=\"" << h_on
      << "\" fill=\"#2b6cb0\"/>\n";
    s << "<rect x=\"" << x + bar << "\" y=\"" << top + plot_h - h_off << "\" width=\"" << bar << "\" height=\"" << h_off
      << "\" fill=\"#c05621\"/>\n";
    const std::string label = r.cls == "all" ? r.metric : r.cls;
    s << "<text transform=\"translate(" << x + bar << "," << top + plot_h + 12 << ") rotate(45)\" font-family=\"sans-serif\" "
      << "font-size=\"10\">" << svg_escape(label) << "</text>\n";
    x += 2 * bar + gap;
  }
  s << "<rect x=\"" << left << "\" y=\"" << top + plot_h + 62 << "\" width=\"10\" height=\"10\" fill=\"#2b6cb0\"/>"
    << "<text x=\"" << left + 14 << "\" y=\"" << top + plot_h + 71 << "\" font-family=\"sans-serif\" font-size=\"10\">depth on</text>\n";
  s << "<rect x=\"" << left + 80 << "\" y=\"" << top + plot_h + 62 << "\" width=\"10\" height=\"10\" fill=\"#c05621\"/>"
    << "<text x=\"" << left + 94 << "\" y=\"" << top + plot_h + 71 << "\" font-family=\"sans-serif\" font-size=\"10\">depth off</text>\n";
  s << "</svg>\n";
  open_out(path) << s.str();
}

}  // namespace

std::vector<ComparisonRow> compare_reports(const EvalReport& on, const EvalReport& off, const std::string& family) {
  std::vector<int> classes_on, classes_off;
  for (const auto& [c, v] : on.per_class) classes_on.push_back(c);
  for (const auto& [c, v] : off.per_class) classes_off.push_back(c);
  if (classes_on != classes_off) throw std::invalid_argument("emit_report: reports cover different class sets");
  std::vector<ComparisonRow> rows;
  auto add = [&](const std::string& metric, const std::string& cls, double a, double b) {
    rows.push_back({metric, family, cls, a, b, a - b});
  };
  add("ap_mean", "all", on.ap_mean, off.ap_mean);
  add("ap50", "all", on.ap50, off.ap50);
  add("ap75", "all", on.ap75, off.ap75);
  for (int c : classes_on) add("ap", class_label(c), on.per_class.at(c), off.per_class.at(c));
  return rows;
}

ReportFiles emit_report(const EvalReport& box_on, const EvalReport& box_off, const EvalReport& mask_on,
                        const EvalReport& mask_off, const fs::path& out_dir) {
  const auto box = compare_reports(box_on, box_off, "box");
  const auto mask = compare_reports(mask_on, mask_off, "mask");
  fs::create_directories(out_dir);
  ReportFiles files;
  files.csv = out_dir / "comparison.csv";
  {
    auto out = open_out(files.csv);
    out << "metric,class,depth_on,depth_off,delta\n";
    for (const auto* rows : {&box, &mask}) {
      for (const auto& r : *rows) {
        out << r.family << '_' << r.metric << ',' << r.cls << ',' << format_metric(r.depth_on) << ','
            << format_metric(r.depth_off) << ',' << format_metric(r.delta) << '\n';
      }
    }
  }
  files.charts.push_back(out_dir / "comparison_box.svg");
  write_bar_chart(box, "Boxes: depth on vs depth off", files.charts.back());
  files.charts.push_back(out_dir / "comparison_mask.svg");
  write_bar_chart(mask, "Masks: depth on vs depth off", files.charts.back());
  return files;
}

void write_eval_csv(const EvalReport& r, const fs::path& path) {
  auto out = open_out(path);
  out << "metric,class,value\n";
  out << "ap_mean,all," << format_metric(r.ap_mean) << '\n';
  out << "ap50,all," << format_metric(r.ap50) << '\n';
  out << "ap75,all," << format_metric(r.ap75) << '\n';
  for (const auto& [c, v] : r.per_class) out << "ap," << class_label(c) << ',' << format_metric(v) << '\n';
  out << "detections,all," << r.num_detections << '\n';
  out << "ground_truths,all," << r.num_ground_truths << '\n';
}

std::vector<fs::path> write_pr_curves(const EvalReport& r, const fs::path& dir, const std::string& stem) {
  std::vector<fs::path> out;
  fs::create_directories(dir);
  const double left = 45, top = 30, size = 200;
  for (const auto& [c, precision] : r.pr_curve50) {
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + size + 20 << "\" height=\"" << top + size + 40 << "\">\n";
    s << "<text x=\"" << left << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"12\">" << class_label(c)
      << " precision-recall, IoU 0.50</text>\n";
    s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << size << "\" height=\"" << size
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    s << "<polyline fill=\"none\" stroke=\"#2b6cb0\" stroke-width=\"1.5\" points=\"";
    const std::size_t n = precision.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double rx = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
      s << left + rx * size << ',' << top + (1.0 - precision[i]) * size << (i + 1 < n ? " " : "");
    }
    s << "\"/>\n";
    s << "<text x=\"" << left + size / 2 << "\" y=\"" << top + size + 28 << "\" font-family=\"sans-serif\" font-size=\"10\" "
      << "text-anchor=\"middle\">recall</text>\n";
    s << "<text x=\"12\" y=\"" << top + size / 2 << "\" font-family=\"sans-serif\" font-size=\"10\">prec.</text>\n";
    s << "</svg>\n";
    const fs::path path = dir / (stem + "_" + class_label(c) + ".svg");
    open_out(path) << s.str();
    out.push_back(path);
  }
  return out;
}

}  // namespace trapkit
