#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ssecam/curves.hpp"
#include "ssecam/training.hpp"

namespace ssecam {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // drawn in the given order
};

struct PlotAxes {
  std::string title;
  std::string x_label;
  std::string y_label;
  /// Optional categorical tick labels at the given x positions; when empty,
  /// ticks are placed at the distinct x values of the data.
  std::vector<std::pair<double, std::string>> x_ticks;
};

/// Standalone SVG line plot: fixed 640x400 viewBox, one polyline per series
/// in input order, legend in input order, fixed-precision coordinates.
/// Throws std::invalid_argument if there is no point at all.
std::string render_svg_plot(const std::vector<Series>& series, const PlotAxes& axes);
void emit_svg_plot(const std::vector<Series>& series, const PlotAxes& axes,
                   const std::filesystem::path& path);

/// Writes `content` to `path` verbatim; IoError on failure.
void write_text_file(const std::filesystem::path& path, const std::string& content);

/// Quotes a CSV field if it contains a comma, quote or newline.
std::string csv_escape(const std::string& field);

/// Splits CSV text into rows of fields; understands quoted fields.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

/// "%.9g", with "nan" for NaN.
std::string format_number(double v);

struct MetricsCsvRow {
  std::string model;
  std::uint64_t seed = 0;
  CurveRow row;
};

/// model,seed,scale,miou,m_fn,m_fp,skipped  (skipped: ';'-joined class indices)
std::string metrics_csv(const std::vector<MetricsCsvRow>& rows);

/// scale,miou,m_fn,m_fp,skipped for one model.
std::string curves_csv(const std::vector<CurveRow>& rows);

/// scale,mean_gap,images,degenerate
std::string gap_csv(const std::vector<GapRow>& rows);

/// Loss trace with loss_csv_header().
std::string loss_csv(const std::vector<TrainRecord>& trace);

/// mIoU, m_fn and m_fp against test scale, one series per metric (MS row excluded).
std::vector<Series> curve_series(const std::vector<CurveRow>& rows, const std::string& model);

}  // namespace ssecam
