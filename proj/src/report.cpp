#include "ssecam/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "ssecam/errors.hpp"

namespace ssecam {
namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 170.0;  // legend column
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string tick_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '\n') {
      out += ' ';
      continue;
    }
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
      any = true;
    }
  }
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string render_svg_plot(const std::vector<Series>& series, const PlotAxes& axes) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  std::size_t points = 0;
  for (const Series& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x)) throw std::invalid_argument("emit_svg_plot: non-finite x value");
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      if (std::isfinite(y)) {
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
      ++points;
    }
  }
  if (points == 0) throw std::invalid_argument("emit_svg_plot: empty table");
  if (!std::isfinite(y0)) {
    y0 = 0.0;
    y1 = 1.0;
  }
  if (x1 - x0 <= 0.0) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 - y0 <= 0.0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 400\" width=\"640\" "
         "height=\"400\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fixed(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" +
         escape_xml(axes.title) + "</text>\n";
  svg += "<rect x=\"" + fixed(kLeft) + "\" y=\"" + fixed(kTop) + "\" width=\"" + fixed(pw) +
         "\" height=\"" + fixed(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";

  std::vector<std::pair<double, std::string>> xticks = axes.x_ticks;
  if (xticks.empty()) {
    std::set<double> xs;
    for (const Series& s : series) {
      for (const auto& p : s.points) xs.insert(p.first);
    }
    for (double x : xs) xticks.emplace_back(x, tick_text(x));
  }
  for (const auto& [x, label] : xticks) {
    const double px = sx(x);
    svg += "<line x1=\"" + fixed(px) + "\" y1=\"" + fixed(kTop + ph) + "\" x2=\"" + fixed(px) +
           "\" y2=\"" + fixed(kTop + ph + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fixed(px) + "\" y=\"" + fixed(kTop + ph + 18) +
           "\" text-anchor=\"middle\">" + escape_xml(label) + "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double y = y0 + (y1 - y0) * k / 4.0;
    const double py = sy(y);
    svg += "<line x1=\"" + fixed(kLeft - 5) + "\" y1=\"" + fixed(py) + "\" x2=\"" + fixed(kLeft) +
           "\" y2=\"" + fixed(py) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fixed(kLeft - 8) + "\" y=\"" + fixed(py + 4) +
           "\" text-anchor=\"end\">" + tick_text(y) + "</text>\n";
  }
  svg += "<text x=\"" + fixed(kLeft + pw / 2) + "\" y=\"" + fixed(kHeight - 16) +
         "\" text-anchor=\"middle\">" + escape_xml(axes.x_label) + "</text>\n";
  svg += "<text x=\"18\" y=\"" + fixed(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         fixed(kTop + ph / 2) + ")\">" + escape_xml(axes.y_label) + "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    const std::string colour = kPalette[i % std::size(kPalette)];
    std::string pts;
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(y)) continue;
      if (!pts.empty()) pts += ' ';
      pts += fixed(sx(x)) + "," + fixed(sy(y));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"2\" points=\"" + pts +
           "\"/>\n";
    const double ly = kTop + 10 + 18.0 * static_cast<double>(i);
    const double lx = kWidth - kRight + 12;
    svg += "<line x1=\"" + fixed(lx) + "\" y1=\"" + fixed(ly) + "\" x2=\"" + fixed(lx + 20) +
           "\" y2=\"" + fixed(ly) + "\" stroke=\"" + colour + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fixed(lx + 26) + "\" y=\"" + fixed(ly + 4) + "\">" + escape_xml(s.name) +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void emit_svg_plot(const std::vector<Series>& series, const PlotAxes& axes,
                   const std::filesystem::path& path) {
  write_text_file(path, render_svg_plot(series, axes));
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

std::string joined(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string metric_fields(const CurveRow& r) {
  return format_number(r.metrics.miou) + "," + format_number(r.metrics.m_fn) + "," +
         format_number(r.metrics.m_fp) + "," + joined(r.metrics.skipped_classes);
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsCsvRow>& rows) {
  std::string out = "model,seed,scale,miou,m_fn,m_fp,skipped\n";
  for (const MetricsCsvRow& r : rows) {
    out += csv_escape(r.model) + "," + std::to_string(r.seed) + "," + r.row.scale_label + "," +
           metric_fields(r.row) + "\n";
  }
  return out;
}

std::string curves_csv(const std::vector<CurveRow>& rows) {
  std::string out = "scale,miou,m_fn,m_fp,skipped\n";
  for (const CurveRow& r : rows) out += r.scale_label + "," + metric_fields(r) + "\n";
  return out;
}

std::string gap_csv(const std::vector<GapRow>& rows) {
  std::string out = "scale,mean_gap,images,degenerate\n";
  for (const GapRow& r : rows) {
    out += format_number(r.scale) + "," + format_number(r.mean_gap) + "," +
           std::to_string(r.images) + "," + std::to_string(r.degenerate) + "\n";
  }
  return out;
}

std::string loss_csv(const std::vector<TrainRecord>& trace) {
  std::string out = loss_csv_header() + "\n";
  for (const TrainRecord& r : trace) out += loss_csv_row(r) + "\n";
  return out;
}

std::vector<Series> curve_series(const std::vector<CurveRow>& rows, const std::string& model) {
  Series miou{model + " mIoU", {}};
  Series fn{model + " m_FN", {}};
  Series fp{model + " m_FP", {}};
  for (const CurveRow& r : rows) {
    if (r.scale_label == "MS") continue;
    miou.points.emplace_back(r.scale, r.metrics.miou);
    fn.points.emplace_back(r.scale, r.metrics.m_fn);
    fp.points.emplace_back(r.scale, r.metrics.m_fp);
  }
  return {miou, fn, fp};
}

}  // namespace ssecam
