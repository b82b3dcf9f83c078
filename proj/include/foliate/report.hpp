#pragma once

// Report files: JSON (full structure), CSV (one row per strategy x trial) and an SVG line
// plot of the median training loss per strategy.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "foliate/harness.hpp"
#include "foliate/numeric.hpp"

namespace foliate {

enum class ReportFormat { Json, Csv, Svg };

inline ReportFormat report_format_from_string(std::string_view s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "svg") return ReportFormat::Svg;
  throw std::invalid_argument("unknown report format '" + std::string(s) + "'");
}

inline std::string report_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline std::string transfer_csv(const TransferReport& r) {
  std::ostringstream os;
  os << "strategy,trial,seed,final_loss,train_loss,iterations_to_tol,params_optimized,budget_iters,n_train\n";
  for (const auto& row : r.rows)
    os << row.strategy << ',' << row.trial << ',' << row.seed << ',' << format_double(row.final_loss) << ','
       << format_double(row.train_loss) << ','
       << (row.iterations_to_tol ? std::to_string(*row.iterations_to_tol) : std::string("budget-exhausted")) << ','
       << row.params_optimized << ',' << row.budget_iters << ',' << row.n_train << '\n';
  return os.str();
}

inline std::string equivariance_csv(const EquivarianceSuiteReport& r) {
  std::ostringstream os;
  os << "group,index,seed,param_gap,representable,identity,pass\n";
  for (const auto& row : r.rows)
    os << row.group << ',' << row.index << ',' << row.seed << ',' << format_double(row.param_gap) << ','
       << (row.representable ? "true" : "false") << ',' << (row.identity ? "true" : "false") << ','
       << (row.pass ? "true" : "false") << '\n';
  return os.str();
}

namespace detail {

inline std::string svg_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Series {
  std::string name;
  std::vector<double> values;
};

/// Median across trials at each iteration; shorter curves are extended with their last value.
inline std::vector<Series> median_curves(const TransferReport& r) {
  std::vector<Series> out;
  for (const auto& summary : r.summaries) {
    std::vector<const std::vector<double>*> curves;
    std::size_t len = 0;
    for (const auto& row : r.rows)
      if (row.strategy == summary.strategy && !row.loss_curve.empty()) {
        curves.push_back(&row.loss_curve);
        len = std::max(len, row.loss_curve.size());
      }
    Series s{summary.strategy, {}};
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<double> at;
      for (const auto* c : curves) at.push_back(i < c->size() ? (*c)[i] : c->back());
      s.values.push_back(median(at));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

/// Log-scale line plot, one polyline per strategy.
inline std::string transfer_svg(const TransferReport& r) {
  constexpr double W = 640, H = 400, left = 70, right = 170, top = 30, bottom = 50;
  const auto series = detail::median_curves(r);
  std::size_t max_len = 1;
  double lo = std::numeric_limits<double>::infinity(), hi = -std::numeric_limits<double>::infinity();
  auto lg = [](double v) { return std::log10(std::max(v, 1e-300)); };
  for (const auto& s : series) {
    max_len = std::max(max_len, s.values.size());
    for (double v : s.values) {
      lo = std::min(lo, lg(v));
      hi = std::max(hi, lg(v));
    }
  }
  if (!std::isfinite(lo)) {
    lo = -1.0;
    hi = 0.0;
  }
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](std::size_t i) { return left + pw * (max_len > 1 ? static_cast<double>(i) / static_cast<double>(max_len - 1) : 0.0); };
  auto py = [&](double v) { return top + ph * (hi - lg(v)) / (hi - lo); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"13\">iteration</text>\n";
  os << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
     << top + ph / 2 << ")\">log10 training loss (median over trials)</text>\n";
  os << "<text x=\"" << left << "\" y=\"" << top + ph + 16 << "\" font-size=\"11\" text-anchor=\"middle\">0</text>\n";
  os << "<text x=\"" << left + pw << "\" y=\"" << top + ph + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
     << (max_len - 1) << "</text>\n";
  os << "<text x=\"" << left - 6 << "\" y=\"" << top + 4 << "\" font-size=\"11\" text-anchor=\"end\">"
     << detail::svg_number(hi) << "</text>\n";
  os << "<text x=\"" << left - 6 << "\" y=\"" << top + ph + 4 << "\" font-size=\"11\" text-anchor=\"end\">"
     << detail::svg_number(lo) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = colors[k % 5];
    const auto& s = series[k];
    if (!s.values.empty()) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      // Thin long curves to at most ~600 vertices.
      const std::size_t stride = std::max<std::size_t>(1, s.values.size() / 600);
      for (std::size_t i = 0; i < s.values.size(); i += stride)
        os << detail::svg_number(px(i)) << ',' << detail::svg_number(py(s.values[i])) << ' ';
      os << detail::svg_number(px(s.values.size() - 1)) << ',' << detail::svg_number(py(s.values.back()));
      os << "\"/>\n";
    }
    const double ly = top + 16.0 * static_cast<double>(k + 1);
    os << "<line x1=\"" << W - right + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - right + 30 << "\" y2=\"" << ly - 4
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - right + 35 << "\" y=\"" << ly << "\" font-size=\"11\">" << s.name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes report.json / report.csv / plot.svg into `dir` and returns the written path.
inline std::filesystem::path emit_report(const TransferReport& r, ReportFormat format, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  switch (format) {
    case ReportFormat::Json: {
      auto p = dir / "report.json";
      write_text_file(p, report_json(nlohmann::json(r)));
      return p;
    }
    case ReportFormat::Csv: {
      auto p = dir / "report.csv";
      write_text_file(p, transfer_csv(r));
      return p;
    }
    case ReportFormat::Svg: {
      auto p = dir / "plot.svg";
      write_text_file(p, transfer_svg(r));
      return p;
    }
  }
  throw std::invalid_argument("unknown report format");
}

inline std::filesystem::path emit_report(const EquivarianceSuiteReport& r, ReportFormat format,
                                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  switch (format) {
    case ReportFormat::Json: {
      auto p = dir / "report.json";
      write_text_file(p, report_json(nlohmann::json(r)));
      return p;
    }
    case ReportFormat::Csv: {
      auto p = dir / "report.csv";
      write_text_file(p, equivariance_csv(r));
      return p;
    }
    case ReportFormat::Svg:
      throw std::invalid_argument("equivariance reports have no plot");
  }
  throw std::invalid_argument("unknown report format");
}

}  // namespace foliate
