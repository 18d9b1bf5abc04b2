#include "latentlens/cli/artifacts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <system_error>

#include <fmt/format.h>

namespace latentlens::cli {

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw EmitError(fmt::format("table has no column '{}'", name));
}

bool Table::has_column(std::string_view name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

double Table::number(std::size_t row, std::string_view name) const {
  const Cell& c = rows.at(row).at(column(name));
  if (const auto* d = std::get_if<double>(&c)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
  throw EmitError(fmt::format("column '{}' row {} is not numeric", name, row));
}

void Table::add(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw EmitError(fmt::format("row has {} cells, table has {} columns", row.size(), columns.size()));
  }
  rows.push_back(std::move(row));
}

std::string format_cell(const Cell& cell) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          return fmt::format("{:.17g}", v);
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return fmt::format("{}", v);
        } else {
          return v;
        }
      },
      cell);
}

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    if (i) out += ',';
    out += table.columns[i];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_cell(row[i]);
    }
    out += '\n';
  }
  return out;
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string color_for(long label) {
  const long n = static_cast<long>(std::size(kPalette));
  return kPalette[((label % n) + n) % n];
}

std::string escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string header(double width, double height, std::string_view title) {
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0:.0f}\" height=\"{1:.0f}\" "
      "viewBox=\"0 0 {0:.0f} {1:.0f}\" font-family=\"sans-serif\" font-size=\"11\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      width, height);
  if (!title.empty()) {
    s += fmt::format("<text x=\"{:.1f}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                     width / 2, escape(title));
  }
  return s;
}

// Light-to-dark blue ramp for values in [0, 1].
std::string ramp(double v) {
  v = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
  const double lo[3] = {247, 251, 255};
  const double hi[3] = {8, 48, 107};
  int c[3];
  for (int i = 0; i < 3; ++i) c[i] = static_cast<int>(std::lround(lo[i] + v * (hi[i] - lo[i])));
  return fmt::format("#{:02x}{:02x}{:02x}", c[0], c[1], c[2]);
}

std::string heatmap(const Table& t, std::string_view title) {
  long rows = 0;
  long cols = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    rows = std::max(rows, std::lround(t.number(i, "row")));
    cols = std::max(cols, std::lround(t.number(i, "col")));
  }
  const double cell = 48;
  const double left = 60;
  const double top = 40;
  const double width = left + cell * cols + 20;
  const double height = top + cell * rows + 50;
  std::string s = header(width, height, title);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const long r = std::lround(t.number(i, "row"));
    const long c = std::lround(t.number(i, "col"));
    const double v = t.number(i, "value");
    const double x = left + cell * static_cast<double>(c - 1);
    const double y = top + cell * static_cast<double>(r - 1);
    s += fmt::format(
        "<rect class=\"cell\" x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" "
        "fill=\"{}\" stroke=\"white\"/>\n",
        x, y, cell, cell, ramp(v));
    s += fmt::format(
        "<text class=\"value\" x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\" fill=\"{}\">{:.3f}</text>\n",
        x + cell / 2, y + cell / 2 + 4, v > 0.6 ? "white" : "black", v);
  }
  for (long r = 1; r <= rows; ++r) {
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", left - 6,
                     top + cell * (r - 0.5) + 4, r);
  }
  for (long c = 1; c <= cols; ++c) {
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n",
                     left + cell * (c - 0.5), top + cell * rows + 16, c);
  }
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">test level</text>\n",
                   left + cell * cols / 2, top + cell * rows + 36);
  s += fmt::format(
      "<text transform=\"translate(16 {:.1f}) rotate(-90)\" text-anchor=\"middle\">train level</text>\n",
      top + cell * rows / 2);
  s += "</svg>\n";
  return s;
}

struct Frame {
  double left = 60, top = 40, width = 420, height = 320;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

  double px(double x) const { return left + (x - x0) / (x1 - x0) * width; }
  double py(double y) const { return top + height - (y - y0) / (y1 - y0) * height; }
};

std::string axes(const Frame& f, std::string_view xlabel, std::string_view ylabel) {
  std::string s = fmt::format(
      "<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" "
      "stroke=\"#444\"/>\n",
      f.left, f.top, f.width, f.height);
  for (int i = 0; i <= 4; ++i) {
    const double fx = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double fy = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.2f}</text>\n",
                     f.px(fx), f.top + f.height + 14, fx);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2f}</text>\n",
                     f.left - 4, f.py(fy) + 4, fy);
  }
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n",
                   f.left + f.width / 2, f.top + f.height + 32, escape(xlabel));
  s += fmt::format(
      "<text transform=\"translate(14 {:.1f}) rotate(-90)\" text-anchor=\"middle\">{}</text>\n",
      f.top + f.height / 2, escape(ylabel));
  return s;
}

std::string curve(const Table& t, std::string_view title) {
  Frame f;
  double max_count = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) max_count = std::max(max_count, t.number(i, "count"));
  std::string s = header(f.left + f.width + 20, f.top + f.height + 50, title);
  s += axes(f, "predicted confidence", "accuracy");
  std::string points;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    points += fmt::format("{}{:.2f},{:.2f}", i ? " " : "", f.px(t.number(i, "x")), f.py(t.number(i, "y")));
  }
  s += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\"/>\n", points);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double count = t.number(i, "count");
    const double r = 3.0 + 12.0 * std::sqrt(max_count > 0 ? count / max_count : 0.0);
    s += fmt::format(
        "<circle class=\"marker\" cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"{:.2f}\" fill=\"#1f77b4\" "
        "fill-opacity=\"0.5\" stroke=\"#1f77b4\"><title>n={}</title></circle>\n",
        f.px(t.number(i, "x")), f.py(t.number(i, "y")), r, static_cast<long>(count));
  }
  s += "</svg>\n";
  return s;
}

std::string scatter(const Table& t, std::string_view title) {
  Frame f;
  f.x0 = f.y0 = std::numeric_limits<double>::infinity();
  f.x1 = f.y1 = -std::numeric_limits<double>::infinity();
  std::set<long> labels;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    f.x0 = std::min(f.x0, t.number(i, "x"));
    f.x1 = std::max(f.x1, t.number(i, "x"));
    f.y0 = std::min(f.y0, t.number(i, "y"));
    f.y1 = std::max(f.y1, t.number(i, "y"));
    labels.insert(std::lround(t.number(i, "label")));
  }
  if (!(f.x1 > f.x0)) { f.x0 -= 1; f.x1 += 1; }
  if (!(f.y1 > f.y0)) { f.y0 -= 1; f.y1 += 1; }
  const bool hollow = t.has_column("hollow");
  std::string s = header(f.left + f.width + 110, f.top + f.height + 50, title);
  s += axes(f, "component 1", "component 2");
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string color = color_for(std::lround(t.number(i, "label")));
    const bool open = hollow && t.number(i, "hollow") != 0.0;
    s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.2\" fill=\"{}\" stroke=\"{}\"/>\n",
                     f.px(t.number(i, "x")), f.py(t.number(i, "y")), open ? "none" : color, color);
  }
  double y = f.top + 10;
  for (long label : labels) {
    const double x = f.left + f.width + 16;
    s += fmt::format(
        "<g class=\"legend\"><circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"4\" fill=\"{}\"/>"
        "<text x=\"{:.1f}\" y=\"{:.1f}\">class {}</text></g>\n",
        x, y, color_for(label), x + 10, y + 4, label);
    y += 16;
  }
  s += "</svg>\n";
  return s;
}

}  // namespace

std::string emit_svg(PlotKind kind, const Table& table, std::string_view title) {
  if (table.empty()) throw EmitError("emit_svg: empty table");
  switch (kind) {
    case PlotKind::heatmap: return heatmap(table, title);
    case PlotKind::curve: return curve(table, title);
    case PlotKind::scatter: return scatter(table, title);
  }
  throw EmitError("emit_svg: unknown plot kind");
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot open '{}' for writing", tmp.string()));
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(fmt::format("write to '{}' failed", tmp.string()));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw Error(fmt::format("cannot rename '{}' to '{}': {}", tmp.string(), path.string(), ec.message()));
  }
}

}  // namespace latentlens::cli
