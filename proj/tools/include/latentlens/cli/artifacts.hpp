#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <latentlens/error.hpp>

namespace latentlens::cli {

class EmitError : public Error {
 public:
  using Error::Error;
};

using Cell = std::variant<std::int64_t, double, std::string>;

/// A rectangular table with named columns; rows hold one cell per column.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  bool empty() const { return rows.empty(); }
  /// Index of a column; throws EmitError when absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  double number(std::size_t row, std::string_view name) const;
  void add(std::vector<Cell> row);
};

/// Integers verbatim, doubles with 17 significant digits, strings verbatim.
std::string format_cell(const Cell& cell);
std::string to_csv(const Table& table);

enum class PlotKind { heatmap, curve, scatter };

/// Renders a standalone SVG document. Expected columns:
///   heatmap: row, col, value  (cells annotated with the value to 3 decimals)
///   curve:   x, y, count      (markers sized by count)
///   scatter: x, y, label      (colored by label with a legend; an optional
///                              `hollow` column draws nonzero rows unfilled)
/// Throws EmitError on an empty table or a missing column.
std::string emit_svg(PlotKind kind, const Table& table, std::string_view title = {});

/// Writes `path.tmp` then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace latentlens::cli
