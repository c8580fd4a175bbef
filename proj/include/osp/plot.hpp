#pragma once

#include <map>
#include <string>
#include <vector>

namespace osp {

/// Numeric CSV columns keyed by header name. Non-numeric cells become NaN.
struct CsvTable {
  std::vector<std::string> header;
  std::map<std::string, std::vector<double>> columns;

  const std::vector<double>& column(const std::string& name) const;
};

CsvTable read_csv_file(const std::string& path);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Static SVG line chart; non-finite points are skipped.
std::string render_line_chart_svg(const std::vector<Series>& series, const std::string& title,
                                  const std::string& x_label);

/// Reads `csv_path` and plots each of `y_columns` against `x_column`.
void plot_csv(const std::string& csv_path, const std::string& x_column, const std::vector<std::string>& y_columns,
              const std::string& svg_path, const std::string& title);

} // namespace osp
