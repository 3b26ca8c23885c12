// CSV tables, the run manifest, and SVG line charts.
#pragma once

#include "json.hpp"

#include <string>
#include <vector>

namespace fdecay::cli {

// Round-trip decimal for doubles; integers print without exponent.
std::string num(double v);
std::string num(long long v);
inline std::string num(int v) { return num(static_cast<long long>(v)); }
inline std::string num(std::size_t v) { return num(static_cast<long long>(v)); }
inline std::string num(long v) { return num(static_cast<long long>(v)); }
inline std::string flag(bool v) { return v ? "1" : "0"; }

struct CsvTable {
    std::string name;                       // file stem
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row);
};

// "# key: value" header lines followed by the table.
std::string render_csv(const std::vector<std::string>& header, const CsvTable& table);

std::string sha256_hex(const std::string& data);

struct CsvData {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> values;   // by row; NaN where not numeric
};
// Skips '#' lines; throws ConfigError on ragged rows.
CsvData parse_csv(const std::string& text, const std::string& name);

struct PlotSpec {
    std::string x;
    std::vector<std::string> y;
    bool logx = true;
    bool logy = true;
    std::string title;
};
// 1000 x 600 SVG; non-positive values are dropped on log axes.
std::string render_svg(const CsvData& data, const PlotSpec& spec);

}  // namespace fdecay::cli
