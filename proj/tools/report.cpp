#include "report.hpp"

#include "fdecay/common.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace fdecay::cli {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string num(long long v) { return std::to_string(v); }

void CsvTable::add(std::vector<std::string> row) {
    if (row.size() != columns.size()) throw InvalidArgument("CSV row width differs from the header");
    rows.push_back(std::move(row));
}

std::string render_csv(const std::vector<std::string>& header, const CsvTable& table) {
    std::string out;
    for (const auto& h : header) out += "# " + h + "\n";
    for (std::size_t i = 0; i < table.columns.size(); ++i) out += (i ? "," : "") + table.columns[i];
    out += "\n";
    for (const auto& r : table.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
        out += "\n";
    }
    return out;
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw InvalidArgument("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

CsvData parse_csv(const std::string& text, const std::string& name) {
    CsvData d;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto split = [](const std::string& s) {
        std::vector<std::string> f;
        std::string cur;
        for (char c : s) {
            if (c == ',') {
                f.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur += c;
            }
        }
        f.push_back(cur);
        return f;
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto f = split(line);
        if (d.columns.empty()) {
            d.columns = f;
            continue;
        }
        if (f.size() != d.columns.size())
            throw ConfigError(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(d.columns.size()) +
                              " fields, found " + std::to_string(f.size()));
        std::vector<double> row;
        for (const auto& s : f) {
            double v = std::numeric_limits<double>::quiet_NaN();
            auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size()) v = std::numeric_limits<double>::quiet_NaN();
            row.push_back(v);
        }
        d.values.push_back(std::move(row));
    }
    if (d.columns.empty()) throw ConfigError(name + ": no header row");
    return d;
}

namespace {

struct Axis {
    double lo = 0.0, hi = 1.0;
    bool log = false;

    double map(double v) const {
        double a = log ? std::log10(v) : v;
        return (a - lo) / (hi - lo);
    }
};

Axis make_axis(std::vector<double> vals, bool log) {
    Axis ax;
    ax.log = log;
    if (log) vals.erase(std::remove_if(vals.begin(), vals.end(), [](double v) { return !(v > 0); }), vals.end());
    vals.erase(std::remove_if(vals.begin(), vals.end(), [](double v) { return !std::isfinite(v); }), vals.end());
    if (vals.empty()) return ax;
    auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
    double lo = *mn, hi = *mx;
    if (log) {
        lo = std::floor(std::log10(lo));
        hi = std::ceil(std::log10(hi));
        if (hi <= lo) hi = lo + 1;
    } else {
        if (hi <= lo) {
            lo -= 0.5;
            hi += 0.5;
        }
        double pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
    ax.lo = lo;
    ax.hi = hi;
    return ax;
}

std::vector<std::pair<double, std::string>> ticks(const Axis& ax) {
    std::vector<std::pair<double, std::string>> t;
    if (ax.log) {
        int step = std::max(1, static_cast<int>(std::ceil((ax.hi - ax.lo) / 10)));
        for (int e = static_cast<int>(ax.lo); e <= static_cast<int>(ax.hi); e += step)
            t.push_back({std::pow(10.0, e), "1e" + std::to_string(e)});
        return t;
    }
    double range = ax.hi - ax.lo;
    double base = std::pow(10.0, std::floor(std::log10(range / 5)));
    double step = base;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (range / (base * m) <= 8) {
            step = base * m;
            break;
        }
    for (double v = std::ceil(ax.lo / step) * step; v <= ax.hi + 1e-12 * range; v += step) {
        double r = std::abs(v) < 1e-12 * range ? 0.0 : v;
        std::ostringstream os;
        os << r;
        t.push_back({r, os.str()});
    }
    return t;
}

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else if (c == '"') out += "&quot;";
        else out += c;
    }
    return out;
}

}  // namespace

std::string render_svg(const CsvData& data, const PlotSpec& spec) {
    auto col = [&](const std::string& name) {
        auto it = std::find(data.columns.begin(), data.columns.end(), name);
        if (it == data.columns.end()) throw ConfigError("plot: no column \"" + name + "\"");
        return static_cast<std::size_t>(it - data.columns.begin());
    };
    const std::size_t xc = spec.x.empty() ? 0 : col(spec.x);
    std::vector<std::size_t> ycs;
    if (spec.y.empty()) {
        for (std::size_t c = 0; c < data.columns.size(); ++c) {
            if (c == xc) continue;
            bool numeric = !data.values.empty() &&
                           std::all_of(data.values.begin(), data.values.end(), [&](const auto& r) { return !std::isnan(r[c]); });
            if (numeric) ycs.push_back(c);
        }
    } else {
        for (const auto& y : spec.y) ycs.push_back(col(y));
    }
    if (ycs.empty()) throw ConfigError("plot: no numeric y columns");

    std::vector<double> xs, ys;
    for (const auto& r : data.values) {
        xs.push_back(r[xc]);
        for (std::size_t c : ycs) ys.push_back(r[c]);
    }
    const Axis ax = make_axis(xs, spec.logx), ay = make_axis(ys, spec.logy);

    const double W = 1000, H = 600, L = 90, R = 190, T = 50, B = 60;
    const double pw = W - L - R, ph = H - T - B;
    auto px = [&](double v) { return L + ax.map(v) * pw; };
    auto py = [&](double v) { return T + (1.0 - ay.map(v)) * ph; };
    auto usable = [](double v, bool log) { return std::isfinite(v) && (!log || v > 0); };

    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                    "#17becf", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"};
    std::ostringstream os;
    os.precision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1000\" height=\"600\" viewBox=\"0 0 1000 600\">\n";
    os << "<rect width=\"1000\" height=\"600\" fill=\"white\"/>\n";
    if (!spec.title.empty())
        os << "<text x=\"" << L + pw / 2 << "\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           << "font-size=\"18\">" << escape_xml(spec.title) << "</text>\n";
    os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (const auto& [v, label] : ticks(ax)) {
        double x = px(v);
        os << "<line x1=\"" << x << "\" y1=\"" << T << "\" x2=\"" << x << "\" y2=\"" << T + ph
           << "\" stroke=\"#dddddd\"/>\n";
        os << "<text x=\"" << x << "\" y=\"" << T + ph + 20 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           << "font-size=\"12\">" << label << "</text>\n";
    }
    for (const auto& [v, label] : ticks(ay)) {
        double y = py(v);
        os << "<line x1=\"" << L << "\" y1=\"" << y << "\" x2=\"" << L + pw << "\" y2=\"" << y
           << "\" stroke=\"#dddddd\"/>\n";
        os << "<text x=\"" << L - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           << "font-size=\"12\">" << label << "</text>\n";
    }
    os << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       << "font-size=\"14\">" << escape_xml(data.columns[xc]) << "</text>\n";

    for (std::size_t s = 0; s < ycs.size(); ++s) {
        const char* colour = palette[s % 10];
        os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
        bool first = true;
        for (const auto& r : data.values) {
            double x = r[xc], y = r[ycs[s]];
            if (!usable(x, ax.log) || !usable(y, ay.log)) continue;
            os << (first ? "" : " ") << px(x) << "," << py(y);
            first = false;
        }
        os << "\"/>\n";
        double ly = T + 20 + 20 * static_cast<double>(s);
        os << "<line x1=\"" << L + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << L + pw + 40 << "\" y2=\"" << ly
           << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << L + pw + 46 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"12\">"
           << escape_xml(data.columns[ycs[s]]) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace fdecay::cli
