#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "phid/error.hpp"
#include "phid/numeric.hpp"

namespace phid::report {

/// Everything needed to reproduce an artifact. Serialized into every output.
struct RunConfig {
    std::string subcommand;
    std::vector<std::string> inputs;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool copula = true;
    double ridge = 1e-8;
    std::string pairs = "all";
    Units units = Units::kNats;
    unsigned threads = 1;
    nlohmann::json params = nlohmann::json::object(); ///< subcommand-specific settings

    nlohmann::json to_json() const
    {
        return {{"subcommand", subcommand}, {"inputs", inputs},      {"out_dir", out_dir},
                {"seed", seed},             {"copula", copula},      {"ridge", ridge},
                {"pairs", pairs},           {"units", units_name(units)}, {"threads", threads},
                {"params", params}};
    }
};

inline std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

using Cell = std::variant<std::string, double, long long>;

inline std::string format_cell(const Cell& c)
{
    if (const auto* s = std::get_if<std::string>(&c)) return *s;
    if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
    return std::to_string(std::get<long long>(c));
}

/// CSV table preceded by `# run_config: <json>` comment lines.
class Csv {
public:
    Csv(const RunConfig& rc, std::vector<std::string> columns) : columns_(std::move(columns))
    {
        out_ << "# run_config: " << rc.to_json().dump() << '\n';
        out_ << "# seed: " << rc.seed << '\n';
    }

    /// Comments must precede the first row.
    void comment(const std::string& key, const nlohmann::json& value)
    {
        if (header_written_) throw ValidationError("CSV comment after the header");
        out_ << "# " << key << ": " << value.dump() << '\n';
    }

    void row(const std::vector<Cell>& cells)
    {
        if (cells.size() != columns_.size()) throw ValidationError("CSV row width does not match header");
        header();
        std::vector<std::string> s;
        s.reserve(cells.size());
        for (const auto& c : cells) s.push_back(format_cell(c));
        write_line(s);
    }

    std::string str()
    {
        header();
        return out_.str();
    }

private:
    void header()
    {
        if (header_written_) return;
        header_written_ = true;
        write_line(columns_);
    }

    void write_line(const std::vector<std::string>& cells)
    {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

    std::vector<std::string> columns_;
    std::ostringstream out_;
    bool header_written_ = false;
};

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw IoError("write failed for " + path.string());
}

/// JSON artifact with the run config embedded under "run_config".
inline std::string json_artifact(const RunConfig& rc, nlohmann::json body)
{
    body["run_config"] = rc.to_json();
    body["seed"] = rc.seed;
    return body.dump(2) + "\n";
}

/// Non-finite numbers become null in JSON.
inline nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

// --- minimal SVG ---------------------------------------------------------------

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

inline const char* palette(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

struct ScatterPoint {
    double x = 0.0;
    double y = 0.0;
    std::size_t color = 0;
    std::string label;
};

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct Frame {
    double width = 480;
    double height = 360;
    double margin = 40;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

    double sx(double x) const { return margin + (x - x0) / (x1 - x0) * (width - 2 * margin); }
    double sy(double y) const { return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin); }
};

namespace detail {

inline void fit_range(double& lo, double& hi)
{
    if (!(lo < hi)) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
}

inline std::string escape(const std::string& s)
{
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

inline std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

inline std::string open(const Frame& f, const std::string& title, const std::string& xlabel, const std::string& ylabel)
{
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << f.width / 2 << "\" y=\"16\" text-anchor=\"middle\">" << escape(title) << "</text>\n";
    o << "<rect x=\"" << f.margin << "\" y=\"" << f.margin << "\" width=\"" << f.width - 2 * f.margin << "\" height=\""
      << f.height - 2 * f.margin << "\" fill=\"none\" stroke=\"#999\"/>\n";
    o << "<text x=\"" << f.width / 2 << "\" y=\"" << f.height - 8 << "\" text-anchor=\"middle\">" << escape(xlabel)
      << "</text>\n";
    o << "<text x=\"12\" y=\"" << f.height / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 12 " << f.height / 2
      << ")\">" << escape(ylabel) << "</text>\n";
    o << "<text x=\"" << f.margin << "\" y=\"" << f.height - f.margin + 12 << "\">" << num(f.x0) << "</text>\n";
    o << "<text x=\"" << f.width - f.margin << "\" y=\"" << f.height - f.margin + 12 << "\" text-anchor=\"end\">"
      << num(f.x1) << "</text>\n";
    o << "<text x=\"" << f.margin - 2 << "\" y=\"" << f.height - f.margin << "\" text-anchor=\"end\">" << num(f.y0)
      << "</text>\n";
    o << "<text x=\"" << f.margin - 2 << "\" y=\"" << f.margin + 8 << "\" text-anchor=\"end\">" << num(f.y1)
      << "</text>\n";
    return o.str();
}

} // namespace detail

/// Scatter plot, optionally with straight edges between point indices.
inline std::string svg_scatter(const std::vector<ScatterPoint>& pts, const std::string& title,
                               const std::string& xlabel = "x", const std::string& ylabel = "y",
                               const std::vector<std::pair<std::size_t, std::size_t>>& edges = {})
{
    Frame f;
    f.x0 = f.y0 = std::numeric_limits<double>::infinity();
    f.x1 = f.y1 = -std::numeric_limits<double>::infinity();
    for (const auto& p : pts) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) continue;
        f.x0 = std::min(f.x0, p.x);
        f.x1 = std::max(f.x1, p.x);
        f.y0 = std::min(f.y0, p.y);
        f.y1 = std::max(f.y1, p.y);
    }
    if (!std::isfinite(f.x0)) f.x0 = f.x1 = f.y0 = f.y1 = 0.0;
    detail::fit_range(f.x0, f.x1);
    detail::fit_range(f.y0, f.y1);
    std::string out = detail::open(f, title, xlabel, ylabel);
    for (const auto& [a, b] : edges) {
        if (a >= pts.size() || b >= pts.size()) continue;
        out += "<line x1=\"" + detail::num(f.sx(pts[a].x)) + "\" y1=\"" + detail::num(f.sy(pts[a].y)) + "\" x2=\"" +
               detail::num(f.sx(pts[b].x)) + "\" y2=\"" + detail::num(f.sy(pts[b].y)) +
               "\" stroke=\"#ccc\" stroke-width=\"0.5\"/>\n";
    }
    for (const auto& p : pts) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) continue;
        out += "<circle cx=\"" + detail::num(f.sx(p.x)) + "\" cy=\"" + detail::num(f.sy(p.y)) + "\" r=\"4\" fill=\"" +
               palette(p.color) + "\">";
        if (!p.label.empty()) out += "<title>" + detail::escape(p.label) + "</title>";
        out += "</circle>\n";
    }
    return out + "</svg>\n";
}

/// Line chart of one or more series; non-finite values break the line.
inline std::string svg_lines(const std::vector<Series>& series, const std::string& title,
                             const std::string& xlabel = "x", const std::string& ylabel = "y")
{
    Frame f;
    f.x0 = f.y0 = std::numeric_limits<double>::infinity();
    f.x1 = f.y1 = -std::numeric_limits<double>::infinity();
    for (const auto& s : series)
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            f.x0 = std::min(f.x0, s.x[i]);
            f.x1 = std::max(f.x1, s.x[i]);
            f.y0 = std::min(f.y0, s.y[i]);
            f.y1 = std::max(f.y1, s.y[i]);
        }
    if (!std::isfinite(f.x0)) f.x0 = f.x1 = f.y0 = f.y1 = 0.0;
    detail::fit_range(f.x0, f.x1);
    detail::fit_range(f.y0, f.y1);
    std::string out = detail::open(f, title, xlabel, ylabel);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        std::string path;
        bool pen = false;
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                pen = false;
                continue;
            }
            path += (pen ? " L" : " M") + detail::num(f.sx(s.x[i])) + " " + detail::num(f.sy(s.y[i]));
            pen = true;
        }
        if (!path.empty())
            out += "<path d=\"" + path.substr(1) + "\" fill=\"none\" stroke=\"" + palette(k) + "\" stroke-width=\"1.5\"/>\n";
        out += "<text x=\"" + detail::num(f.width - f.margin - 4) + "\" y=\"" + detail::num(f.margin + 12 + 12.0 * k) +
               "\" text-anchor=\"end\" fill=\"" + palette(k) + "\">" + detail::escape(s.name) + "</text>\n";
    }
    return out + "</svg>\n";
}

} // namespace phid::report
