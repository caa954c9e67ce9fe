#pragma once

// Result persistence: CSV tables with the model parameters echoed in header
// comments, JSON manifests, and small static SVG plots. CSV is the data
// contract; plots are a convenience rendered from the same numbers.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tmlab/transfer.hpp"

namespace tmlab {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::map<std::string, std::string> params_echo(const ModelParams& p) {
    return {{"L", std::to_string(p.sites)},     {"J", format_double(p.J)},
            {"g", format_double(p.g)},          {"h_R", format_double(p.h_R)},
            {"h_I", format_double(p.h_I)},      {"boundary", boundary_name(p.boundary)}};
}

class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns,
              const std::map<std::string, std::string>& header_echo = {})
        : out_(path) {
        if (!out_) throw std::runtime_error("cannot open " + path.string());
        for (const auto& [k, v] : header_echo) out_ << "# " << k << "=" << v << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i)
            out_ << columns[i] << (i + 1 < columns.size() ? "," : "\n");
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i)
            out_ << cells[i] << (i + 1 < cells.size() ? "," : "\n");
    }

  private:
    std::ofstream out_;
};

inline std::string cell(double v) { return format_double(v); }
template <typename T, typename = std::enable_if_t<std::is_integral_v<T>>>
std::string cell(T v) {
    return std::to_string(v);
}

// Minimal CSV reader for round-tripping our own outputs (collapse, plot).
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::map<std::string, std::string> header_echo;

    int column_index(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return static_cast<int>(i);
        return -1;
    }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    CsvTable t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos)
                t.header_echo[line.substr(2, eq - 2)] = line.substr(eq + 1);
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        if (!have_header) {
            t.columns = cells;
            have_header = true;
        } else {
            std::vector<double> row;
            for (const auto& s : cells) {
                try {
                    row.push_back(std::stod(s));
                } catch (...) {
                    row.push_back(std::numeric_limits<double>::quiet_NaN());
                }
            }
            t.rows.push_back(row);
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// SVG line plots.

struct SvgSeries {
    std::vector<double> x, y;
    std::string label;
};

class SvgPlot {
  public:
    SvgPlot(std::string title, std::string xlabel, std::string ylabel)
        : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

    void add(SvgSeries s) { series_.push_back(std::move(s)); }
    void log_y(bool v) { log_y_ = v; }

    void write(const std::filesystem::path& path) const {
        const double w = 640, h = 480, ml = 70, mr = 20, mt = 40, mb = 55;
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        for (const auto& s : series_)
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                const double yv = log_y_ ? safe_log10(s.y[i]) : s.y[i];
                if (!std::isfinite(s.x[i]) || !std::isfinite(yv)) continue;
                xmin = std::min(xmin, s.x[i]);
                xmax = std::max(xmax, s.x[i]);
                ymin = std::min(ymin, yv);
                ymax = std::max(ymax, yv);
            }
        if (xmin > xmax) {
            xmin = 0;
            xmax = 1;
        }
        if (ymin > ymax) {
            ymin = 0;
            ymax = 1;
        }
        if (xmax - xmin < 1e-12) {
            xmin -= 0.5;
            xmax += 0.5;
        }
        if (ymax - ymin < 1e-12) {
            ymin -= 0.5;
            ymax += 0.5;
        }
        auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
        auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot open " + path.string());
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
            << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
        out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
            << title_ << "</text>\n";
        // frame
        out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << w - ml - mr
            << "\" height=\"" << h - mt - mb << "\" fill=\"none\" stroke=\"black\"/>\n";
        // ticks
        for (int i = 0; i <= 5; ++i) {
            const double xv = xmin + (xmax - xmin) * i / 5.0;
            const double yv = ymin + (ymax - ymin) * i / 5.0;
            out << "<line x1=\"" << px(xv) << "\" y1=\"" << h - mb << "\" x2=\"" << px(xv)
                << "\" y2=\"" << h - mb + 5 << "\" stroke=\"black\"/>\n";
            out << "<text x=\"" << px(xv) << "\" y=\"" << h - mb + 20
                << "\" text-anchor=\"middle\" font-size=\"11\">" << tick_label(xv) << "</text>\n";
            out << "<line x1=\"" << ml - 5 << "\" y1=\"" << py(yv) << "\" x2=\"" << ml
                << "\" y2=\"" << py(yv) << "\" stroke=\"black\"/>\n";
            out << "<text x=\"" << ml - 8 << "\" y=\"" << py(yv) + 4
                << "\" text-anchor=\"end\" font-size=\"11\">"
                << tick_label(log_y_ ? std::pow(10.0, yv) : yv) << "</text>\n";
        }
        out << "<text x=\"" << w / 2 << "\" y=\"" << h - 12
            << "\" text-anchor=\"middle\" font-size=\"13\">" << xlabel_ << "</text>\n";
        out << "<text x=\"18\" y=\"" << h / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
            << "transform=\"rotate(-90 18 " << h / 2 << ")\">" << ylabel_
            << (log_y_ ? " (log scale)" : "") << "</text>\n";

        static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                        "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
        int ci = 0;
        double ly = mt + 16;
        for (const auto& s : series_) {
            const char* color = palette[ci % 8];
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                const double yv = log_y_ ? safe_log10(s.y[i]) : s.y[i];
                if (!std::isfinite(s.x[i]) || !std::isfinite(yv)) continue;
                out << px(s.x[i]) << "," << py(yv) << " ";
            }
            out << "\"/>\n";
            if (!s.label.empty()) {
                out << "<line x1=\"" << w - mr - 130 << "\" y1=\"" << ly << "\" x2=\""
                    << w - mr - 110 << "\" y2=\"" << ly << "\" stroke=\"" << color
                    << "\" stroke-width=\"2\"/>\n";
                out << "<text x=\"" << w - mr - 105 << "\" y=\"" << ly + 4
                    << "\" font-size=\"11\">" << s.label << "</text>\n";
                ly += 16;
            }
            ++ci;
        }
        out << "</svg>\n";
    }

  private:
    static double safe_log10(double v) {
        return v > 0.0 ? std::log10(v) : std::numeric_limits<double>::quiet_NaN();
    }
    static std::string tick_label(double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4g", v);
        return buf;
    }

    std::string title_, xlabel_, ylabel_;
    bool log_y_ = false;
    std::vector<SvgSeries> series_;
};

}  // namespace tmlab
