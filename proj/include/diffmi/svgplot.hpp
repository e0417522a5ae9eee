#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "diffmi/common.hpp"
#include "diffmi/csv.hpp"

namespace diffmi {

/// Minimal deterministic SVG line plotter: auto-scaled axes, ticks, and one
/// polyline per series. Output depends only on the data added, so replotting
/// the same report yields byte-identical files.
class SvgPlot {
  public:
    SvgPlot(std::string title, std::string xlabel, std::string ylabel)
        : title_(std::move(title)), xlabel_(std::move(xlabel)),
          ylabel_(std::move(ylabel)) {}

    void add_line(std::vector<std::pair<double, double>> pts, std::string color,
                  std::string name = "") {
        if (pts.empty()) throw ContractError("empty plot series");
        series_.push_back(Series{std::move(pts), std::move(color), std::move(name), false});
    }

    /// Step-after series (CDFs, histogram outlines).
    void add_step(std::vector<std::pair<double, double>> pts, std::string color,
                  std::string name = "") {
        if (pts.empty()) throw ContractError("empty plot series");
        series_.push_back(Series{std::move(pts), std::move(color), std::move(name), true});
    }

    std::string render() const {
        if (series_.empty()) throw ContractError("plot has no series");

        double xlo = series_[0].pts[0].first, xhi = xlo;
        double ylo = series_[0].pts[0].second, yhi = ylo;
        for (const Series& s : series_)
            for (const auto& [x, y] : s.pts) {
                xlo = std::min(xlo, x);
                xhi = std::max(xhi, x);
                ylo = std::min(ylo, y);
                yhi = std::max(yhi, y);
            }
        if (xhi == xlo) {
            xlo -= 0.5;
            xhi += 0.5;
        }
        if (yhi == ylo) {
            ylo -= 0.5;
            yhi += 0.5;
        }

        const double left = 62, right = 16, top = 34, bottom = 46;
        const double plot_w = kWidth - left - right, plot_h = kHeight - top - bottom;
        const auto px = [&](double x) {
            return left + (x - xlo) / (xhi - xlo) * plot_w;
        };
        const auto py = [&](double y) {
            return top + plot_h - (y - ylo) / (yhi - ylo) * plot_h;
        };

        std::string svg;
        svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) +
               "\" height=\"" + num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " +
               num(kHeight) + "\">\n";
        svg += "<rect width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
               "\" fill=\"white\"/>\n";
        svg += "<text x=\"" + num(kWidth / 2) +
               "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
               "font-size=\"14\">" +
               escape(title_) + "</text>\n";

        // Axes with five ticks each.
        svg += "<g font-family=\"sans-serif\" font-size=\"10\" fill=\"#333\">\n";
        for (int i = 0; i <= 4; ++i) {
            const double fx = xlo + (xhi - xlo) * i / 4.0;
            const double fy = ylo + (yhi - ylo) * i / 4.0;
            const double gx = px(fx), gy = py(fy);
            svg += "<line x1=\"" + num(gx) + "\" y1=\"" + num(top) + "\" x2=\"" + num(gx) +
                   "\" y2=\"" + num(top + plot_h) + "\" stroke=\"#ddd\"/>\n";
            svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(gy) + "\" x2=\"" +
                   num(left + plot_w) + "\" y2=\"" + num(gy) + "\" stroke=\"#ddd\"/>\n";
            svg += "<text x=\"" + num(gx) + "\" y=\"" + num(top + plot_h + 14) +
                   "\" text-anchor=\"middle\">" + tick(fx) + "</text>\n";
            svg += "<text x=\"" + num(left - 6) + "\" y=\"" + num(gy + 3) +
                   "\" text-anchor=\"end\">" + tick(fy) + "</text>\n";
        }
        svg += "</g>\n";
        svg += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" +
               num(plot_w) + "\" height=\"" + num(plot_h) +
               "\" fill=\"none\" stroke=\"#333\"/>\n";
        svg += "<text x=\"" + num(left + plot_w / 2) + "\" y=\"" + num(kHeight - 8) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
               escape(xlabel_) + "</text>\n";
        svg += "<text x=\"14\" y=\"" + num(top + plot_h / 2) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
               "transform=\"rotate(-90 14 " +
               num(top + plot_h / 2) + ")\">" + escape(ylabel_) + "</text>\n";

        for (const Series& s : series_) {
            svg += "<polyline fill=\"none\" stroke=\"" + s.color +
                   "\" stroke-width=\"1.5\" points=\"";
            bool first = true;
            double prev_y = 0.0;
            for (const auto& [x, y] : s.pts) {
                if (s.step && !first) svg += " " + num(px(x)) + "," + num(prev_y);
                if (!first) svg += " ";
                svg += num(px(x)) + "," + num(py(y));
                prev_y = py(y);
                first = false;
            }
            svg += "\"/>\n";
        }

        // Legend for named series, top-right inside the frame.
        double ly = top + 14;
        for (const Series& s : series_) {
            if (s.name.empty()) continue;
            const double lx = left + plot_w - 150;
            svg += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly - 3) + "\" x2=\"" +
                   num(lx + 18) + "\" y2=\"" + num(ly - 3) + "\" stroke=\"" + s.color +
                   "\" stroke-width=\"2\"/>\n";
            svg += "<text x=\"" + num(lx + 23) + "\" y=\"" + num(ly) +
                   "\" font-family=\"sans-serif\" font-size=\"10\">" + escape(s.name) +
                   "</text>\n";
            ly += 14;
        }

        svg += "</svg>\n";
        return svg;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ParseError("cannot write '" + path + "'");
        out << render();
    }

  private:
    struct Series {
        std::vector<std::pair<double, double>> pts;
        std::string color;
        std::string name;
        bool step = false;
    };

    static constexpr double kWidth = 560, kHeight = 400;

    static std::string num(double v) { return fmt_double(v); }

    // Short tick labels: shortest round-trip of a value already snapped to
    // the tick grid reads fine for these plots.
    static std::string tick(double v) {
        // Snap near-zero ticks so "1e-17"-style labels never appear.
        if (std::abs(v) < 1e-9) v = 0.0;
        return fmt_double(v);
    }

    static std::string escape(const std::string& s) {
        std::string out;
        for (const char c : s) {
            if (c == '&')
                out += "&amp;";
            else if (c == '<')
                out += "&lt;";
            else if (c == '>')
                out += "&gt;";
            else
                out += c;
        }
        return out;
    }

    std::string title_, xlabel_, ylabel_;
    std::vector<Series> series_;
};

}  // namespace diffmi
