#pragma once

// Minimal static SVG charts for the report subcommand.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "impdet/io.hpp"

namespace impdet::svg {

struct Series {
    std::string name;
    std::vector<double> x, y;
};

struct Bar {
    std::string label;
    double value = 0.0;
    double lo = 0.0;  // whisker
    double hi = 0.0;
};

namespace detail {

inline constexpr double kW = 640, kH = 420, kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;
inline const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

struct Frame {
    double x0, x1, y0, y1;
    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); }
    double py(double y) const { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); }
};

inline std::string header(const std::string& title) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kW) + "\" height=\"" + num(kH) +
           "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
           "<text x=\"" + num(kW / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) +
           "</text>\n";
}

inline std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel, bool x_ticks = true) {
    std::string s;
    s += "<line x1=\"" + num(f.px(f.x0)) + "\" y1=\"" + num(f.py(f.y0)) + "\" x2=\"" + num(f.px(f.x1)) + "\" y2=\"" +
         num(f.py(f.y0)) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(f.px(f.x0)) + "\" y1=\"" + num(f.py(f.y0)) + "\" x2=\"" + num(f.px(f.x0)) + "\" y2=\"" +
         num(f.py(f.y1)) + "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double yv = f.y0 + (f.y1 - f.y0) * i / 5.0;
        s += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(f.py(yv) + 4) + "\" text-anchor=\"end\">" + num(yv) +
             "</text>\n";
        if (x_ticks) {
            const double xv = f.x0 + (f.x1 - f.x0) * i / 5.0;
            s += "<text x=\"" + num(f.px(xv)) + "\" y=\"" + num(kH - kBottom + 16) + "\" text-anchor=\"middle\">" +
                 num(xv) + "</text>\n";
        }
    }
    s += "<text x=\"" + num((kLeft + kW - kRight) / 2) + "\" y=\"" + num(kH - 18) + "\" text-anchor=\"middle\">" +
         escape(xlabel) + "</text>\n";
    s += "<text x=\"16\" y=\"" + num((kTop + kH - kBottom) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num((kTop + kH - kBottom) / 2) + ")\">" + escape(ylabel) + "</text>\n";
    return s;
}

inline void pad_range(double& lo, double& hi) {
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
}

}  // namespace detail

inline std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<Series>& series) {
    using namespace detail;
    double x0 = INFINITY, x1 = -INFINITY, y0 = 0.0, y1 = -INFINITY;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0, y1 = 1.0;
    pad_range(x0, x1);
    pad_range(y0, y1);
    const Frame f{x0, x1, y0, y1};
    std::string out = header(title) + axes(f, xlabel, ylabel);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = kColors[k % std::size(kColors)];
        std::string pts;
        for (std::size_t i = 0; i < series[k].x.size(); ++i)
            pts += num(f.px(series[k].x[i])) + "," + num(f.py(series[k].y[i])) + " ";
        out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts +
               "\"/>\n";
        const double ly = kTop + 16.0 * static_cast<double>(k);
        out += "<rect x=\"" + num(kW - kRight + 12) + "\" y=\"" + num(ly) + "\" width=\"12\" height=\"4\" fill=\"" +
               color + "\"/>\n";
        out += "<text x=\"" + num(kW - kRight + 30) + "\" y=\"" + num(ly + 6) + "\">" + escape(series[k].name) +
               "</text>\n";
    }
    return out + "</svg>\n";
}

inline std::string bar_chart(const std::string& title, const std::string& ylabel, const std::vector<Bar>& bars) {
    using namespace detail;
    double y1 = 1.0;
    for (const auto& b : bars) y1 = std::max({y1, b.value, b.hi});
    const Frame f{0.0, static_cast<double>(std::max<std::size_t>(bars.size(), 1)), 0.0, y1};
    std::string out = header(title) + axes(f, "", ylabel, false);
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const Bar& b = bars[i];
        const double xl = f.px(static_cast<double>(i) + 0.15), xr = f.px(static_cast<double>(i) + 0.85);
        const char* color = kColors[i % std::size(kColors)];
        out += "<rect x=\"" + num(xl) + "\" y=\"" + num(f.py(b.value)) + "\" width=\"" + num(xr - xl) +
               "\" height=\"" + num(f.py(0.0) - f.py(b.value)) + "\" fill=\"" + color + "\" opacity=\"0.75\"/>\n";
        const double xm = 0.5 * (xl + xr);
        out += "<line x1=\"" + num(xm) + "\" y1=\"" + num(f.py(b.lo)) + "\" x2=\"" + num(xm) + "\" y2=\"" +
               num(f.py(b.hi)) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + num(xm) + "\" y=\"" + num(kH - kBottom + 16) + "\" text-anchor=\"middle\" font-size=\"10\">" +
               escape(b.label) + "</text>\n";
    }
    return out + "</svg>\n";
}

}  // namespace impdet::svg
