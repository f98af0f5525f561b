// Copyright 2026 The Disentangle Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "disentangle/env.hpp"
#include "disentangle/textio.hpp"

namespace disentangle::svg {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

enum class PlotKind { Line, ScatterFit };

/// For ScatterFit, `series` are drawn as markers and `fits` as lines in the
/// same colour order. For Line, `fits` is ignored.
struct Plot {
    std::string title;
    std::string x_label;
    std::string y_label;
    PlotKind kind = PlotKind::Line;
    std::vector<Series> series;
    std::vector<Series> fits;
};

inline constexpr double kWidth = 640.0;
inline constexpr double kHeight = 420.0;
inline constexpr double kLeft = 70.0;
inline constexpr double kRight = 150.0;
inline constexpr double kTop = 40.0;
inline constexpr double kBottom = 55.0;

inline const char *palette(size_t i) {
    static const char *colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
    return colours[i % 8];
}

/// Data-to-pixel mapping of the plot area.
struct Frame {
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
    double data_y(double py_value) const {
        return y0 + (kHeight - kBottom - py_value) / (kHeight - kTop - kBottom) * (y1 - y0);
    }
};

/// Tick spacing of 1, 2 or 5 times a power of ten giving about `target` ticks.
inline double nice_step(double span, int target = 5) {
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0}) {
        if (raw <= m * mag) return m * mag;
    }
    return 10.0 * mag;
}

inline void widen(double &lo, double &hi) {
    if (hi > lo) return;
    const double pad = lo == 0.0 ? 0.5 : std::abs(lo) * 0.1;
    lo -= pad;
    hi += pad;
}

inline Frame frame_for(const Plot &p) {
    double xl = std::numeric_limits<double>::infinity(), xh = -xl, yl = xl, yh = -xl;
    auto scan = [&](const std::vector<Series> &list) {
        for (const Series &s : list) {
            for (size_t i = 0; i < s.x.size(); ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                xl = std::min(xl, s.x[i]);
                xh = std::max(xh, s.x[i]);
                yl = std::min(yl, s.y[i]);
                yh = std::max(yh, s.y[i]);
            }
        }
    };
    scan(p.series);
    if (p.kind == PlotKind::ScatterFit) scan(p.fits);
    if (!std::isfinite(xl)) throw std::invalid_argument("plot: no finite data points");
    widen(xl, xh);
    widen(yl, yh);
    // Snap the y range outward to tick multiples; keep x tight to the data.
    const double ys = nice_step(yh - yl);
    return Frame{xl, xh, std::floor(yl / ys) * ys, std::ceil(yh / ys) * ys};
}

inline std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string fmt(double v) {
    // Two decimals are plenty for pixel coordinates and keep files diffable.
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << v;
    return s.str();
}

inline std::string polyline(const Frame &f, const Series &s, const char *colour, bool dashed) {
    std::string pts;
    for (size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        if (!pts.empty()) pts += ' ';
        pts += fmt(f.px(s.x[i])) + "," + fmt(f.py(s.y[i]));
    }
    std::string out = "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"2\"";
    if (dashed) out += " stroke-dasharray=\"6,4\"";
    return out + " points=\"" + pts + "\"/>\n";
}

inline std::string render(const Plot &p) {
    if (p.series.empty()) throw std::invalid_argument("plot: empty series list");
    for (const Series &s : p.series) {
        if (s.x.size() != s.y.size()) throw std::invalid_argument("plot: series '" + s.label + "' has ragged data");
    }
    const Frame f = frame_for(p);
    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" + fmt(kHeight) +
           "\" viewBox=\"0 0 " + fmt(kWidth) + " " + fmt(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(p.title) +
           "</text>\n";

    const double left = kLeft, right = kWidth - kRight, top = kTop, bottom = kHeight - kBottom;
    out += "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
    out += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(bottom) + "\" x2=\"" + fmt(right) + "\" y2=\"" + fmt(bottom) +
           "\"/>\n";
    out += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(top) + "\" x2=\"" + fmt(left) + "\" y2=\"" + fmt(bottom) +
           "\"/>\n";
    out += "</g>\n";

    out += "<g class=\"ticks\">\n";
    const double xs = nice_step(f.x1 - f.x0);
    for (double t = std::ceil(f.x0 / xs) * xs; t <= f.x1 + 1e-9 * xs; t += xs) {
        const double x = f.px(t);
        out += "<line x1=\"" + fmt(x) + "\" y1=\"" + fmt(bottom) + "\" x2=\"" + fmt(x) + "\" y2=\"" + fmt(bottom + 5) +
               "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(bottom + 18) + "\" text-anchor=\"middle\">" +
               format_double(std::round(t / xs) * xs) + "</text>\n";
    }
    const double ys = nice_step(f.y1 - f.y0);
    for (double t = f.y0; t <= f.y1 + 1e-9 * ys; t += ys) {
        const double y = f.py(t);
        out += "<line x1=\"" + fmt(left - 5) + "\" y1=\"" + fmt(y) + "\" x2=\"" + fmt(left) + "\" y2=\"" + fmt(y) +
               "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + fmt(left - 8) + "\" y=\"" + fmt(y + 4) + "\" text-anchor=\"end\">" +
               format_double(std::round(t / ys) * ys) + "</text>\n";
    }
    out += "</g>\n";
    out += "<text x=\"" + fmt((left + right) / 2) + "\" y=\"" + fmt(kHeight - 15) + "\" text-anchor=\"middle\">" +
           escape(p.x_label) + "</text>\n";
    out += "<text x=\"18\" y=\"" + fmt((top + bottom) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
           fmt((top + bottom) / 2) + ")\">" + escape(p.y_label) + "</text>\n";

    out += "<g class=\"data\">\n";
    for (size_t i = 0; i < p.series.size(); ++i) {
        const Series &s = p.series[i];
        if (p.kind == PlotKind::Line) {
            out += polyline(f, s, palette(i), false);
            continue;
        }
        for (size_t k = 0; k < s.x.size(); ++k) {
            if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
            out += "<circle cx=\"" + fmt(f.px(s.x[k])) + "\" cy=\"" + fmt(f.py(s.y[k])) + "\" r=\"4\" fill=\"" +
                   palette(i) + "\"/>\n";
        }
    }
    if (p.kind == PlotKind::ScatterFit) {
        for (size_t i = 0; i < p.fits.size(); ++i) out += polyline(f, p.fits[i], palette(i), true);
    }
    out += "</g>\n";

    out += "<g class=\"legend\">\n";
    double ly = top + 10;
    auto entry = [&](const std::string &label, const char *colour, bool dashed) {
        out += "<line x1=\"" + fmt(right + 15) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(right + 40) + "\" y2=\"" +
               fmt(ly) + "\" stroke=\"" + colour + "\" stroke-width=\"2\"" +
               (dashed ? " stroke-dasharray=\"6,4\"" : "") + "/>\n";
        out += "<text x=\"" + fmt(right + 46) + "\" y=\"" + fmt(ly + 4) + "\">" + escape(label) + "</text>\n";
        ly += 18;
    };
    for (size_t i = 0; i < p.series.size(); ++i) entry(p.series[i].label, palette(i), false);
    if (p.kind == PlotKind::ScatterFit) {
        for (size_t i = 0; i < p.fits.size(); ++i) entry(p.fits[i].label, palette(i), true);
    }
    out += "</g>\n</svg>\n";
    return out;
}

inline void emit_plot(const Plot &p, const std::string &path) {
    const std::string text = render(p);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("plot: cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("plot: write to '" + path + "' failed");
}

/// The family f(l; alpha) over l = 0..max_layer for each alpha.
inline Plot weights_plot(const std::vector<double> &alphas, size_t max_layer) {
    Plot p;
    p.title = "Measurement weights";
    p.x_label = "layer l";
    p.y_label = "f(l; alpha)";
    for (double a : alphas) {
        Series s;
        s.label = "alpha = " + format_double(a);
        for (size_t l = 0; l <= max_layer; ++l) {
            s.x.push_back(static_cast<double>(l));
            s.y.push_back(penalty_weight(static_cast<double>(l), a));
        }
        p.series.push_back(std::move(s));
    }
    return p;
}

}  // namespace disentangle::svg
