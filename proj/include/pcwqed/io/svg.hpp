// svg.hpp: minimal static line charts

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "pcwqed/errors.hpp"
#include "pcwqed/io/csv.hpp"

namespace pcwqed::io {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    bool markers{false};
};

struct Chart {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    double width{640.0};
    double height{420.0};
};

namespace detail {

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

} // namespace detail

inline std::string render_svg(const Chart& c) {
    static const char* palette[] = {"#1b9e77", "#386cb0", "#d95f02", "#7570b3", "#e7298a", "#666666"};
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (const auto& s : c.series)
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    const double l = 70, r = 20, t = 40, b = 50;
    const double pw = c.width - l - r, ph = c.height - t - b;
    auto px = [&](double x) { return l + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return t + (ymax - y) / (ymax - ymin) * ph; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::fmt(c.width) << "\" height=\""
       << detail::fmt(c.height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << detail::fmt(c.width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
       << detail::escape(c.title) << "</text>\n";
    os << "<rect x=\"" << detail::fmt(l) << "\" y=\"" << detail::fmt(t) << "\" width=\"" << detail::fmt(pw)
       << "\" height=\"" << detail::fmt(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = xmin + (xmax - xmin) * k / 4.0, yv = ymin + (ymax - ymin) * k / 4.0;
        os << "<text x=\"" << detail::fmt(px(xv)) << "\" y=\"" << detail::fmt(t + ph + 16)
           << "\" text-anchor=\"middle\">" << detail::tick(xv) << "</text>\n";
        os << "<text x=\"" << detail::fmt(l - 6) << "\" y=\"" << detail::fmt(py(yv) + 4) << "\" text-anchor=\"end\">"
           << detail::tick(yv) << "</text>\n";
    }
    os << "<text x=\"" << detail::fmt(l + pw / 2) << "\" y=\"" << detail::fmt(c.height - 10)
       << "\" text-anchor=\"middle\">" << detail::escape(c.x_label) << "</text>\n";
    os << "<text transform=\"translate(16," << detail::fmt(t + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
       << detail::escape(c.y_label) << "</text>\n";
    for (std::size_t si = 0; si < c.series.size(); ++si) {
        const auto& s = c.series[si];
        const char* col = palette[si % 6];
        std::ostringstream pts;
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
            if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) pts << detail::fmt(px(s.x[i])) << "," << detail::fmt(py(s.y[i])) << " ";
        if (s.markers) {
            for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
                if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
                    os << "<circle cx=\"" << detail::fmt(px(s.x[i])) << "\" cy=\"" << detail::fmt(py(s.y[i]))
                       << "\" r=\"2.5\" fill=\"" << col << "\"/>\n";
        } else {
            os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
        }
        os << "<text x=\"" << detail::fmt(l + pw - 6) << "\" y=\"" << detail::fmt(t + 16 + 15 * si)
           << "\" text-anchor=\"end\" fill=\"" << col << "\">" << detail::escape(s.label) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline void write_svg(const Chart& c, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write '" + path + "'");
    f << render_svg(c);
}

} // namespace pcwqed::io
