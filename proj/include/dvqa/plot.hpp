#pragma once

// Minimal SVG line chart for training curves. The CSV stays the canonical record.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "dvqa/vqa.hpp"

namespace dvqa {

struct Series {
    std::string label;
    std::string color;
    std::vector<double> y;
    bool right_axis = false;
};

namespace detail {

inline std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

inline std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace detail

/// Left axis scales to the data of left-axis series; the right axis is fixed to [0, 1].
inline std::string svg_chart(const std::string& title, const std::string& x_label, const std::string& left_label, const std::string& right_label,
                             const std::vector<Series>& series) {
    const double W = 720, H = 420, L = 70, R = 70, T = 40, B = 60;
    const double pw = W - L - R, ph = H - T - B;
    std::size_t npts = 0;
    double lo = 0, hi = 0;
    bool any_left = false;
    for (const auto& s : series) {
        npts = std::max(npts, s.y.size());
        if (s.right_axis) continue;
        for (double v : s.y) {
            if (!std::isfinite(v)) continue;
            if (!any_left) lo = hi = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            any_left = true;
        }
    }
    lo = std::min(lo, 0.0);
    if (hi <= lo) hi = lo + 1;
    hi += 0.05 * (hi - lo);
    const double xmax = npts > 1 ? static_cast<double>(npts - 1) : 1.0;
    auto px = [&](double i) { return L + pw * i / xmax; };
    auto py = [&](double v, bool right) { return right ? T + ph * (1 - v) : T + ph * (1 - (v - lo) / (hi - lo)); };

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"420\" viewBox=\"0 0 720 420\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"720\" height=\"420\" fill=\"white\"/>\n";
    s += "<text x=\"360\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + detail::escape_xml(title) + "</text>\n";
    s += "<rect x=\"" + detail::fmt("%.1f", L) + "\" y=\"" + detail::fmt("%.1f", T) + "\" width=\"" + detail::fmt("%.1f", pw) + "\" height=\"" +
         detail::fmt("%.1f", ph) + "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int k = 0; k <= 5; ++k) {
        const double f = k / 5.0;
        const double y = T + ph * (1 - f);
        s += "<line x1=\"" + detail::fmt("%.1f", L) + "\" x2=\"" + detail::fmt("%.1f", L + pw) + "\" y1=\"" + detail::fmt("%.1f", y) + "\" y2=\"" +
             detail::fmt("%.1f", y) + "\" stroke=\"#ddd\"/>\n";
        s += "<text x=\"" + detail::fmt("%.1f", L - 6) + "\" y=\"" + detail::fmt("%.1f", y + 4) + "\" text-anchor=\"end\">" +
             detail::fmt("%.3g", lo + f * (hi - lo)) + "</text>\n";
        s += "<text x=\"" + detail::fmt("%.1f", L + pw + 6) + "\" y=\"" + detail::fmt("%.1f", y + 4) + "\">" + detail::fmt("%.1f", f) + "</text>\n";
    }
    const std::size_t step = std::max<std::size_t>(1, (npts + 9) / 10);
    for (std::size_t i = 0; i < npts; i += step) {
        s += "<text x=\"" + detail::fmt("%.1f", px(static_cast<double>(i))) + "\" y=\"" + detail::fmt("%.1f", T + ph + 18) + "\" text-anchor=\"middle\">" +
             std::to_string(i) + "</text>\n";
    }
    s += "<text x=\"360\" y=\"" + detail::fmt("%.1f", H - 18) + "\" text-anchor=\"middle\">" + detail::escape_xml(x_label) + "</text>\n";
    s += "<text transform=\"translate(18," + detail::fmt("%.1f", T + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" + detail::escape_xml(left_label) +
         "</text>\n";
    s += "<text transform=\"translate(" + detail::fmt("%.1f", W - 18) + "," + detail::fmt("%.1f", T + ph / 2) + ") rotate(90)\" text-anchor=\"middle\">" +
         detail::escape_xml(right_label) + "</text>\n";
    double ly = T + 14;
    for (const auto& ser : series) {
        std::string pts;
        for (std::size_t i = 0; i < ser.y.size(); ++i) {
            if (!std::isfinite(ser.y[i])) continue;
            pts += detail::fmt("%.2f", px(static_cast<double>(i))) + "," + detail::fmt("%.2f", py(ser.y[i], ser.right_axis)) + " ";
        }
        s += "<polyline fill=\"none\" stroke=\"" + ser.color + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
        s += "<line x1=\"" + detail::fmt("%.1f", L + pw - 150) + "\" x2=\"" + detail::fmt("%.1f", L + pw - 130) + "\" y1=\"" + detail::fmt("%.1f", ly) +
             "\" y2=\"" + detail::fmt("%.1f", ly) + "\" stroke=\"" + ser.color + "\" stroke-width=\"2\"/>\n";
        s += "<text x=\"" + detail::fmt("%.1f", L + pw - 124) + "\" y=\"" + detail::fmt("%.1f", ly + 4) + "\">" + detail::escape_xml(ser.label) + "</text>\n";
        ly += 16;
    }
    s += "</svg>\n";
    return s;
}

/// Loss on the left axis, train and test accuracy on the right.
inline std::string training_svg(const std::vector<EpochMetrics>& rows, const std::string& title) {
    Series loss{"loss", "#c0392b", {}, false}, train{"train accuracy", "#2471a3", {}, true}, test{"test accuracy", "#1e8449", {}, true};
    for (const auto& r : rows) {
        loss.y.push_back(r.loss);
        train.y.push_back(r.train_acc);
        test.y.push_back(r.test_acc);
    }
    return svg_chart(title, "epoch", "cross-entropy loss", "accuracy", {loss, train, test});
}

}  // namespace dvqa
