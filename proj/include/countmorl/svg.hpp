#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "countmorl/common.hpp"

namespace countmorl {

/// Minimal hand-rendered SVG plots. CSV files are the canonical outputs;
/// these are quick-look companions only.
class SvgPlot {
  public:
    SvgPlot(double width, double height) : width_(width), height_(height) {
        body_ += "<rect x=\"0\" y=\"0\" width=\"" + num(width_) + "\" height=\"" + num(height_) +
                 "\" fill=\"white\"/>\n";
    }

    void set_view(double x_min, double x_max, double y_min, double y_max) {
        x_min_ = x_min;
        x_max_ = x_max;
        y_min_ = y_min;
        y_max_ = y_max;
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color) {
        if (pts.empty()) return;
        std::string points;
        for (auto [x, y] : pts) points += num(px(x)) + "," + num(py(y)) + " ";
        body_ += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"" +
                 points + "\"/>\n";
    }

    void dots(const std::vector<std::pair<double, double>>& pts, const std::string& color,
              double radius = 2.0) {
        for (auto [x, y] : pts)
            body_ += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"" +
                     num(radius) + "\" fill=\"" + color + "\"/>\n";
    }

    void bar(double x, double y, double bar_width, const std::string& color) {
        const double x0 = px(x) - bar_width / 2.0;
        const double y0 = py(y);
        const double base = py(std::max(y_min_, 0.0));
        body_ += "<rect x=\"" + num(x0) + "\" y=\"" + num(std::min(y0, base)) + "\" width=\"" +
                 num(bar_width) + "\" height=\"" + num(std::abs(base - y0)) + "\" fill=\"" + color +
                 "\" fill-opacity=\"0.6\"/>\n";
    }

    void text(double x, double y, const std::string& label, const std::string& color = "black") {
        body_ += "<text x=\"" + num(px(x)) + "\" y=\"" + num(py(y)) +
                 "\" font-size=\"11\" font-family=\"monospace\" fill=\"" + color + "\">" + label +
                 "</text>\n";
    }

    void axes() {
        body_ += "<line x1=\"" + num(margin_) + "\" y1=\"" + num(height_ - margin_) + "\" x2=\"" +
                 num(width_ - margin_) + "\" y2=\"" + num(height_ - margin_) +
                 "\" stroke=\"black\"/>\n";
        body_ += "<line x1=\"" + num(margin_) + "\" y1=\"" + num(margin_) + "\" x2=\"" +
                 num(margin_) + "\" y2=\"" + num(height_ - margin_) + "\" stroke=\"black\"/>\n";
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("SvgPlot: cannot open '" + path + "'");
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width_) << "\" height=\""
            << num(height_) << "\">\n"
            << body_ << "</svg>\n";
    }

  private:
    static std::string num(double v) { return format_double(std::round(v * 100.0) / 100.0); }

    double px(double x) const {
        return margin_ + (x - x_min_) / (x_max_ - x_min_) * (width_ - 2 * margin_);
    }
    double py(double y) const {
        return height_ - margin_ - (y - y_min_) / (y_max_ - y_min_) * (height_ - 2 * margin_);
    }

    double width_;
    double height_;
    double margin_ = 40.0;
    double x_min_ = 0.0, x_max_ = 1.0, y_min_ = 0.0, y_max_ = 1.0;
    std::string body_;
};

}  // namespace countmorl
