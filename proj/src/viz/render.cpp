// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tli/numcore/error.hpp"
#include "tli/numcore/text.hpp"
#include "tli/viz/viz.hpp"

namespace tli {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kMarginLeft = 70.0;
constexpr double kMarginRight = 30.0;
constexpr double kMarginTop = 40.0;
constexpr double kMarginBottom = 60.0;

std::string px(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string xml_escape(std::string_view text) {
    std::string out;
    for (const char c : text) {
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

std::string csv_field(std::string_view text) {
    if (text.find_first_of(",\"\n") == std::string_view::npos) {
        return std::string(text);
    }
    std::string out = "\"";
    for (const char c : text) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + '"';
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << content;
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

struct Frame {
    double x0, x1, y0, y1;
    double map_x(double x) const {
        const double span = x1 - x0 == 0.0 ? 1.0 : x1 - x0;
        return kMarginLeft + (x - x0) / span * (kWidth - kMarginLeft - kMarginRight);
    }
    double map_y(double y) const {
        const double span = y1 - y0 == 0.0 ? 1.0 : y1 - y0;
        return kHeight - kMarginBottom - (y - y0) / span * (kHeight - kMarginTop - kMarginBottom);
    }
};

std::string svg_open(const std::string& title) {
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    s << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"white\"/>\n";
    s << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
         "font-family=\"sans-serif\">"
      << xml_escape(title) << "</text>\n";
    return s.str();
}

std::string axes(const Frame& f, const std::string& x_label, const std::string& y_label) {
    std::ostringstream s;
    const double left = kMarginLeft;
    const double right = kWidth - kMarginRight;
    const double top = kMarginTop;
    const double bottom = kHeight - kMarginBottom;
    s << "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
    s << "<line x1=\"" << px(left) << "\" y1=\"" << px(bottom) << "\" x2=\"" << px(right)
      << "\" y2=\"" << px(bottom) << "\"/>\n";
    s << "<line x1=\"" << px(left) << "\" y1=\"" << px(top) << "\" x2=\"" << px(left)
      << "\" y2=\"" << px(bottom) << "\"/>\n";
    s << "</g>\n";
    s << "<g class=\"tick-labels\" font-size=\"11\" font-family=\"sans-serif\">\n";
    for (int k = 0; k <= 4; ++k) {
        const double yv = f.y0 + (f.y1 - f.y0) * k / 4.0;
        s << "<text x=\"" << px(left - 6) << "\" y=\"" << px(f.map_y(yv) + 4)
          << "\" text-anchor=\"end\">" << format_fixed(yv, 2) << "</text>\n";
    }
    s << "</g>\n";
    s << "<text x=\"" << px((left + right) / 2) << "\" y=\"" << px(kHeight - 15)
      << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">"
      << xml_escape(x_label) << "</text>\n";
    s << "<text x=\"18\" y=\"" << px((top + bottom) / 2)
      << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
         "transform=\"rotate(-90 18 "
      << px((top + bottom) / 2) << ")\">" << xml_escape(y_label) << "</text>\n";
    return s.str();
}

} // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& image) {
    auto out = image;
    out.replace_extension(".csv");
    return out;
}

RenderedFiles render_layer_curve(const LayerScanResult& result, std::size_t peak_marker,
                                 const std::filesystem::path& path, const std::string& title) {
    const auto& means = result.per_layer_mean_sim;
    if (means.empty() || result.per_layer_std.size() != means.size()) {
        throw ContractError("render_layer_curve: scan result is empty or inconsistent");
    }
    if (peak_marker >= means.size()) {
        throw ContractError("render_layer_curve: peak marker " + std::to_string(peak_marker) +
                            " outside the " + std::to_string(means.size()) + " layers");
    }
    const double lowest = *std::min_element(means.begin(), means.end());
    Frame f{0.0, static_cast<double>(std::max<std::size_t>(means.size() - 1, 1)), lowest - 0.05,
            1.0};

    std::ostringstream s;
    s << svg_open(title);
    s << "<g class=\"plot\" data-y-min=\"" << format_double(f.y0) << "\" data-y-max=\""
      << format_double(f.y1) << "\">\n";
    s << axes(f, "Layer", "Mean cosine similarity");
    s << "<g class=\"tick-labels\" font-size=\"11\" font-family=\"sans-serif\">\n";
    for (std::size_t l = 0; l < means.size(); ++l) {
        s << "<text x=\"" << px(f.map_x(static_cast<double>(l))) << "\" y=\""
          << px(kHeight - kMarginBottom + 16) << "\" text-anchor=\"middle\">" << l << "</text>\n";
    }
    s << "</g>\n";
    const double mx = f.map_x(static_cast<double>(peak_marker));
    s << "<line class=\"peak-marker\" x1=\"" << px(mx) << "\" y1=\"" << px(kMarginTop)
      << "\" x2=\"" << px(mx) << "\" y2=\"" << px(kHeight - kMarginBottom)
      << "\" stroke=\"red\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n";
    s << "<polyline class=\"curve\" fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"2\" points=\"";
    for (std::size_t l = 0; l < means.size(); ++l) {
        s << (l ? " " : "") << px(f.map_x(static_cast<double>(l))) << ',' << px(f.map_y(means[l]));
    }
    s << "\"/>\n";
    for (std::size_t l = 0; l < means.size(); ++l) {
        s << "<circle class=\"point\" cx=\"" << px(f.map_x(static_cast<double>(l))) << "\" cy=\""
          << px(f.map_y(means[l])) << "\" r=\"3.5\" fill=\"#1f4e9c\"/>\n";
    }
    s << "</g>\n</svg>\n";

    std::string csv = "layer,mean_sim,std_sim\n";
    for (std::size_t l = 0; l < means.size(); ++l) {
        csv += std::to_string(l) + ',' + format_double(means[l]) + ',' +
               format_double(result.per_layer_std[l]) + '\n';
    }
    RenderedFiles files{path, sidecar_path(path)};
    write_file(files.image, s.str());
    write_file(files.data, csv);
    return files;
}

RenderedFiles render_projection(const Projection2D& projection, const std::filesystem::path& path,
                                const std::string& title) {
    projection.validate();
    const auto& pts = projection.points;
    Frame f{-1.0, 1.0, -1.0, 1.0};
    if (!pts.empty()) {
        f = {pts[0][0], pts[0][0], pts[0][1], pts[0][1]};
        for (const auto& p : pts) {
            f.x0 = std::min(f.x0, p[0]);
            f.x1 = std::max(f.x1, p[0]);
            f.y0 = std::min(f.y0, p[1]);
            f.y1 = std::max(f.y1, p[1]);
        }
        const double pad_x = 0.08 * std::max(f.x1 - f.x0, 1e-9);
        const double pad_y = 0.08 * std::max(f.y1 - f.y0, 1e-9);
        f.x0 -= pad_x;
        f.x1 += pad_x;
        f.y0 -= pad_y;
        f.y1 += pad_y;
    }
    std::vector<std::string> sx(pts.size());
    std::vector<std::string> sy(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        sx[i] = px(f.map_x(pts[i][0]));
        sy[i] = px(f.map_y(pts[i][1]));
    }

    std::ostringstream s;
    s << svg_open(title);
    s << "<g class=\"links\" stroke=\"grey\" stroke-width=\"1\">\n";
    for (const auto& [a, b] : projection.pair_links) {
        s << "<line class=\"link\" x1=\"" << sx[a] << "\" y1=\"" << sy[a] << "\" x2=\"" << sx[b]
          << "\" y2=\"" << sy[b] << "\"/>\n";
    }
    s << "</g>\n<g class=\"markers\">\n";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const bool source = projection.tags[i] == LanguageTag::source;
        s << "<circle class=\"marker " << (source ? "source" : "target") << "\" cx=\"" << sx[i]
          << "\" cy=\"" << sy[i] << "\" r=\"4\" fill=\"" << (source ? "blue" : "red") << "\"/>\n";
    }
    s << "</g>\n<g class=\"labels\" font-size=\"10\" font-family=\"sans-serif\">\n";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        s << "<text x=\"" << px(f.map_x(pts[i][0]) + 5) << "\" y=\"" << px(f.map_y(pts[i][1]) - 5)
          << "\">" << xml_escape(projection.labels[i]) << "</text>\n";
    }
    s << "</g>\n";
    s << "<g class=\"legend\" font-size=\"11\" font-family=\"sans-serif\">\n"
      << "<rect x=\"" << px(kWidth - 130) << "\" y=\"36\" width=\"10\" height=\"10\" fill=\"blue\"/>"
      << "<text x=\"" << px(kWidth - 115) << "\" y=\"45\">source</text>\n"
      << "<rect x=\"" << px(kWidth - 130) << "\" y=\"52\" width=\"10\" height=\"10\" fill=\"red\"/>"
      << "<text x=\"" << px(kWidth - 115) << "\" y=\"61\">target</text>\n</g>\n";
    s << "</svg>\n";

    std::string csv = "index,label,language,x,y,px,py\n";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        csv += std::to_string(i) + ',' + csv_field(projection.labels[i]) + ',' +
               (projection.tags[i] == LanguageTag::source ? "source" : "target") + ',' +
               format_double(pts[i][0]) + ',' + format_double(pts[i][1]) + ',' + sx[i] + ',' +
               sy[i] + '\n';
    }
    RenderedFiles files{path, sidecar_path(path)};
    write_file(files.image, s.str());
    write_file(files.data, csv);
    return files;
}

} // namespace tli
