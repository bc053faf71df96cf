#include <microchar/svg.hpp>

#include <algorithm>
#include <fstream>

namespace microchar {

void write_histogram_svg(const std::string& path, const Histogram& hist,
                         const std::string& title) {
    const int width = 640, height = 400;
    const int margin_l = 50, margin_r = 16, margin_t = 36, margin_b = 44;
    const int plot_w = width - margin_l - margin_r;
    const int plot_h = height - margin_t - margin_b;

    std::uint64_t max_freq = 1;
    for (std::uint64_t f : hist.frequencies) max_freq = std::max(max_freq, f);

    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";

    const std::size_t bins = hist.frequencies.size();
    for (std::size_t i = 0; i < bins; ++i) {
        const double frac = static_cast<double>(hist.frequencies[i]) / static_cast<double>(max_freq);
        const int bar_h = static_cast<int>(frac * plot_h);
        const int bar_w = std::max(1, static_cast<int>(plot_w / static_cast<double>(bins)) - 2);
        const int x = margin_l + static_cast<int>(i * plot_w / static_cast<double>(bins)) + 1;
        const int y = margin_t + plot_h - bar_h;
        out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w << "\" height=\""
            << bar_h << "\" fill=\"steelblue\"/>\n";
    }

    // Axes and end labels.
    out << "<line x1=\"" << margin_l << "\" y1=\"" << margin_t + plot_h << "\" x2=\""
        << margin_l + plot_w << "\" y2=\"" << margin_t + plot_h
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << margin_l << "\" y1=\"" << margin_t << "\" x2=\"" << margin_l
        << "\" y2=\"" << margin_t + plot_h << "\" stroke=\"black\"/>\n";
    if (!hist.bin_edges.empty()) {
        out << "<text x=\"" << margin_l << "\" y=\"" << height - 16
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << hist.bin_edges.front()
            << "</text>\n";
        out << "<text x=\"" << margin_l + plot_w << "\" y=\"" << height - 16
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << hist.bin_edges.back() << "</text>\n";
    }
    out << "<text x=\"14\" y=\"" << margin_t + 10
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << max_freq << "</text>\n";
    out << "<text x=\"" << margin_l + plot_w / 2 << "\" y=\"" << height - 4
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">radius</text>\n";
    out << "</svg>\n";
    if (!out) throw IoError("write failed: " + path);
}

} // namespace microchar
