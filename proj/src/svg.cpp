#include "mapfuse/svg.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace mapfuse {

void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::pair<std::string, double>>& bars) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("svg: cannot open for writing: " + path);

  const int width = 640, height = 400;
  const int margin_l = 60, margin_b = 60, margin_t = 50, margin_r = 20;
  const int plot_w = width - margin_l - margin_r;
  const int plot_h = height - margin_t - margin_b;
  double vmax = 1e-9;
  for (const auto& [_, v] : bars) vmax = std::max(vmax, v);

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\" "
        "font-family=\"sans-serif\">"
     << title << "</text>\n";
  os << "<line x1=\"" << margin_l << "\" y1=\"" << margin_t + plot_h << "\" x2=\""
     << margin_l + plot_w << "\" y2=\"" << margin_t + plot_h << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << margin_l << "\" y1=\"" << margin_t << "\" x2=\"" << margin_l << "\" y2=\""
     << margin_t + plot_h << "\" stroke=\"black\"/>\n";

  const size_t n = bars.size();
  if (n > 0) {
    const double slot = static_cast<double>(plot_w) / static_cast<double>(n);
    const double bw = slot * 0.6;
    for (size_t i = 0; i < n; ++i) {
      const double h = plot_h * bars[i].second / vmax;
      const double x = margin_l + slot * (static_cast<double>(i) + 0.2);
      const double y = margin_t + plot_h - h;
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bw << "\" height=\"" << h
         << "\" fill=\"#4878cf\"/>\n";
      os << "<text x=\"" << x + bw / 2 << "\" y=\"" << y - 6
         << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">"
         << std::fixed << std::setprecision(3) << bars[i].second << "</text>\n";
      os << "<text x=\"" << x + bw / 2 << "\" y=\"" << margin_t + plot_h + 18
         << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">"
         << bars[i].first << "</text>\n";
    }
  }
  os << "</svg>\n";
}

}  // namespace mapfuse
