#include "dreambox/error.hpp"
#include "dreambox/pipeline.hpp"

#include <cstdio>

namespace dreambox {

std::string sigma_plot_svg(const std::vector<double>& sigmas, const std::vector<MetricsReport>& reports)
{
  if (sigmas.size() != reports.size() || sigmas.empty())
    throw EvaluationError("sigma plot needs one report per sigma value", "bad_report");
  // Sigma values sit at evenly spaced ticks; the sweep is usually log-like.
  const double W = 520, H = 340, left = 60, right = 130, top = 30, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  const auto n = sigmas.size();
  auto px = [&](std::size_t i) { return n == 1 ? left + pw / 2 : left + pw * double(i) / double(n - 1); };
  auto py = [&](double pct) { return top + ph * (1.0 - pct / 100.0); };

  std::string svg;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                "font-size=\"12\">\n<rect width=\"100%%\" height=\"100%%\" fill=\"white\"/>\n",
                W, H);
  svg += buf;
  for (int pct = 0; pct <= 100; pct += 20) {
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%d</text>\n",
                  left, py(pct), left + pw, py(pct), left - 6, py(pct) + 4, pct);
    svg += buf;
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%g</text>\n", px(i),
                  top + ph + 18, sigmas[i]);
    svg += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">sigma</text>\n"
                "<text x=\"16\" y=\"%.1f\" transform=\"rotate(-90 16 %.1f)\" text-anchor=\"middle\">%%</text>\n",
                left + pw / 2, H - 10, top + ph / 2, top + ph / 2);
  svg += buf;

  struct Series
  {
    const char* name;
    const char* color;
    double MetricsReport::*field;
  };
  const Series series[] = {{"AUROC", "#1f77b4", &MetricsReport::auroc}, {"FPR95", "#d62728", &MetricsReport::fpr95}};
  for (std::size_t s = 0; s < 2; ++s) {
    std::string points;
    for (std::size_t i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(i), py(100.0 * (reports[i].*series[s].field)));
      points += buf;
    }
    std::snprintf(buf, sizeof buf, "<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"2\" points=\"%s\"/>\n",
                  series[s].color, points.c_str());
    svg += buf;
    for (std::size_t i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\" fill=\"%s\"/>\n", px(i),
                    py(100.0 * (reports[i].*series[s].field)), series[s].color);
      svg += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"2\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\">%s (%%)</text>\n",
                  left + pw + 15, top + 10 + 20.0 * s, left + pw + 35, top + 10 + 20.0 * s, series[s].color,
                  left + pw + 40, top + 14 + 20.0 * s, series[s].name);
    svg += buf;
  }
  svg += "</svg>\n";
  return svg;
}

RgbImage outlier_grid(const std::vector<std::filesystem::path>& images, int columns)
{
  constexpr int tile = 96, gap = 4;
  if (images.empty() || columns < 1)
    throw EvaluationError("outlier grid needs at least one image", "bad_report");
  const int n = static_cast<int>(images.size());
  const int cols = std::min(columns, n), rows = (n + cols - 1) / cols;
  RgbImage grid(cols * tile + (cols + 1) * gap, rows * tile + (rows + 1) * gap, 255);
  for (int i = 0; i < n; ++i) {
    const RgbImage src = read_image(images[static_cast<std::size_t>(i)]);
    const RgbImage t = resample_region(src, 0, 0, src.width, src.height, tile, tile);
    const int ox = gap + (i % cols) * (tile + gap), oy = gap + (i / cols) * (tile + gap);
    for (int y = 0; y < tile; ++y)
      for (int x = 0; x < tile; ++x)
        std::copy_n(t.at(x, y), 3, grid.at(ox + x, oy + y));
  }
  return grid;
}

} // namespace dreambox
