#include "cursive/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace cursive {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s(buf);
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
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

}  // namespace

std::size_t drawn_run_count(const GeneratedPage& page) {
  std::size_t n = 0;
  for (const auto& word : page.word_points()) n += count_drawn_runs(word);
  return n;
}

std::string render_svg(const GeneratedPage& page, const SvgOptions& options) {
  const auto points = page.word_points();
  const auto lines = line_breaks(page.words, options.line_width_chars);
  const std::size_t n = std::min(points.size(), lines.size());
  const int line_count = n > 0 ? lines[n - 1] + 1 : 0;

  double tallest = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!points[i].empty()) tallest = std::max(tallest, bounding_box(points[i]).height());
  }
  const double pitch = options.line_spacing * (tallest > 0.0 ? tallest : 1.0);

  // Each line is shifted so its leftmost point sits at x = 0 and its words
  // keep their generated spacing.
  std::vector<double> line_left(static_cast<std::size_t>(line_count), std::numeric_limits<double>::infinity());
  double top = -std::numeric_limits<double>::infinity();
  double bottom = std::numeric_limits<double>::infinity();
  double right = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto& left = line_left[static_cast<std::size_t>(lines[i])];
    for (const auto& p : points[i]) left = std::min(left, p.x);
  }
  for (auto& left : line_left) {
    if (!std::isfinite(left)) left = 0.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto l = static_cast<std::size_t>(lines[i]);
    for (const auto& p : points[i]) {
      const double y = p.y - static_cast<double>(lines[i]) * pitch;
      top = std::max(top, y);
      bottom = std::min(bottom, y);
      right = std::max(right, p.x - line_left[l]);
    }
  }
  if (!(top > bottom)) {
    top = bottom = 0.0;
  }
  const double s = options.scale;
  const double m = options.margin;
  const double width = right * s + 2.0 * m;
  const double height = (top - bottom) * s + 2.0 * m;

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + num(width) + "\" height=\"" +
         num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
  out += "<title>" + escape(page.text) + "</title>\n";
  for (int l = 0; l < line_count; ++l) {
    out += "<g class=\"line\" data-line=\"" + std::to_string(l) + "\" fill=\"none\" stroke=\"black\" stroke-width=\"" +
           num(options.stroke_width) + "\" stroke-linecap=\"round\" stroke-linejoin=\"round\">\n";
    const double left = line_left[static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < n; ++i) {
      if (lines[i] != l) continue;
      out += "<g class=\"word\" data-word=\"" + std::to_string(i) + "\">";
      const auto& seq = points[i];
      for (const auto& run : pen_runs(seq)) {
        if (!run.drawn()) continue;
        out += "<path d=\"";
        for (std::size_t k = run.first; k <= run.last; ++k) {
          const double x = (seq[k].x - left) * s + m;
          const double y = (top - (seq[k].y - static_cast<double>(l) * pitch)) * s + m;
          out += (k == run.first ? "M" : " L") + num(x) + " " + num(y);
        }
        out += "\"/>";
      }
      out += "</g>\n";
    }
    out += "</g>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace cursive
