#pragma once

#include <cstddef>
#include <string>

#include "cursive/sampler.hpp"

namespace cursive {

struct SvgOptions {
  int line_width_chars = 40;
  /// Pixels per model unit.
  double scale = 40.0;
  double margin = 10.0;
  double stroke_width = 1.5;
  /// Distance between baselines as a multiple of the tallest word.
  double line_spacing = 1.6;
};

/// One `<g class="line">` per line and one `<path>` per pen-down run. Travel
/// moves are not drawn. Identical pages give identical bytes.
std::string render_svg(const GeneratedPage& page, const SvgOptions& options = {});

/// Pen-down runs over all words of the page, i.e. the path count of its SVG.
std::size_t drawn_run_count(const GeneratedPage& page);

}  // namespace cursive
