#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cursive/model/transformer.hpp"
#include "cursive/sampler.hpp"

namespace cursive {

/// Model inputs that reproduce a page: END followed by the warmup and the
/// page tokens without the final one, and the ASCII ids of the full text.
std::pair<TokenStream, std::vector<int>> page_inputs(const GeneratedPage& page);

/// Post-softmax attention weights of one forward pass.
AttentionMaps extract_attention(const Transformer<float>& model, std::span<const TokenId> stroke_ids,
                                std::span<const int> ascii_ids);

/// Pixel placement of the cells inside a heatmap image.
struct HeatmapGeometry {
  int origin_x = 0;
  int origin_y = 0;
  int cell_w = 1;
  int cell_h = 1;
  int rows = 0;
  int cols = 0;
};

struct Heatmap {
  std::vector<unsigned char> png;
  HeatmapGeometry geometry;
};

/// Grayscale PNG of a row-major `rows x cols` weight matrix (brighter is
/// larger), with stroke indices down the side and `col_labels` (or column
/// indices when empty) along the top.
Heatmap render_heatmap(std::span<const double> values, int rows, int cols, const std::vector<std::string>& col_labels,
                       const std::string& title);

/// Writes `self_l{l}_h{h}.png` and `cross_l{l}_h{h}.png` for every layer and
/// head into `out_dir` (created if needed) and returns the paths. `ascii_text`
/// labels the cross-attention columns. Throws ArtifactError when the
/// directory cannot be written.
std::vector<std::string> plot_attention(const AttentionMaps& maps, const std::string& ascii_text,
                                        const std::string& out_dir);

}  // namespace cursive
