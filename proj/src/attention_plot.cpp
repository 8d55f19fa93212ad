#include "cursive/attention_plot.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cursive/ascii.hpp"
#include "cursive/error.hpp"

namespace cursive {

std::pair<TokenStream, std::vector<int>> page_inputs(const GeneratedPage& page) {
  TokenStream ids{page.tokenizer.end_id()};
  std::string text = page.text;
  if (page.warmup) {
    ids.insert(ids.end(), page.warmup->tokens.begin(), page.warmup->tokens.end());
    text = page.warmup->text + " " + text;
  }
  if (!page.tokens.empty()) ids.insert(ids.end(), page.tokens.begin(), page.tokens.end() - 1);
  return {ids, AsciiTokenizer().encode(text)};
}

AttentionMaps extract_attention(const Transformer<float>& model, std::span<const TokenId> stroke_ids,
                                std::span<const int> ascii_ids) {
  return model.attention(stroke_ids, ascii_ids);
}

namespace {

constexpr int kLeft = 44;
constexpr int kTop = 34;
constexpr int kPad = 6;
const cv::Scalar kInk(255);

void put(cv::Mat& img, const std::string& text, int x, int y, double size = 0.8) {
  cv::putText(img, text, cv::Point(x, y), cv::FONT_HERSHEY_PLAIN, size, kInk, 1, cv::LINE_8);
}

}  // namespace

Heatmap render_heatmap(std::span<const double> values, int rows, int cols, const std::vector<std::string>& col_labels,
                       const std::string& title) {
  if (rows < 0 || cols < 0 || values.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw std::invalid_argument("heatmap: " + std::to_string(values.size()) + " values for a " + std::to_string(rows) +
                                "x" + std::to_string(cols) + " map");
  }
  HeatmapGeometry g;
  g.rows = rows;
  g.cols = cols;
  g.cell_h = std::clamp(rows > 0 ? 512 / rows : 1, 1, 16);
  g.cell_w = col_labels.empty() ? g.cell_h : std::max(g.cell_h, 10);
  g.origin_x = kLeft;
  g.origin_y = kTop;
  const int width = kLeft + cols * g.cell_w + kPad;
  const int height = kTop + rows * g.cell_h + kPad;
  cv::Mat img(std::max(height, 1), std::max(width, 1), CV_8UC1, cv::Scalar(0));

  double peak = 0.0;
  for (double v : values) peak = std::max(peak, v);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double v = values[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)];
      const int level = peak > 0.0 ? static_cast<int>(std::lround(255.0 * std::clamp(v / peak, 0.0, 1.0))) : 0;
      cv::rectangle(img, cv::Rect(g.origin_x + j * g.cell_w, g.origin_y + i * g.cell_h, g.cell_w, g.cell_h),
                    cv::Scalar(level), cv::FILLED);
    }
  }

  put(img, title, 2, 12);
  if (!col_labels.empty()) {
    for (int j = 0; j < cols && j < static_cast<int>(col_labels.size()); ++j) {
      put(img, col_labels[static_cast<std::size_t>(j)], g.origin_x + j * g.cell_w + 1, kTop - 4);
    }
  } else if (cols > 0) {
    const int step = std::max(1, (cols + 7) / 8);
    for (int j = 0; j < cols; j += step) {
      put(img, std::to_string(j), g.origin_x + j * g.cell_w, kTop - 4, 0.7);
    }
  }
  if (rows > 0) {
    const int step = std::max(1, (rows + 7) / 8);
    for (int i = 0; i < rows; i += step) put(img, std::to_string(i), 2, g.origin_y + i * g.cell_h + 10, 0.7);
  }

  Heatmap out;
  out.geometry = g;
  cv::imencode(".png", img, out.png, {cv::IMWRITE_PNG_COMPRESSION, 6});
  return out;
}

std::vector<std::string> plot_attention(const AttentionMaps& maps, const std::string& ascii_text,
                                        const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw ArtifactError("cannot create directory " + out_dir);

  std::vector<std::string> labels;
  for (int s = 0; s < maps.ascii_length; ++s) {
    const char c = s < static_cast<int>(ascii_text.size()) ? ascii_text[static_cast<std::size_t>(s)] : ' ';
    labels.emplace_back(1, c == ' ' ? '_' : c);
  }
  const auto t = static_cast<std::size_t>(maps.queries);
  const auto sl = static_cast<std::size_t>(maps.ascii_length);
  std::vector<std::string> written;
  auto write = [&](const std::string& name, const Heatmap& map) {
    const std::string path = (fs::path(out_dir) / name).string();
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(map.png.data()), static_cast<std::streamsize>(map.png.size()));
    if (!f) throw ArtifactError("cannot write " + path);
    written.push_back(path);
  };
  for (int l = 0; l < maps.layers; ++l) {
    for (int h = 0; h < maps.heads_self; ++h) {
      const std::size_t off = (static_cast<std::size_t>(l) * maps.heads_self + h) * t * t;
      const std::span<const double> block(maps.self.data() + off, t * t);
      const std::string tag = "l" + std::to_string(l) + "_h" + std::to_string(h);
      write("self_" + tag + ".png", render_heatmap(block, maps.queries, maps.queries, {}, "self " + tag));
    }
    for (int h = 0; h < maps.heads_cross; ++h) {
      const std::size_t off = (static_cast<std::size_t>(l) * maps.heads_cross + h) * t * sl;
      const std::span<const double> block(maps.cross.data() + off, t * sl);
      const std::string tag = "l" + std::to_string(l) + "_h" + std::to_string(h);
      write("cross_" + tag + ".png", render_heatmap(block, maps.queries, maps.ascii_length, labels, "cross " + tag));
    }
  }
  return written;
}

}  // namespace cursive
