#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cursive/record.hpp"
#include "cursive/stroke.hpp"

namespace cursive {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Skeleton of one character in glyph units (baseline at y = 0, capitals one
/// unit tall). The first stroke is the body; its first and last points are
/// the entry and exit anchors. Later strokes are marks (dots, crosses, extra
/// bars) written right after the body.
struct GlyphTemplate {
  char character = '\0';
  std::vector<std::vector<Point2>> strokes;

  Point2 entry() const { return strokes.front().front(); }
  Point2 exit() const { return strokes.front().back(); }
  double min_x() const;
  double max_x() const;
  /// Lowercase letters join their neighbours with a pen-down link.
  bool connects() const;

  /// The whole glyph as pen offsets: body, then a pen-up move to each mark.
  std::vector<CartesianOffset> polyline() const;
};

class GlyphSet {
 public:
  static GlyphSet from_json(const nlohmann::json& j);
  static GlyphSet load(const std::string& path);
  /// Templates shipped with the library.
  static const GlyphSet& builtin();

  int version() const noexcept { return version_; }
  bool contains(char c) const { return glyphs_.count(c) != 0; }
  const GlyphTemplate& at(char c) const;
  const std::map<char, GlyphTemplate>& glyphs() const noexcept { return glyphs_; }

 private:
  int version_ = 0;
  std::map<char, GlyphTemplate> glyphs_;
};

struct SynthConfig {
  /// Target arc-length spacing of resampled points, in glyph units.
  double spacing = 0.1;
  /// Every stroke is resampled to at least this many points.
  int min_points = 10;
  /// Standard deviation of per-point Gaussian jitter.
  double jitter = 0.01;
  /// Horizontal gap between neighbouring glyphs.
  double letter_gap = 0.08;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
  static SynthConfig from_json(const nlohmann::json& j, const SynthConfig& base);
};

/// Writes `word` with the glyph templates. Throws std::invalid_argument
/// listing any characters without a template.
SampleRecord render_word(std::string_view word, const GlyphSet& glyphs, const SynthConfig& cfg, std::uint64_t seed);

/// Renders each word with its own jitter stream derived from `seed`.
std::vector<SampleRecord> render_words(const std::vector<std::string>& words, const GlyphSet& glyphs,
                                       const SynthConfig& cfg, std::uint64_t seed);

}  // namespace cursive
