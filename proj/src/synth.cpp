#include "cursive/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cursive/error.hpp"
#include "cursive/rng.hpp"

namespace cursive {
namespace detail {
extern const char kBuiltinGlyphJson[];
}

namespace {

double distance(const Point2& a, const Point2& b) { return std::hypot(b.x - a.x, b.y - a.y); }

/// Evenly spaced points along a polyline, endpoints included.
std::vector<Point2> resample(const std::vector<Point2>& line, double spacing, int min_points) {
  std::vector<double> cumulative(line.size(), 0.0);
  for (std::size_t i = 1; i < line.size(); ++i) cumulative[i] = cumulative[i - 1] + distance(line[i - 1], line[i]);
  const double total = cumulative.back();
  const auto n = static_cast<std::size_t>(
      std::max<double>(min_points, std::ceil(total / spacing) + 1.0));
  std::vector<Point2> out;
  out.reserve(n);
  std::size_t seg = 1;
  for (std::size_t k = 0; k < n; ++k) {
    const double s = total * static_cast<double>(k) / static_cast<double>(n - 1);
    while (seg + 1 < line.size() && cumulative[seg] < s) ++seg;
    const double len = cumulative[seg] - cumulative[seg - 1];
    const double t = len > 0.0 ? std::clamp((s - cumulative[seg - 1]) / len, 0.0, 1.0) : 0.0;
    out.push_back({line[seg - 1].x + t * (line[seg].x - line[seg - 1].x),
                   line[seg - 1].y + t * (line[seg].y - line[seg - 1].y)});
  }
  return out;
}

}  // namespace

double GlyphTemplate::min_x() const {
  double v = strokes.front().front().x;
  for (const auto& s : strokes)
    for (const auto& p : s) v = std::min(v, p.x);
  return v;
}

double GlyphTemplate::max_x() const {
  double v = strokes.front().front().x;
  for (const auto& s : strokes)
    for (const auto& p : s) v = std::max(v, p.x);
  return v;
}

bool GlyphTemplate::connects() const { return std::islower(static_cast<unsigned char>(character)) != 0; }

std::vector<CartesianOffset> GlyphTemplate::polyline() const {
  StrokeSequence pts;
  for (const auto& stroke : strokes) {
    for (std::size_t i = 0; i < stroke.size(); ++i) pts.push_back({stroke[i].x, stroke[i].y, i > 0});
  }
  return coords_to_offsets(pts);
}

GlyphSet GlyphSet::from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "cursive-glyphs") {
    throw SchemaError("$", "not a cursive glyph template file");
  }
  GlyphSet set;
  set.version_ = j.value("version", 0);
  if (set.version_ != 1) throw SchemaError("$.version", "unsupported glyph file version");
  const auto glyphs = j.find("glyphs");
  if (glyphs == j.end() || !glyphs->is_object()) throw SchemaError("$.glyphs", "expected an object");
  for (const auto& [key, strokes] : glyphs->items()) {
    const std::string path = "$.glyphs[\"" + key + "\"]";
    if (key.size() != 1) throw SchemaError(path, "glyph keys must be single characters");
    if (!strokes.is_array() || strokes.empty()) throw SchemaError(path, "expected a non-empty list of strokes");
    GlyphTemplate g;
    g.character = key[0];
    for (std::size_t s = 0; s < strokes.size(); ++s) {
      const auto& stroke = strokes[s];
      if (!stroke.is_array() || stroke.size() < 2) {
        throw SchemaError(path + "[" + std::to_string(s) + "]", "strokes need at least two points");
      }
      std::vector<Point2> line;
      for (const auto& p : stroke) {
        if (!p.is_array() || p.size() != 2) throw SchemaError(path + "[" + std::to_string(s) + "]", "expected [x, y]");
        line.push_back({p[0].get<double>(), p[1].get<double>()});
      }
      g.strokes.push_back(std::move(line));
    }
    set.glyphs_.emplace(g.character, std::move(g));
  }
  return set;
}

GlyphSet GlyphSet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("cannot open glyph file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(nlohmann::json::parse(buf.str()));
}

const GlyphSet& GlyphSet::builtin() {
  static const GlyphSet set = from_json(nlohmann::json::parse(detail::kBuiltinGlyphJson));
  return set;
}

const GlyphTemplate& GlyphSet::at(char c) const {
  const auto it = glyphs_.find(c);
  if (it == glyphs_.end()) throw std::invalid_argument(std::string("no glyph template for '") + c + "'");
  return it->second;
}

void SynthConfig::validate() const {
  if (!(spacing > 0.0)) throw std::invalid_argument("synth: spacing must be positive");
  if (min_points < 2) throw std::invalid_argument("synth: min_points must be >= 2");
  if (!(jitter >= 0.0)) throw std::invalid_argument("synth: jitter must be non-negative");
  if (!(letter_gap >= 0.0)) throw std::invalid_argument("synth: letter_gap must be non-negative");
}

nlohmann::json SynthConfig::to_json() const {
  return {{"spacing", spacing}, {"min_points", min_points}, {"jitter", jitter}, {"letter_gap", letter_gap}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) { return from_json(j, SynthConfig{}); }

SynthConfig SynthConfig::from_json(const nlohmann::json& j, const SynthConfig& base) {
  SynthConfig cfg = base;
  cfg.spacing = j.value("spacing", cfg.spacing);
  cfg.min_points = j.value("min_points", cfg.min_points);
  cfg.jitter = j.value("jitter", cfg.jitter);
  cfg.letter_gap = j.value("letter_gap", cfg.letter_gap);
  cfg.validate();
  return cfg;
}

SampleRecord render_word(std::string_view word, const GlyphSet& glyphs, const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::string missing;
  for (char c : word) {
    if (!glyphs.contains(c) && missing.find(c) == std::string::npos) missing.push_back(c);
  }
  if (!missing.empty()) throw std::invalid_argument("render_word: no template for characters \"" + missing + "\"");
  if (word.empty()) throw std::invalid_argument("render_word: empty word");

  Rng rng(seed);
  StrokeSequence pts;
  auto emit = [&](const Point2& p, bool pen) {
    const double jx = cfg.jitter > 0.0 ? cfg.jitter * rng.normal() : 0.0;
    const double jy = cfg.jitter > 0.0 ? cfg.jitter * rng.normal() : 0.0;
    pts.push_back({p.x + jx, p.y + jy, pen});
  };

  double cursor = 0.0;
  const GlyphTemplate* prev = nullptr;
  Point2 prev_exit{};
  bool pen_at_exit = false;
  for (char c : word) {
    const GlyphTemplate& g = glyphs.at(c);
    const double shift = cursor - g.min_x();
    auto place = [shift](const std::vector<Point2>& line) {
      std::vector<Point2> out(line);
      for (auto& p : out) p.x += shift;
      return out;
    };
    const auto body = resample(place(g.strokes.front()), cfg.spacing, cfg.min_points);

    if (prev != nullptr && prev->connects() && g.connects()) {
      if (!pen_at_exit) emit(prev_exit, false);
      // Pen-down link from the previous exit to this entry.
      const double gap = distance(prev_exit, body.front());
      const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(gap / cfg.spacing)));
      for (std::size_t k = 1; k < steps; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(steps);
        emit({prev_exit.x + t * (body.front().x - prev_exit.x), prev_exit.y + t * (body.front().y - prev_exit.y)}, true);
      }
      emit(body.front(), true);
    } else {
      emit(body.front(), false);
    }
    for (std::size_t k = 1; k < body.size(); ++k) emit(body[k], true);
    prev_exit = body.back();
    pen_at_exit = true;

    for (std::size_t s = 1; s < g.strokes.size(); ++s) {
      const auto mark = resample(place(g.strokes[s]), cfg.spacing, cfg.min_points);
      emit(mark.front(), false);
      for (std::size_t k = 1; k < mark.size(); ++k) emit(mark[k], true);
      pen_at_exit = false;
    }
    cursor = shift + g.max_x() + cfg.letter_gap;
    prev = &g;
  }

  SampleRecord rec;
  rec.word = std::string(word);
  rec.points = std::move(pts);
  rec.metadata = {{"coords", "canonical"}, {"source", "synthetic"}, {"seed", seed}, {"glyph_version", glyphs.version()}};
  return rec;
}

std::vector<SampleRecord> render_words(const std::vector<std::string>& words, const GlyphSet& glyphs,
                                       const SynthConfig& cfg, std::uint64_t seed) {
  std::vector<SampleRecord> out;
  out.reserve(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    out.push_back(render_word(words[i], glyphs, cfg, Rng::substream(seed, i).next()));
  }
  return out;
}

}  // namespace cursive
