#include "cursive/stroke.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cursive {

std::vector<CartesianOffset> coords_to_offsets(std::span<const StrokePoint> seq) {
  if (seq.empty()) throw std::invalid_argument("coords_to_offsets: degenerate (empty) stroke sequence");
  std::vector<CartesianOffset> out;
  out.reserve(seq.size());
  double px = 0.0;
  double py = 0.0;
  for (const auto& pt : seq) {
    out.push_back({pt.x - px, pt.y - py, pt.pen});
    px = pt.x;
    py = pt.y;
  }
  return out;
}

StrokeSequence offsets_to_coords(std::span<const CartesianOffset> offsets) {
  StrokeSequence out;
  out.reserve(offsets.size());
  double x = 0.0;
  double y = 0.0;
  for (const auto& o : offsets) {
    x += o.dx;
    y += o.dy;
    out.push_back({x, y, o.pen});
  }
  return out;
}

PolarOffset cartesian_to_polar(const CartesianOffset& o) noexcept {
  const double r = std::hypot(o.dx, o.dy);
  if (r == 0.0) return {0.0, 0.0, o.pen};
  double theta = std::atan2(o.dy, o.dx);
  // atan2 covers [-pi, pi]; fold the closed upper end onto -pi.
  if (theta >= std::numbers::pi) theta = -std::numbers::pi;
  return {theta, r, o.pen};
}

CartesianOffset polar_to_cartesian(const PolarOffset& po) noexcept {
  if (po.r == 0.0) return {0.0, 0.0, po.pen};
  return {po.r * std::cos(po.theta), po.r * std::sin(po.theta), po.pen};
}

std::vector<PolarOffset> to_polar(std::span<const CartesianOffset> offsets) {
  std::vector<PolarOffset> out;
  out.reserve(offsets.size());
  for (const auto& o : offsets) out.push_back(cartesian_to_polar(o));
  return out;
}

std::vector<CartesianOffset> to_cartesian(std::span<const PolarOffset> offsets) {
  std::vector<CartesianOffset> out;
  out.reserve(offsets.size());
  for (const auto& o : offsets) out.push_back(polar_to_cartesian(o));
  return out;
}

AffineParams compose(const AffineParams& first, const AffineParams& second) {
  // second(first(p)): x'' = s2x * s1x * (x + (h1 + h2 * s1y / s1x) * y)
  return {first.shear_x + second.shear_x * first.scale_y / first.scale_x,
          first.scale_x * second.scale_x, first.scale_y * second.scale_y};
}

StrokeSequence apply_affine(std::span<const StrokePoint> seq, const AffineParams& params) {
  if (!(params.scale_x > 0.0) || !(params.scale_y > 0.0)) {
    throw std::invalid_argument("apply_affine: scales must be positive");
  }
  StrokeSequence out(seq.begin(), seq.end());
  if (params.shear_x == 0.0 && params.scale_x == 1.0 && params.scale_y == 1.0) return out;
  for (auto& pt : out) {
    pt.x = params.scale_x * (pt.x + params.shear_x * pt.y);
    pt.y = params.scale_y * pt.y;
  }
  return out;
}

std::vector<PenRun> pen_runs(std::span<const StrokePoint> seq) {
  std::vector<PenRun> runs;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i == 0 || !seq[i].pen) {
      runs.push_back({i, i});
    } else {
      runs.back().last = i;
    }
  }
  return runs;
}

std::size_t count_drawn_runs(std::span<const StrokePoint> seq) {
  const auto runs = pen_runs(seq);
  return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const PenRun& r) { return r.drawn(); }));
}

BoundingBox bounding_box(std::span<const StrokePoint> seq) {
  if (seq.empty()) return {};
  BoundingBox box{seq[0].x, seq[0].y, seq[0].x, seq[0].y};
  for (const auto& pt : seq) {
    box.min_x = std::min(box.min_x, pt.x);
    box.max_x = std::max(box.max_x, pt.x);
    box.min_y = std::min(box.min_y, pt.y);
    box.max_y = std::max(box.max_y, pt.y);
  }
  return box;
}

}  // namespace cursive
