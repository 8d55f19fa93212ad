#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cursive {

/// Absolute pen position. `pen` is true when the segment ending at this point
/// is drawn; false marks an invisible travel move. +y is up.
struct StrokePoint {
  double x = 0.0;
  double y = 0.0;
  bool pen = false;

  friend bool operator==(const StrokePoint&, const StrokePoint&) = default;
};

struct CartesianOffset {
  double dx = 0.0;
  double dy = 0.0;
  bool pen = false;

  friend bool operator==(const CartesianOffset&, const CartesianOffset&) = default;
};

/// theta in [-pi, pi), r >= 0; theta is 0 whenever r is 0.
struct PolarOffset {
  double theta = 0.0;
  double r = 0.0;
  bool pen = false;

  friend bool operator==(const PolarOffset&, const PolarOffset&) = default;
};

using StrokeSequence = std::vector<StrokePoint>;

/// Offsets relative to the previous point; the first one is relative to the
/// origin so both lists have equal length. Throws on empty input.
std::vector<CartesianOffset> coords_to_offsets(std::span<const StrokePoint> seq);
StrokeSequence offsets_to_coords(std::span<const CartesianOffset> offsets);

PolarOffset cartesian_to_polar(const CartesianOffset& o) noexcept;
CartesianOffset polar_to_cartesian(const PolarOffset& po) noexcept;

std::vector<PolarOffset> to_polar(std::span<const CartesianOffset> offsets);
std::vector<CartesianOffset> to_cartesian(std::span<const PolarOffset> offsets);

/// Horizontal shear followed by axis scaling:
/// x' = scale_x * (x + shear_x * y), y' = scale_y * y.
struct AffineParams {
  double shear_x = 0.0;
  double scale_x = 1.0;
  double scale_y = 1.0;
};

/// Single transform equal to applying `first` and then `second`.
AffineParams compose(const AffineParams& first, const AffineParams& second);

StrokeSequence apply_affine(std::span<const StrokePoint> seq, const AffineParams& params);

/// A maximal group of points drawn without lifting the pen: `first` is index 0
/// or a travel point, and every point after it up to `last` is pen-down.
/// Every point belongs to exactly one run; a run with first == last draws
/// nothing.
struct PenRun {
  std::size_t first = 0;
  std::size_t last = 0;

  std::size_t size() const noexcept { return last - first + 1; }
  bool drawn() const noexcept { return last > first; }
  friend bool operator==(const PenRun&, const PenRun&) = default;
};

std::vector<PenRun> pen_runs(std::span<const StrokePoint> seq);

/// Number of runs that draw at least one segment.
std::size_t count_drawn_runs(std::span<const StrokePoint> seq);

struct BoundingBox {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  double width() const noexcept { return max_x - min_x; }
  double height() const noexcept { return max_y - min_y; }
};

BoundingBox bounding_box(std::span<const StrokePoint> seq);

}  // namespace cursive
