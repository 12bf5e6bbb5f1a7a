#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slowwave/core/array.hpp"
#include "slowwave/flow/flow.hpp"

namespace slowwave::io {

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit RGB raster, row-major, origin top-left.
class Canvas {
 public:
  Canvas(int width, int height, Rgb fill = {255, 255, 255});

  int width() const { return w_; }
  int height() const { return h_; }
  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);  // silently clips
  void fill_rect(int x, int y, int w, int h, Rgb c);
  void line(double x0, double y0, double x1, double y1, Rgb c);
  void arrow(double x0, double y0, double x1, double y1, Rgb c);
  /// Paste `other` with its top-left corner at (x, y).
  void blit(const Canvas& other, int x, int y);
  const std::vector<std::uint8_t>& pixels() const { return px_; }

 private:
  int w_;
  int h_;
  std::vector<std::uint8_t> px_;
};

void write_png(const std::filesystem::path& path, const Canvas& canvas);

/// Blue-white-red for signed data, symmetric about zero.
Rgb diverging(double t);  // t in [-1, 1]
/// Dark-to-bright sequential map.
Rgb sequential(double t);  // t in [0, 1]

/// Each pixel becomes a scale x scale block; off-mask pixels are grey. Signed data uses the
/// diverging map scaled by max |value|, otherwise the sequential map over [min, max].
Canvas heatmap(const Image& img, const Mask* mask, bool signed_map, int scale = 4);

/// Arrows every `step` pixels on top of `base` (which must be rows*scale x cols*scale).
void quiver(Canvas& base, const flow::FlowField& f, int scale, int step = 4, Rgb color = {0, 0, 0});

/// Polylines sharing axes. Empty series are skipped.
Canvas line_plot(const std::vector<Series>& series, const std::vector<Rgb>& colors, int width = 320, int height = 160);

/// Points coloured by integer group.
Canvas scatter(const std::vector<std::array<double, 2>>& points, const std::vector<int>& groups, int size = 320);

Rgb palette(int i);

}  // namespace slowwave::io
