#include "slowwave/io/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "slowwave/core/error.hpp"

namespace slowwave::io {

Canvas::Canvas(int width, int height, Rgb fill) : w_(width), h_(height) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "canvas must be non-empty");
  px_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < px_.size(); i += 3) std::copy(fill.begin(), fill.end(), px_.begin() + static_cast<std::ptrdiff_t>(i));
}

Rgb Canvas::at(int x, int y) const {
  const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(w_) + static_cast<std::size_t>(x)) * 3;
  return {px_[i], px_[i + 1], px_[i + 2]};
}

void Canvas::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
  const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(w_) + static_cast<std::size_t>(x)) * 3;
  px_[i] = c[0];
  px_[i + 1] = c[1];
  px_[i + 2] = c[2];
}

void Canvas::fill_rect(int x, int y, int w, int h, Rgb c) {
  for (int yy = y; yy < y + h; ++yy)
    for (int xx = x; xx < x + w; ++xx) set(xx, yy, c);
}

void Canvas::line(double x0, double y0, double x1, double y1, Rgb c) {
  const double len = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
  const int steps = std::max(1, static_cast<int>(std::ceil(len)));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    set(static_cast<int>(std::lround(x0 + t * (x1 - x0))), static_cast<int>(std::lround(y0 + t * (y1 - y0))), c);
  }
}

void Canvas::arrow(double x0, double y0, double x1, double y1, Rgb c) {
  line(x0, y0, x1, y1, c);
  const double dx = x1 - x0;
  const double dy = y1 - y0;
  const double len = std::hypot(dx, dy);
  if (len < 1.0) return;
  const double head = std::min(3.0, 0.4 * len);
  const double ux = dx / len;
  const double uy = dy / len;
  line(x1, y1, x1 - head * (ux - 0.5 * uy), y1 - head * (uy + 0.5 * ux), c);
  line(x1, y1, x1 - head * (ux + 0.5 * uy), y1 - head * (uy - 0.5 * ux), c);
}

void Canvas::blit(const Canvas& other, int x, int y) {
  for (int yy = 0; yy < other.height(); ++yy)
    for (int xx = 0; xx < other.width(); ++xx) set(x + xx, y + yy, other.at(xx, yy));
}

void write_png(const std::filesystem::path& path, const Canvas& canvas) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw Error(ErrorCode::Io, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::Io, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, "libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(canvas.width()), static_cast<png_uint_32>(canvas.height()), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto stride = static_cast<std::size_t>(canvas.width()) * 3;
  for (int y = 0; y < canvas.height(); ++y) {
    png_write_row(png, const_cast<png_bytep>(canvas.pixels().data() + static_cast<std::size_t>(y) * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

std::uint8_t byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * v), 0L, 255L)); }

Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {byte((a[0] + t * (b[0] - a[0])) / 255.0), byte((a[1] + t * (b[1] - a[1])) / 255.0),
          byte((a[2] + t * (b[2] - a[2])) / 255.0)};
}

}  // namespace

Rgb diverging(double t) {
  t = std::clamp(t, -1.0, 1.0);
  if (!std::isfinite(t)) t = 0.0;
  constexpr Rgb blue{33, 102, 172};
  constexpr Rgb white{247, 247, 247};
  constexpr Rgb red{178, 24, 43};
  return t < 0.0 ? mix(white, blue, -t) : mix(white, red, t);
}

Rgb sequential(double t) {
  t = std::isfinite(t) ? std::clamp(t, 0.0, 1.0) : 0.0;
  // Piecewise-linear through a few viridis stops.
  static constexpr std::array<Rgb, 5> stops{{{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  const double x = t * (stops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(x), stops.size() - 2);
  return mix(stops[i], stops[i + 1], x - static_cast<double>(i));
}

Canvas heatmap(const Image& img, const Mask* mask, bool signed_map, int scale) {
  Canvas c(static_cast<int>(img.cols()) * scale, static_cast<int>(img.rows()) * scale, {128, 128, 128});
  const Mask all = Mask::Constant(img.rows(), img.cols(), true);
  const Mask& m = mask ? *mask : all;
  double lo = 0.0;
  double hi = 0.0;
  bool first = true;
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index k = 0; k < img.cols(); ++k) {
      if (!m(r, k) || !std::isfinite(img(r, k))) continue;
      lo = first ? img(r, k) : std::min(lo, img(r, k));
      hi = first ? img(r, k) : std::max(hi, img(r, k));
      first = false;
    }
  const double amp = std::max(std::abs(lo), std::abs(hi));
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index k = 0; k < img.cols(); ++k) {
      if (!m(r, k)) continue;
      Rgb col;
      if (signed_map) {
        col = diverging(amp > 0.0 ? img(r, k) / amp : 0.0);
      } else {
        col = sequential(hi > lo ? (img(r, k) - lo) / (hi - lo) : 0.0);
      }
      c.fill_rect(static_cast<int>(k) * scale, static_cast<int>(r) * scale, scale, scale, col);
    }
  return c;
}

void quiver(Canvas& base, const flow::FlowField& f, int scale, int step, Rgb color) {
  double vmax = 0.0;
  for (Eigen::Index r = 0; r < f.rows(); ++r)
    for (Eigen::Index k = 0; k < f.cols(); ++k)
      if (f.valid(r, k)) vmax = std::max(vmax, std::hypot(f.u(r, k), f.v(r, k)));
  if (!(vmax > 0.0)) return;
  // Longest arrow spans one sampling cell.
  const double gain = step * scale / vmax;
  for (Eigen::Index r = step / 2; r < f.rows(); r += step)
    for (Eigen::Index k = step / 2; k < f.cols(); k += step) {
      if (!f.valid(r, k)) continue;
      const double x0 = (static_cast<double>(k) + 0.5) * scale;
      const double y0 = (static_cast<double>(r) + 0.5) * scale;
      base.arrow(x0, y0, x0 + gain * f.v(r, k), y0 + gain * f.u(r, k), color);
    }
}

Rgb palette(int i) {
  static constexpr std::array<Rgb, 6> p{{{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40}, {148, 103, 189}, {140, 86, 75}}};
  return p[static_cast<std::size_t>(((i % 6) + 6) % 6)];
}

namespace {

void frame(Canvas& c, int pad) {
  const Rgb axis{60, 60, 60};
  c.line(pad, pad, pad, c.height() - pad, axis);
  c.line(pad, c.height() - pad, c.width() - pad, c.height() - pad, axis);
}

}  // namespace

Canvas line_plot(const std::vector<Series>& series, const std::vector<Rgb>& colors, int width, int height) {
  Canvas c(width, height);
  const int pad = 8;
  double lo = 0.0;
  double hi = 0.0;
  bool any = false;
  for (const auto& s : series)
    for (double v : s) {
      if (!std::isfinite(v)) continue;
      lo = any ? std::min(lo, v) : v;
      hi = any ? std::max(hi, v) : v;
      any = true;
    }
  frame(c, pad);
  if (!any) return c;
  if (hi == lo) {
    hi += 0.5;
    lo -= 0.5;
  }
  const double pw = width - 2.0 * pad;
  const double ph = height - 2.0 * pad;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    if (s.size() < 2) continue;
    const Rgb col = i < colors.size() ? colors[i] : palette(static_cast<int>(i));
    for (std::size_t t = 1; t < s.size(); ++t) {
      const double x0 = pad + pw * static_cast<double>(t - 1) / static_cast<double>(s.size() - 1);
      const double x1 = pad + pw * static_cast<double>(t) / static_cast<double>(s.size() - 1);
      const double y0 = pad + ph * (hi - s[t - 1]) / (hi - lo);
      const double y1 = pad + ph * (hi - s[t]) / (hi - lo);
      c.line(x0, y0, x1, y1, col);
    }
  }
  return c;
}

Canvas scatter(const std::vector<std::array<double, 2>>& points, const std::vector<int>& groups, int size) {
  Canvas c(size, size);
  const int pad = 8;
  frame(c, pad);
  if (points.empty()) return c;
  double x0 = points[0][0], x1 = x0, y0 = points[0][1], y1 = y0;
  for (const auto& p : points) {
    x0 = std::min(x0, p[0]);
    x1 = std::max(x1, p[0]);
    y0 = std::min(y0, p[1]);
    y1 = std::max(y1, p[1]);
  }
  const double span = std::max({x1 - x0, y1 - y0, 1e-12});
  const double inner = size - 4.0 * pad;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int px = static_cast<int>(std::lround(2 * pad + inner * (points[i][0] - x0) / span));
    const int py = static_cast<int>(std::lround(size - 2 * pad - inner * (points[i][1] - y0) / span));
    c.fill_rect(px - 2, py - 2, 5, 5, palette(i < groups.size() ? groups[i] : 0));
  }
  return c;
}

}  // namespace slowwave::io
