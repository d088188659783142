#include "lsor/svg.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace lsor {

namespace {

struct Rgb {
  double r, g, b;
};

// 8-stop viridis-like ramp, dark blue to yellow.
constexpr std::array<Rgb, 8> kRamp{{{0.267, 0.005, 0.329},
                                    {0.283, 0.141, 0.458},
                                    {0.254, 0.265, 0.530},
                                    {0.207, 0.372, 0.553},
                                    {0.164, 0.471, 0.558},
                                    {0.128, 0.567, 0.551},
                                    {0.369, 0.789, 0.383},
                                    {0.993, 0.906, 0.144}}};

Rgb ramp_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double scaled = t * (kRamp.size() - 1);
  const auto lo = static_cast<std::size_t>(scaled);
  const std::size_t hi = std::min(lo + 1, kRamp.size() - 1);
  const double frac = scaled - static_cast<double>(lo);
  return {kRamp[lo].r + frac * (kRamp[hi].r - kRamp[lo].r),
          kRamp[lo].g + frac * (kRamp[hi].g - kRamp[lo].g),
          kRamp[lo].b + frac * (kRamp[hi].b - kRamp[lo].b)};
}

}  // namespace

void write_heatmap_svg(const std::string& path, std::size_t rows, std::size_t cols,
                       std::span<const double> values, const std::string& title) {
  if (values.size() != rows * cols) throw std::invalid_argument("heatmap: value count mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open svg for writing: " + path);

  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;

  const int cell = 48, margin = 8, header = 24;
  const std::size_t width = 2 * margin + cols * cell;
  const std::size_t height = 2 * margin + header + rows * cell;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "  <text x=\"" << margin << "\" y=\"" << margin + 12
      << "\" font-family=\"sans-serif\" font-size=\"12\">" << title << "</text>\n";
  char buf[64];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = values[r * cols + c];
      const Rgb rgb = ramp_color((v - lo) / span);
      std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(rgb.r * 255.0 + 0.5),
                    static_cast<int>(rgb.g * 255.0 + 0.5), static_cast<int>(rgb.b * 255.0 + 0.5));
      out << "  <rect x=\"" << margin + c * cell << "\" y=\"" << margin + header + r * cell
          << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"" << buf << "\">"
          << "<title>(" << r << "," << c << ") " << v << "</title></rect>\n";
    }
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("failed writing svg: " + path);
}

}  // namespace lsor
