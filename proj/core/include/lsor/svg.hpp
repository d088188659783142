#pragma once

#include <span>
#include <string>

namespace lsor {

// Standalone SVG heatmap of a rows x cols grid (row-major values) with a
// fixed 8-stop viridis-like color ramp, normalized to the grid's own range.
void write_heatmap_svg(const std::string& path, std::size_t rows, std::size_t cols,
                       std::span<const double> values, const std::string& title);

}  // namespace lsor
