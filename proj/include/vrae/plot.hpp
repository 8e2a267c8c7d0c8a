#pragma once

#include <span>
#include <string>
#include <string_view>

#include "vrae/numerics.hpp"

namespace vrae::plot {

/// Fill colour for a class: normal red, zones 1..3 blue, green, black.
std::string_view class_color(int label);

/// SVG scatter plot of the first two columns, one <circle> per point, one
/// legend entry per class present and axes titled after `method`.
/// Throws InvalidArgument when empty, misaligned or non-finite.
std::string scatter_svg(const Matrix& points, std::span<const int> labels, std::string_view method);

}  // namespace vrae::plot
