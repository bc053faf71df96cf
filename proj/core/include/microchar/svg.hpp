#pragma once

#include <string>

#include <microchar/psilm.hpp>

namespace microchar {

/// Minimal standalone SVG bar chart for a radius histogram.
void write_histogram_svg(const std::string& path, const Histogram& hist,
                         const std::string& title);

} // namespace microchar
