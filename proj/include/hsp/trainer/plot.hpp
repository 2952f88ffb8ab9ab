#pragma once

#include <vector>

#include "hsp/data/pnm.hpp"

namespace hsp::trainer {

struct PlotSeries {
    std::vector<double> y;
    std::uint8_t shade = 255;  // line intensity on the dark background
};

// Line chart on a black canvas: x positions are evenly spaced categories,
// y spans [y_min, y_max]. Each point gets a small square marker.
data::Image8 render_line_plot(const std::vector<PlotSeries>& series, double y_min, double y_max,
                              std::size_t width = 320, std::size_t height = 240);

}  // namespace hsp::trainer
