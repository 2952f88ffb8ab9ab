#include "hsp/trainer/plot.hpp"

#include <algorithm>
#include <cmath>

#include "hsp/errors.hpp"

namespace hsp::trainer {

data::Image8 render_line_plot(const std::vector<PlotSeries>& series, double y_min, double y_max,
                              std::size_t width, std::size_t height) {
    if (width < 32 || height < 32) throw UsageError("plot: canvas too small");
    if (!(y_max > y_min)) throw UsageError("plot: empty y range");
    data::Image8 img;
    img.width = width;
    img.height = height;
    img.pixels.assign(width * height, 0);
    const long margin = 16;
    const long x0 = margin, x1 = static_cast<long>(width) - margin;
    const long y0 = static_cast<long>(height) - margin, y1 = margin;  // y0 is the bottom edge

    auto plot = [&](long x, long y, std::uint8_t v) {
        if (x >= 0 && y >= 0 && x < static_cast<long>(width) && y < static_cast<long>(height)) {
            img.pixels[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] = v;
        }
    };
    for (long x = x0; x <= x1; ++x) plot(x, y0, 96);
    for (long y = y1; y <= y0; ++y) plot(x0, y, 96);

    for (const auto& s : series) {
        const std::size_t n = s.y.size();
        if (n == 0) continue;
        auto px = [&](std::size_t i) {
            return n == 1 ? (x0 + x1) / 2 : x0 + static_cast<long>(std::lround((x1 - x0) * double(i) / double(n - 1)));
        };
        auto py = [&](double v) {
            const double t = std::clamp((v - y_min) / (y_max - y_min), 0.0, 1.0);
            return y0 - static_cast<long>(std::lround((y0 - y1) * t));
        };
        for (std::size_t i = 0; i < n; ++i) {
            const long cx = px(i), cy = py(s.y[i]);
            for (long dy = -2; dy <= 2; ++dy) {
                for (long dx = -2; dx <= 2; ++dx) plot(cx + dx, cy + dy, s.shade);
            }
            if (i + 1 == n) break;
            const long nx = px(i + 1), ny = py(s.y[i + 1]);
            const long steps = std::max(std::abs(nx - cx), std::abs(ny - cy));
            for (long k = 0; k <= steps; ++k) {
                const double t = steps ? double(k) / double(steps) : 0.0;
                plot(cx + std::lround(t * (nx - cx)), cy + std::lround(t * (ny - cy)), s.shade);
            }
        }
    }
    return img;
}

}  // namespace hsp::trainer
