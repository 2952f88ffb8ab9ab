#include "hsp/numerics/interp.hpp"

#include <algorithm>
#include <cmath>

namespace hsp::num {

std::vector<AxisSample> bilinear_axis(std::size_t in, std::size_t out) {
    std::vector<AxisSample> taps(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        src = std::max(src, 0.0);
        auto lo = static_cast<std::size_t>(std::floor(src));
        lo = std::min(lo, in - 1);
        const std::size_t hi = std::min(lo + 1, in - 1);
        taps[o] = {lo, hi, src - static_cast<double>(lo)};
        if (hi == lo) taps[o].w = 0.0;
    }
    return taps;
}

std::vector<double> resize_bilinear(std::span<const double> plane, std::size_t h, std::size_t w,
                                    std::size_t out_h, std::size_t out_w) {
    const auto ys = bilinear_axis(h, out_h);
    const auto xs = bilinear_axis(w, out_w);
    std::vector<double> out(out_h * out_w);
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        const AxisSample& ty = ys[oy];
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            const AxisSample& tx = xs[ox];
            const double top = (1.0 - tx.w) * plane[ty.lo * w + tx.lo] + tx.w * plane[ty.lo * w + tx.hi];
            const double bot = (1.0 - tx.w) * plane[ty.hi * w + tx.lo] + tx.w * plane[ty.hi * w + tx.hi];
            out[oy * out_w + ox] = (1.0 - ty.w) * top + ty.w * bot;
        }
    }
    return out;
}

}  // namespace hsp::num
