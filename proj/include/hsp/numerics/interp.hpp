#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hsp::num {

// Source taps for one output coordinate of a bilinear resize with
// align_corners = false: value = (1 - w) * in[lo] + w * in[hi].
struct AxisSample {
    std::size_t lo;
    std::size_t hi;
    double w;
};

std::vector<AxisSample> bilinear_axis(std::size_t in, std::size_t out);

// Resizes one row-major (h,w) plane. Not recorded on any tape.
std::vector<double> resize_bilinear(std::span<const double> plane, std::size_t h, std::size_t w,
                                    std::size_t out_h, std::size_t out_w);

}  // namespace hsp::num
