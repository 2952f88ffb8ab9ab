#pragma once

#include <cstdint>
#include <vector>

namespace hsp::data {

// Integer class labels, row-major.
struct LabelMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> values;

    LabelMap() = default;
    LabelMap(std::size_t h, std::size_t w) : height(h), width(w), values(h * w, 0) {}

    std::uint8_t at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
    std::uint8_t& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
    bool operator==(const LabelMap&) const = default;
};

}  // namespace hsp::data
