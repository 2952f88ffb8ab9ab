#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace hsp::data {

// 8-bit raster, row-major, channels interleaved.
struct Image8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 1;
    std::vector<std::uint8_t> pixels;
};

// Binary PGM (P5, one channel) or PPM (P6, three channels) with maxval <= 255.
// Throws IoError when the file cannot be opened, DatasetError when it does not decode.
Image8 read_pnm(const std::filesystem::path& path);
Image8 decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& origin);

// Writes P5 for one channel, P6 for three.
void write_pnm(const std::filesystem::path& path, const Image8& image);
std::vector<std::uint8_t> encode_pnm(const Image8& image);

}  // namespace hsp::data
