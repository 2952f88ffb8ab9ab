#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hsp/data/pnm.hpp"
#include "hsp/numerics/tensor.hpp"

namespace hsp::prompt {

enum class PromptSide { query, answer };

struct Heatmap {
    std::size_t layer = 0;   // 1-based hierarchy level
    std::size_t prompt = 0;  // 1-based prompt index
    PromptSide side = PromptSide::query;
    data::Image8 image;

    // layer{j}_prompt{i}_{Q|A}.pgm
    std::string filename() const;
};

// One attention row over a square token grid, bilinearly upsampled to
// image_size x image_size and min-max scaled to 0..255. A constant row maps to
// all zeros.
data::Image8 render_heatmap(std::span<const double> row, std::size_t image_size);

// Records are (c, grid*grid) per level; both spans must cover the same levels.
std::vector<Heatmap> export_heatmaps(std::span<const num::Tensor> query_records,
                                     std::span<const num::Tensor> answer_records,
                                     std::size_t image_size);

void write_heatmaps(const std::filesystem::path& dir, const std::vector<Heatmap>& maps);

}  // namespace hsp::prompt
