#include "hsp/self_prompt/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "hsp/errors.hpp"
#include "hsp/numerics/interp.hpp"

namespace hsp::prompt {

std::string Heatmap::filename() const {
    return "layer" + std::to_string(layer) + "_prompt" + std::to_string(prompt) + "_" +
           (side == PromptSide::query ? "Q" : "A") + ".pgm";
}

data::Image8 render_heatmap(std::span<const double> row, std::size_t image_size) {
    const auto grid = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(row.size()))));
    if (grid == 0 || grid * grid != row.size()) {
        throw ShapeError("heatmap: " + std::to_string(row.size()) + " weights do not form a square grid");
    }
    const auto up = num::resize_bilinear(row, grid, grid, image_size, image_size);
    const auto [lo_it, hi_it] = std::minmax_element(up.begin(), up.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    data::Image8 img;
    img.width = image_size;
    img.height = image_size;
    img.pixels.assign(image_size * image_size, 0);
    if (range <= 1e-9 * std::max(std::abs(*hi_it), std::abs(lo))) {
        return img;
    }
    for (std::size_t i = 0; i < up.size(); ++i) {
        const double v = (up[i] - lo) / range;
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
    return img;
}

std::vector<Heatmap> export_heatmaps(std::span<const num::Tensor> query_records,
                                     std::span<const num::Tensor> answer_records,
                                     std::size_t image_size) {
    if (query_records.empty() || query_records.size() != answer_records.size()) {
        throw UsageError("heatmaps: need query and answer records for every layer (" +
                         std::to_string(query_records.size()) + " vs " +
                         std::to_string(answer_records.size()) + ")");
    }
    std::vector<Heatmap> out;
    auto emit = [&](const num::Tensor& record, std::size_t layer, PromptSide side) {
        if (!record.defined() || record.rank() != 2) {
            throw UsageError("heatmaps: missing attention record for layer " + std::to_string(layer));
        }
        const std::size_t cols = record.dim(1);
        const auto values = record.to_vector();
        for (std::size_t i = 0; i < record.dim(0); ++i) {
            Heatmap h;
            h.layer = layer;
            h.prompt = i + 1;
            h.side = side;
            h.image = render_heatmap(std::span(values).subspan(i * cols, cols), image_size);
            out.push_back(std::move(h));
        }
    };
    for (std::size_t j = 0; j < query_records.size(); ++j) {
        emit(query_records[j], j + 1, PromptSide::query);
        emit(answer_records[j], j + 1, PromptSide::answer);
    }
    return out;
}

void write_heatmaps(const std::filesystem::path& dir, const std::vector<Heatmap>& maps) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (const Heatmap& h : maps) {
        data::write_pnm(dir / h.filename(), h.image);
    }
}

}  // namespace hsp::prompt
