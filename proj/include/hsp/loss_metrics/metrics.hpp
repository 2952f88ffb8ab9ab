#pragma once

#include <span>
#include <string>
#include <vector>

#include "hsp/data/label_map.hpp"
#include "json.hpp"

namespace hsp::loss {

struct ClassMetrics {
    std::size_t label = 0;
    double dice = 0;
    double iou = 0;
    double hd = 0;  // pixels
};

struct MetricReport {
    double dice = 0;
    double iou = 0;
    double hd = 0;
    std::vector<ClassMetrics> per_class;  // foreground classes 1..C-1
};

// Binary-mask scores. Both empty: dice = iou = 1, hd = 0. Exactly one empty:
// dice = iou = 0, hd = image diagonal.
double dice_score(const std::vector<bool>& pred, const std::vector<bool>& target);
double iou_score(const std::vector<bool>& pred, const std::vector<bool>& target);
// Symmetric Hausdorff distance between the 4-connected boundaries of the masks.
double hausdorff_distance(const std::vector<bool>& pred, const std::vector<bool>& target,
                          std::size_t height, std::size_t width);

// Per foreground class scores, averaged over classes.
MetricReport compute_metrics(const data::LabelMap& pred, const data::LabelMap& target,
                             std::size_t num_classes);

// Mean of each field over reports (per class as well).
MetricReport average(std::span<const MetricReport> reports);

// "dice=0.912345 iou=0.845123 hd=3.162278"
std::string to_key_value(const MetricReport& report);
nlohmann::json to_json(const MetricReport& report);

}  // namespace hsp::loss
