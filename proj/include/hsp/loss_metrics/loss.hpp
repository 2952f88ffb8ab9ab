#pragma once

#include "hsp/data/label_map.hpp"
#include "hsp/numerics/tensor.hpp"

namespace hsp::loss {

using num::Tensor;

struct LossWeights {
    double alpha = 0.8;   // weight of the Dice term
    double smooth = 1.0;  // Dice smoothing

    void validate() const;
};

// (num_classes, H, W) one-hot encoding of a label map. Throws DatasetError on
// labels >= num_classes.
Tensor one_hot(const data::LabelMap& labels, std::size_t num_classes, num::DType dtype);

// 1 - mean over foreground channels (1..C-1) of (2 sum(p t) + s) / (sum p + sum t + s).
Tensor dice_loss(const Tensor& probs, const Tensor& target_onehot, double smooth);

// Mean over pixels of -log softmax(logits)[label], via max-shifted log-sum-exp.
Tensor ce_loss(const Tensor& logits, const data::LabelMap& labels);

// alpha * dice_loss(softmax(logits)) + (1 - alpha) * ce_loss(logits).
Tensor composite_loss(const Tensor& logits, const data::LabelMap& labels, const LossWeights& weights);

}  // namespace hsp::loss
