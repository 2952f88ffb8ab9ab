#include "hsp/loss_metrics/loss.hpp"

#include <algorithm>
#include <string>

#include "hsp/errors.hpp"
#include "hsp/numerics/ops.hpp"

namespace hsp::loss {

namespace {

void check_labels(const Tensor& logits, const data::LabelMap& labels, const char* op) {
    if (logits.rank() != 3 || logits.dim(1) != labels.height || logits.dim(2) != labels.width) {
        throw ShapeError(std::string(op) + ": logits " + num::shape_str(logits.shape()) +
                         " do not match labels (" + std::to_string(labels.height) + "," +
                         std::to_string(labels.width) + ")");
    }
}

}  // namespace

void LossWeights::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("loss: alpha must lie in [0,1], got " + std::to_string(alpha));
    }
    if (!(smooth > 0.0)) throw ConfigError("loss: smooth must be positive");
}

Tensor one_hot(const data::LabelMap& labels, std::size_t num_classes, num::DType dtype) {
    const std::size_t hw = labels.height * labels.width;
    std::vector<double> values(num_classes * hw, 0.0);
    for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t k = labels.values[i];
        if (k >= num_classes) {
            throw DatasetError("label " + std::to_string(k) + " out of range for " +
                               std::to_string(num_classes) + " classes");
        }
        values[k * hw + i] = 1.0;
    }
    return Tensor::from_values({num_classes, labels.height, labels.width}, values, dtype);
}

Tensor dice_loss(const Tensor& probs, const Tensor& target_onehot, double smooth) {
    if (probs.shape() != target_onehot.shape() || probs.rank() != 3 || probs.dim(0) < 2) {
        throw ShapeError("dice_loss: probs " + num::shape_str(probs.shape()) + " vs target " +
                         num::shape_str(target_onehot.shape()));
    }
    const std::size_t c = probs.dim(0);
    const std::size_t hw = probs.dim(1) * probs.dim(2);
    const Tensor p = num::reshape(num::slice(probs, 0, 1, c), {c - 1, hw});
    const Tensor t = num::reshape(num::slice(target_onehot, 0, 1, c), {c - 1, hw});
    const Tensor s = Tensor::scalar(smooth, probs.dtype());
    const Tensor numer = num::add(num::scale(num::sum(num::mul(p, t), 1), 2.0), s);
    const Tensor denom = num::add(num::add(num::sum(p, 1), num::sum(t, 1)), s);
    // numer / denom, denom > 0.
    const Tensor ratio = num::mul(numer, num::exp(num::scale(num::log(denom), -1.0)));
    return num::sub(Tensor::scalar(1.0, probs.dtype()), num::mean(ratio));
}

Tensor ce_loss(const Tensor& logits, const data::LabelMap& labels) {
    check_labels(logits, labels, "ce_loss");
    const std::size_t c = logits.dim(0);
    const std::size_t hw = labels.height * labels.width;
    const auto values = logits.to_vector();
    std::vector<double> shift(hw);
    for (std::size_t i = 0; i < hw; ++i) {
        double m = values[i];
        for (std::size_t k = 1; k < c; ++k) m = std::max(m, values[k * hw + i]);
        shift[i] = m;
    }
    const Tensor z = num::sub(logits, Tensor::from_values({1, labels.height, labels.width}, shift,
                                                          logits.dtype()));
    const Tensor lse = num::log(num::sum(num::exp(z), 0));
    const Tensor picked = num::sum(num::mul(z, one_hot(labels, c, logits.dtype())), 0);
    return num::mean(num::sub(lse, picked));
}

Tensor composite_loss(const Tensor& logits, const data::LabelMap& labels,
                      const LossWeights& weights) {
    weights.validate();
    check_labels(logits, labels, "composite_loss");
    const std::size_t c = logits.dim(0);
    const Tensor dice = dice_loss(num::softmax(logits, 0), one_hot(labels, c, logits.dtype()),
                                  weights.smooth);
    const Tensor ce = ce_loss(logits, labels);
    return num::add(num::scale(dice, weights.alpha), num::scale(ce, 1.0 - weights.alpha));
}

}  // namespace hsp::loss
