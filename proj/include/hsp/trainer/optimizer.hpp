#pragma once

#include "hsp/numerics/layers.hpp"

namespace hsp::trainer {

using num::Tensor;

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam without weight decay or schedule. Parameters lacking a gradient are
// treated as having a zero gradient.
class Adam {
public:
    Adam(num::ParamList params, AdamOptions options);

    void zero_grad();
    void step();

    std::size_t steps() const { return step_; }
    const num::ParamList& parameters() const { return params_; }
    const AdamOptions& options() const { return options_; }

    // First and second moments, named "adam.m.<param>" / "adam.v.<param>".
    num::ParamList state() const;
    // Restores moments and the step count; names and shapes must match.
    void load_state(const num::ParamList& state, std::size_t steps);

private:
    num::ParamList params_;
    AdamOptions options_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t step_ = 0;
};

}  // namespace hsp::trainer
