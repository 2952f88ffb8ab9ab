#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "hsp/numerics/tensor.hpp"

namespace hsp::num {

// Seeded generator. Independent streams are derived by name so that adding a
// parameter to one component never shifts the draws of another.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    Rng fork(std::string_view stream) const;

    double normal(double mean, double stddev);
    double uniform(double lo, double hi);
    std::uint64_t next() { return engine_(); }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view stream);

Tensor randn(Shape shape, DType dtype, Rng& rng, double stddev);
Tensor rand_uniform(Shape shape, DType dtype, Rng& rng, double lo, double hi);

}  // namespace hsp::num
