#include "hsp/numerics/random.hpp"

namespace hsp::num {

std::uint64_t mix_seed(std::uint64_t seed, std::string_view stream) {
    // FNV-1a over the stream name, then splitmix64 finalization.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : stream) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    std::uint64_t z = seed ^ h;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Rng Rng::fork(std::string_view stream) const {
    std::mt19937_64 copy = engine_;
    return Rng(mix_seed(copy(), stream));
}

double Rng::normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
}

double Rng::uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

Tensor randn(Shape shape, DType dtype, Rng& rng, double stddev) {
    Tensor t = Tensor::zeros(std::move(shape), dtype);
    for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal(0.0, stddev));
    return t;
}

Tensor rand_uniform(Shape shape, DType dtype, Rng& rng, double lo, double hi) {
    Tensor t = Tensor::zeros(std::move(shape), dtype);
    for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
    return t;
}

}  // namespace hsp::num
