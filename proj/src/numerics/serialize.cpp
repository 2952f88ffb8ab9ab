#include "hsp/numerics/serialize.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "hsp/errors.hpp"

namespace hsp::num {

namespace {

constexpr std::array<char, 4> kMagic{'H', 'S', 'P', 'T'};
constexpr std::uint32_t kMaxRank = 16;

template <class T>
void put_le(std::ostream& out, T value) {
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    out.write(bytes.data(), bytes.size());
}

template <class T>
T get_le(std::istream& in) {
    std::array<char, sizeof(T)> bytes;
    if (!in.read(bytes.data(), bytes.size())) {
        throw IoError("tensor record truncated");
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& tensor) {
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.dtype()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) {
        put_le<std::uint64_t>(out, d);
    }
    dispatch(tensor.dtype(), [&](auto tag) {
        using T = decltype(tag);
        for (T v : tensor.data<T>()) put_le<T>(out, v);
    });
    if (!out) throw IoError("failed writing tensor record");
}

Tensor read_tensor(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw IoError("bad tensor record magic");
    }
    const auto code = get_le<std::uint8_t>(in);
    if (code > 1) throw IoError("unknown tensor dtype code " + std::to_string(code));
    const auto dtype = static_cast<DType>(code);
    const auto rank = get_le<std::uint32_t>(in);
    if (rank == 0 || rank > kMaxRank) throw IoError("invalid tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) {
        const auto extent = get_le<std::uint64_t>(in);
        if (extent == 0 || extent > (std::uint64_t{1} << 32)) {
            throw IoError("invalid tensor extent " + std::to_string(extent));
        }
        d = static_cast<std::size_t>(extent);
    }
    Tensor t = Tensor::zeros(shape, dtype);
    dispatch(dtype, [&](auto tag) {
        using T = decltype(tag);
        for (T& v : t.mutable_data<T>()) v = get_le<T>(in);
    });
    return t;
}

}  // namespace hsp::num
