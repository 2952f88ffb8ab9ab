#pragma once

#include <iosfwd>

#include "hsp/numerics/tensor.hpp"

namespace hsp::num {

// Binary tensor record, little-endian:
//   "HSPT" | u8 dtype code (0 = float32, 1 = float64) | u32 rank |
//   rank x u64 extents | raw element buffer
void write_tensor(std::ostream& out, const Tensor& tensor);

// Throws IoError on truncated or malformed input.
Tensor read_tensor(std::istream& in);

}  // namespace hsp::num
