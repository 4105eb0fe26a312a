#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "stereosparse/tensor.hpp"

namespace stereosparse {

// "STEN" tensor files: magic "STEN", u8 version=1, u8 ndims, ndims u32
// little-endian dims, then float32 little-endian values, row-major.

std::vector<std::uint8_t> sten_encode(const Tensor& t);
Tensor sten_decode(const std::uint8_t* bytes, std::size_t size);

/// Decode one tensor from the front of a buffer holding concatenated
/// blobs; *consumed reports its encoded length.
Tensor sten_decode_prefix(const std::uint8_t* bytes, std::size_t size, std::size_t* consumed);

void write_sten(const std::string& path, const Tensor& t);
Tensor read_sten(const std::string& path);

void sten_encode_stream(std::ostream& os, const Tensor& t);

}  // namespace stereosparse
