#include "stereosparse/sten.hpp"

#include <cstring>
#include <fstream>
#include <ostream>

namespace stereosparse {

namespace {

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

[[noreturn]] void truncated(std::size_t offset, const char* what) {
    throw ParseError("STEN: truncated while reading " + std::string(what) + " at byte offset " +
                     std::to_string(offset));
}

}  // namespace

std::vector<std::uint8_t> sten_encode(const Tensor& t) {
    std::vector<std::uint8_t> out;
    out.reserve(6 + 4 * t.dims.size() + 4 * t.data.size());
    out.push_back('S');
    out.push_back('T');
    out.push_back('E');
    out.push_back('N');
    out.push_back(1);
    out.push_back(static_cast<std::uint8_t>(t.dims.size()));
    for (int d : t.dims) put_u32le(out, static_cast<std::uint32_t>(d));
    for (float v : t.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32le(out, bits);
    }
    return out;
}

Tensor sten_decode_prefix(const std::uint8_t* bytes, std::size_t size, std::size_t* consumed) {
    if (size < 4 || std::memcmp(bytes, "STEN", 4) != 0) {
        throw ParseError("STEN: bad magic at byte offset 0");
    }
    if (size < 6) truncated(4, "header");
    if (bytes[4] != 1) {
        throw ParseError("STEN: unsupported version " + std::to_string(bytes[4]) +
                         " at byte offset 4");
    }
    std::size_t ndims = bytes[5];
    std::size_t off = 6;
    std::vector<int> dims(ndims);
    for (std::size_t i = 0; i < ndims; ++i) {
        if (off + 4 > size) truncated(off, "dims");
        dims[i] = static_cast<int>(get_u32le(bytes + off));
        off += 4;
    }
    std::int64_t n = checked_numel(dims);
    if (off + 4 * static_cast<std::size_t>(n) > size) truncated(off, "values");
    std::vector<float> values(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        std::uint32_t bits = get_u32le(bytes + off);
        std::memcpy(&values[static_cast<std::size_t>(i)], &bits, 4);
        off += 4;
    }
    if (consumed) *consumed = off;
    return Tensor(std::move(dims), std::move(values));
}

Tensor sten_decode(const std::uint8_t* bytes, std::size_t size) {
    return sten_decode_prefix(bytes, size, nullptr);
}

void sten_encode_stream(std::ostream& os, const Tensor& t) {
    auto bytes = sten_encode(t);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_sten(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ParseError("cannot open for writing: " + path);
    sten_encode_stream(os, t);
    if (!os) throw ParseError("write failed: " + path);
}

Tensor read_sten(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return sten_decode(bytes.data(), bytes.size());
}

}  // namespace stereosparse
