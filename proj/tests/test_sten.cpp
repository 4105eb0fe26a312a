#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "doctest.h"
#include "stereosparse/rng.hpp"
#include "stereosparse/sten.hpp"
#include "stereosparse/tensor.hpp"

using namespace stereosparse;

TEST_CASE("sten encoding is the documented byte layout") {
    Tensor t({1, 2}, {1.5f, -2.0f});
    const std::vector<std::uint8_t> bytes = sten_encode(t);
    const std::vector<std::uint8_t> want = {
        'S',  'T',  'E',  'N',        // magic
        1,                            // version
        2,                            // ndims
        1,    0,    0,    0,          // dim 0, u32 little-endian
        2,    0,    0,    0,          // dim 1
        0x00, 0x00, 0xC0, 0x3F,       // 1.5f
        0x00, 0x00, 0x00, 0xC0,       // -2.0f
    };
    CHECK(bytes == want);
}

TEST_CASE("sten roundtrips random tensors exactly") {
    Rng rng(3);
    Tensor t = Tensor::zeros({2, 3, 4});
    for (float& v : t.data) v = static_cast<float>(rng.normal());
    const std::vector<std::uint8_t> bytes = sten_encode(t);
    const Tensor back = sten_decode(bytes.data(), bytes.size());
    CHECK(back.dims == t.dims);
    CHECK(back.data == t.data);
}

TEST_CASE("sten_decode_prefix consumes exactly one blob") {
    Tensor a({2}, {1.0f, 2.0f});
    Tensor b({1, 1}, {3.0f});
    std::vector<std::uint8_t> buf = sten_encode(a);
    const std::vector<std::uint8_t> second = sten_encode(b);
    buf.insert(buf.end(), second.begin(), second.end());

    std::size_t used = 0;
    const Tensor first = sten_decode_prefix(buf.data(), buf.size(), &used);
    CHECK(first.data == a.data);
    CHECK(used == buf.size() - second.size());
    const Tensor rest = sten_decode(buf.data() + used, buf.size() - used);
    CHECK(rest.data == b.data);
}

TEST_CASE("sten rejects malformed input with located errors") {
    Tensor t({2}, {1.0f, 2.0f});
    std::vector<std::uint8_t> bytes = sten_encode(t);

    SUBCASE("bad magic") {
        bytes[0] = 'X';
        CHECK_THROWS_AS(sten_decode(bytes.data(), bytes.size()), ParseError);
    }
    SUBCASE("bad version") {
        bytes[4] = 9;
        CHECK_THROWS_AS(sten_decode(bytes.data(), bytes.size()), ParseError);
    }
    SUBCASE("truncated payload") {
        bytes.pop_back();
        CHECK_THROWS_AS(sten_decode(bytes.data(), bytes.size()), ParseError);
    }
    SUBCASE("empty buffer") {
        CHECK_THROWS_AS(sten_decode(bytes.data(), 0), ParseError);
    }
}

TEST_CASE("sten file io roundtrip") {
    const std::string path = "sten_io_test.sten";
    Tensor t({3, 2}, {1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f});
    write_sten(path, t);
    const Tensor back = read_sten(path);
    CHECK(back.dims == t.dims);
    CHECK(back.data == t.data);
    std::remove(path.c_str());
    CHECK_THROWS(read_sten(path));
}
