#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "stereosparse/dict_learning.hpp"
#include "stereosparse/errors.hpp"
#include "stereosparse/model_io.hpp"
#include "stereosparse/network.hpp"
#include "stereosparse/rng.hpp"

using namespace stereosparse;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const char* name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

NetworkSpec small_spec(VariantKind v, int depth) {
    NetworkSpec s;
    s.variant = v;
    s.depth = depth;
    s.features = 3;
    s.input_h = 16;
    s.input_w = 32;
    s.input_c = 2;
    s.lca.lambda = 0.35f;
    s.lca.max_iters = 123;
    return s;
}

bool params_equal(const NetworkParams& a, const NetworkParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (a.layers[i].k.weights.dims != b.layers[i].k.weights.dims) return false;
        if (a.layers[i].k.weights.data != b.layers[i].k.weights.data) return false;
        if (a.layers[i].k.stride != b.layers[i].k.stride) return false;
        if (a.layers[i].bias != b.layers[i].bias) return false;
        if (a.layers[i].trainable != b.layers[i].trainable) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("models survive a save/load round trip") {
    fs::path dir = fresh_dir("stereosparse_model_test");

    SUBCASE("supervised network with biases") {
        NetworkSpec spec = small_spec(VariantKind::ConvSup, 3);
        NetworkParams params = build_network(spec, nullptr, 11);
        // Non-trivial biases so the blob layout is exercised.
        Rng rng(13);
        for (Layer& l : params.layers)
            for (float& b : l.bias) b = static_cast<float>(rng.normal());

        fs::path file = dir / "conv.ssm";
        save_model(file.string(), spec, params);
        auto [spec2, params2] = load_model(file.string());

        CHECK(spec2.variant == spec.variant);
        CHECK(spec2.depth == spec.depth);
        CHECK(spec2.features == spec.features);
        CHECK(spec2.input_h == spec.input_h);
        CHECK(spec2.input_w == spec.input_w);
        CHECK(spec2.input_c == spec.input_c);
        CHECK(spec2.window_h == spec.window_h);
        CHECK(spec2.lca.lambda == spec.lca.lambda);
        CHECK(spec2.lca.max_iters == spec.lca.max_iters);
        CHECK(params_equal(params, params2));

        // A loaded model produces bit-identical window probabilities.
        Rng irng(17);
        Tensor x = Tensor::zeros({3, 16, 32, 2});
        for (float& v : x.data) v = static_cast<float>(irng.normal());
        Tensor p1 = forward(params, spec, x);
        Tensor p2 = forward(params2, spec2, x);
        CHECK(p1.data == p2.data);
    }

    SUBCASE("sparse network: bias-free first layer, dictionary weights kept") {
        NetworkSpec spec = small_spec(VariantKind::SparseUnsup, 2);
        KernelStack dict = init_dictionary(spec.features, 3, 8, 8, spec.input_c, {1, 2, 2}, 19);
        NetworkParams params = build_network(spec, &dict, 1);

        fs::path file = dir / "sparse.ssm";
        save_model(file.string(), spec, params);
        auto [spec2, params2] = load_model(file.string());
        CHECK(spec2.variant == VariantKind::SparseUnsup);
        CHECK(params2.layers[0].bias.empty());
        CHECK_FALSE(params2.layers[0].trainable);
        CHECK(params_equal(params, params2));
        CHECK(params2.layers[0].k.weights.data == dict.weights.data);
    }
    fs::remove_all(dir);
}

TEST_CASE("load_model rejects corrupted files") {
    fs::path dir = fresh_dir("stereosparse_model_corrupt");
    NetworkSpec spec = small_spec(VariantKind::ConvSup, 2);
    NetworkParams params = build_network(spec, nullptr, 5);
    fs::path file = dir / "model.ssm";
    save_model(file.string(), spec, params);

    std::vector<std::uint8_t> bytes;
    {
        std::ifstream in(file.string(), std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>{});
    }
    REQUIRE(bytes.size() > 16);

    auto write_variant = [&](const std::vector<std::uint8_t>& b, const char* name) {
        fs::path p = dir / name;
        std::ofstream out(p.string(), std::ios::binary);
        out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
        return p.string();
    };

    SUBCASE("bad magic") {
        std::vector<std::uint8_t> bad = bytes;
        bad[0] = 'X';
        CHECK_THROWS_AS(load_model(write_variant(bad, "magic.ssm")), ParseError);
    }
    SUBCASE("truncated header") {
        std::vector<std::uint8_t> bad(bytes.begin(), bytes.begin() + 10);
        CHECK_THROWS_AS(load_model(write_variant(bad, "short.ssm")), ParseError);
    }
    SUBCASE("header is not json") {
        std::vector<std::uint8_t> bad = bytes;
        bad[8] = '!';
        CHECK_THROWS_AS(load_model(write_variant(bad, "json.ssm")), ParseError);
    }
    SUBCASE("truncated weight blobs") {
        std::vector<std::uint8_t> bad(bytes.begin(), bytes.end() - 32);
        CHECK_THROWS_AS(load_model(write_variant(bad, "weights.ssm")), ParseError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_model((dir / "nope.ssm").string()), ParseError); }
    fs::remove_all(dir);
}
