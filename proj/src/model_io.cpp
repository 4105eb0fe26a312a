#include "stereosparse/model_io.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "stereosparse/errors.hpp"
#include "stereosparse/sten.hpp"

namespace stereosparse {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'M', '1'};

nlohmann::json spec_to_json(const NetworkSpec& spec) {
    nlohmann::json j;
    j["variant"] = variant_to_string(spec.variant);
    j["depth"] = spec.depth;
    j["features"] = spec.features;
    j["input"] = {spec.input_t, spec.input_h, spec.input_w, spec.input_c};
    j["window"] = {spec.window_h, spec.window_w};
    j["lca"] = {{"lambda", spec.lca.lambda},
                {"tau", spec.lca.tau},
                {"dt", spec.lca.dt},
                {"max_iters", spec.lca.max_iters},
                {"stop_tol", spec.lca.stop_tol}};
    return j;
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
    NetworkSpec spec;
    spec.variant = variant_from_string(j.at("variant").get<std::string>());
    spec.depth = j.at("depth").get<int>();
    spec.features = j.at("features").get<int>();
    auto in = j.at("input").get<std::vector<int>>();
    if (in.size() != 4) throw ParseError("model header: input needs 4 extents");
    spec.input_t = in[0];
    spec.input_h = in[1];
    spec.input_w = in[2];
    spec.input_c = in[3];
    auto win = j.at("window").get<std::vector<int>>();
    if (win.size() != 2) throw ParseError("model header: window needs 2 extents");
    spec.window_h = win[0];
    spec.window_w = win[1];
    const auto& l = j.at("lca");
    spec.lca.lambda = l.at("lambda").get<float>();
    spec.lca.tau = l.at("tau").get<float>();
    spec.lca.dt = l.at("dt").get<float>();
    spec.lca.max_iters = l.at("max_iters").get<int>();
    spec.lca.stop_tol = l.at("stop_tol").get<double>();
    return spec;
}

}  // namespace

void save_model(const std::string& path, const NetworkSpec& spec, const NetworkParams& params) {
    nlohmann::json j = spec_to_json(spec);
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& layer : params.layers) {
        nlohmann::json lj;
        lj["trainable"] = layer.trainable;
        lj["stride"] = {layer.k.stride[0], layer.k.stride[1], layer.k.stride[2]};
        lj["has_bias"] = !layer.bias.empty();
        layers.push_back(lj);
    }
    j["layers"] = layers;
    std::string header = j.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out.write(kMagic, 4);
    std::uint32_t len = static_cast<std::uint32_t>(header.size());
    std::uint8_t lenb[4] = {static_cast<std::uint8_t>(len), static_cast<std::uint8_t>(len >> 8),
                            static_cast<std::uint8_t>(len >> 16), static_cast<std::uint8_t>(len >> 24)};
    out.write(reinterpret_cast<const char*>(lenb), 4);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const Layer& layer : params.layers) {
        sten_encode_stream(out, layer.k.weights);
        if (!layer.bias.empty()) {
            Tensor b = Tensor::zeros({static_cast<int>(layer.bias.size())});
            b.data.assign(layer.bias.begin(), layer.bias.end());
            sten_encode_stream(out, b);
        }
    }
    if (!out) throw ParseError("short write to " + path);
}

std::pair<NetworkSpec, NetworkParams> load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open model " + path);
    std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>{});
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ParseError("model " + path + ": bad magic at byte offset 0");
    std::uint32_t len = bytes[4] | (bytes[5] << 8) | (bytes[6] << 16) |
                        (static_cast<std::uint32_t>(bytes[7]) << 24);
    if (bytes.size() < 8 + static_cast<std::size_t>(len))
        throw ParseError("model " + path + ": truncated header");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("model " + path + ": header: " + e.what());
    }

    NetworkSpec spec = spec_from_json(j);
    NetworkParams params;
    std::size_t off = 8 + len;
    for (const auto& lj : j.at("layers")) {
        Layer layer;
        layer.trainable = lj.at("trainable").get<bool>();
        auto stride = lj.at("stride").get<std::vector<int>>();
        if (stride.size() != 3) throw ParseError("model " + path + ": layer stride needs 3 values");
        layer.k.stride = {stride[0], stride[1], stride[2]};
        std::size_t used = 0;
        layer.k.weights = sten_decode_prefix(bytes.data() + off, bytes.size() - off, &used);
        off += used;
        if (lj.at("has_bias").get<bool>()) {
            Tensor b = sten_decode_prefix(bytes.data() + off, bytes.size() - off, &used);
            off += used;
            if (b.ndim() != 1 || b.dims[0] != layer.k.features())
                throw ParseError("model " + path + ": bias dims " + dims_to_string(b.dims) +
                                 " do not match layer features");
            layer.bias.assign(b.data.begin(), b.data.end());
        }
        params.layers.push_back(std::move(layer));
    }

    auto plan = layer_plan(spec);
    if (plan.size() != params.layers.size())
        throw ParseError("model " + path + ": layer count " + std::to_string(params.layers.size()) +
                         " does not match depth " + std::to_string(spec.depth));
    return {std::move(spec), std::move(params)};
}

}  // namespace stereosparse
