#include "stereosparse/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "stereosparse/errors.hpp"
#include "stereosparse/rng.hpp"
#include "stereosparse/sten.hpp"

namespace stereosparse {

namespace {

float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }

}  // namespace

VariantKind variant_from_string(const std::string& name) {
    if (name == "conv_sup") return VariantKind::ConvSup;
    if (name == "sparse_unsup") return VariantKind::SparseUnsup;
    if (name == "conv_rand") return VariantKind::ConvRand;
    if (name == "conv_unsup") return VariantKind::ConvUnsup;
    if (name == "conv_finetune") return VariantKind::ConvFinetune;
    throw ConfigError("unknown variant '" + name +
                      "' (expected conv_sup, sparse_unsup, conv_rand, conv_unsup, conv_finetune)");
}

std::string variant_to_string(VariantKind v) {
    switch (v) {
        case VariantKind::ConvSup: return "conv_sup";
        case VariantKind::SparseUnsup: return "sparse_unsup";
        case VariantKind::ConvRand: return "conv_rand";
        case VariantKind::ConvUnsup: return "conv_unsup";
        case VariantKind::ConvFinetune: return "conv_finetune";
    }
    throw ConfigError("invalid variant enum value");
}

bool variant_needs_dictionary(VariantKind v) {
    return v == VariantKind::SparseUnsup || v == VariantKind::ConvUnsup ||
           v == VariantKind::ConvFinetune;
}

void NetworkSpec::validate() const {
    if (depth < 2 || depth > 4) throw ConfigError("depth must be 2, 3, or 4");
    if (features < 1) throw ConfigError("features must be positive");
    if (input_t != 3) throw ConfigError("input must have 3 frames");
    if (input_c < 1) throw ConfigError("input channel count must be positive");
    if (input_h < 1 || input_w < 1) throw ConfigError("input extents must be positive");
    if (window_h < 1 || window_w < 1) throw ConfigError("window extents must be positive");
    if (input_h % window_h != 0 || input_w % window_w != 0)
        throw ConfigError("window must tile the input exactly");
    int halvings = depth >= 3 ? 2 : 1;
    int div = 1 << halvings;
    if (window_h % div != 0 || window_w % div != 0)
        throw ConfigError("window extent must be divisible by " + std::to_string(div) +
                          " at depth " + std::to_string(depth));
    lca.validate();
}

std::vector<LayerDesc> layer_plan(const NetworkSpec& spec) {
    spec.validate();
    bool first_trainable =
        spec.variant == VariantKind::ConvSup || spec.variant == VariantKind::ConvFinetune;
    bool first_sparse = spec.variant == VariantKind::SparseUnsup;

    std::vector<LayerDesc> plan;

    LayerDesc l0;
    l0.kernel = {3, 8, 8};
    l0.stride = {1, 2, 2};
    l0.features = spec.features;
    auto ph = same_pad_extent(spec.input_h, 8, 2);
    auto pw = same_pad_extent(spec.input_w, 8, 2);
    l0.pad_before = {0, ph[0], pw[0]};
    l0.pad_after = {0, ph[1], pw[1]};
    l0.nonlin = first_sparse ? Nonlinearity::None : Nonlinearity::Relu;
    l0.trainable = first_trainable;
    l0.bias = !first_sparse;
    plan.push_back(l0);

    int cell_h = spec.window_h / 2;
    int cell_w = spec.window_w / 2;

    if (spec.depth >= 3) {
        LayerDesc mid;
        mid.kernel = {1, 3, 3};
        mid.stride = {1, 2, 2};
        mid.features = spec.features;
        auto mh = same_pad_extent(spec.input_h / 2, 3, 2);
        auto mw = same_pad_extent(spec.input_w / 2, 3, 2);
        mid.pad_before = {0, mh[0], mw[0]};
        mid.pad_after = {0, mh[1], mw[1]};
        plan.push_back(mid);
        cell_h /= 2;
        cell_w /= 2;
    }
    if (spec.depth == 4) {
        LayerDesc mid2;
        mid2.kernel = {1, 3, 3};
        mid2.stride = {1, 1, 1};
        mid2.features = spec.features;
        mid2.pad_before = {0, 1, 1};
        mid2.pad_after = {0, 1, 1};
        plan.push_back(mid2);
    }

    LayerDesc head;
    head.kernel = {1, cell_h, cell_w};
    head.stride = {1, cell_h, cell_w};
    head.features = 1;
    head.nonlin = Nonlinearity::Sigmoid;
    plan.push_back(head);
    return plan;
}

NetworkParams build_network(const NetworkSpec& spec, const KernelStack* dict, std::uint32_t seed) {
    auto plan = layer_plan(spec);
    bool needs = variant_needs_dictionary(spec.variant);
    if (needs && dict == nullptr)
        throw ConfigError("variant " + variant_to_string(spec.variant) + " requires a dictionary");
    if (!needs && dict != nullptr)
        throw ConfigError("variant " + variant_to_string(spec.variant) + " takes no dictionary");

    Rng rng(seed);
    NetworkParams net;
    int cin = spec.input_c;
    for (std::size_t li = 0; li < plan.size(); ++li) {
        const LayerDesc& d = plan[li];
        Layer layer;
        layer.trainable = d.trainable;
        layer.k.stride = d.stride;
        std::vector<int> wdims{d.features, d.kernel[0], d.kernel[1], d.kernel[2], cin};
        if (li == 0 && dict != nullptr) {
            if (dict->weights.dims != wdims)
                throw ShapeError("dictionary dims " + dims_to_string(dict->weights.dims) +
                                 " do not match first layer " + dims_to_string(wdims));
            if (dict->stride != d.stride)
                throw ShapeError("dictionary stride does not match first layer stride");
            layer.k.weights = dict->weights;
        } else {
            layer.k.weights = Tensor::zeros(wdims);
            int fan_in = d.kernel[0] * d.kernel[1] * d.kernel[2] * cin;
            float scale = 1.0f / std::sqrt(static_cast<float>(fan_in));
            for (float& wv : layer.k.weights.data) wv = scale * static_cast<float>(rng.normal());
        }
        if (d.bias) layer.bias.assign(static_cast<std::size_t>(d.features), 0.0f);
        net.layers.push_back(std::move(layer));
        cin = d.features;
    }
    return net;
}

Tensor first_layer_activations(const NetworkParams& params, const NetworkSpec& spec,
                               const Tensor& input) {
    auto plan = layer_plan(spec);
    Tensor x = input;
    if (x.ndim() == 4) {
        std::vector<int> d5{1};
        d5.insert(d5.end(), x.dims.begin(), x.dims.end());
        x.dims = d5;
    }
    Tensor padded = pad_thw(x, plan[0].pad_before, plan[0].pad_after);
    LcaState st = lca_encode_adaptive(padded, params.layers[0].k, spec.lca);
    return st.a;
}

Tensor forward(const NetworkParams& params, const NetworkSpec& spec, const Tensor& input,
               ForwardCache* cache, const Tensor* first_acts) {
    auto plan = layer_plan(spec);
    if (params.layers.size() != plan.size())
        throw ShapeError("network has " + std::to_string(params.layers.size()) + " layers, plan has " +
                         std::to_string(plan.size()));

    Tensor x = input;
    if (x.ndim() == 4) {
        std::vector<int> d5{1};
        d5.insert(d5.end(), x.dims.begin(), x.dims.end());
        x.dims = d5;
    }
    std::vector<int> want{1, spec.input_t, spec.input_h, spec.input_w, spec.input_c};
    if (x.dims != want)
        throw ShapeError("input dims " + dims_to_string(x.dims) + ", expected " + dims_to_string(want));

    if (cache) {
        cache->padded_in.clear();
        cache->pre.clear();
        cache->post.clear();
    }

    for (std::size_t li = 0; li < plan.size(); ++li) {
        const LayerDesc& d = plan[li];
        const Layer& layer = params.layers[li];
        Tensor padded = pad_thw(x, d.pad_before, d.pad_after);

        Tensor pre;
        if (li == 0 && spec.variant == VariantKind::SparseUnsup) {
            if (first_acts) {
                pre = *first_acts;
                auto ext = correlate_out_extents(padded, layer.k);
                std::vector<int> adims{1, ext[0], ext[1], ext[2], layer.k.features()};
                if (pre.dims != adims)
                    throw ShapeError("cached activations " + dims_to_string(pre.dims) + ", expected " +
                                     dims_to_string(adims));
            } else {
                pre = lca_encode_adaptive(padded, layer.k, spec.lca).a;
            }
        } else {
            pre = correlate(padded, layer.k);
            if (!layer.bias.empty()) {
                int f = layer.k.features();
                for (std::size_t i = 0; i < pre.data.size(); ++i)
                    pre.data[i] += layer.bias[i % static_cast<std::size_t>(f)];
            }
        }

        Tensor post = pre;
        switch (d.nonlin) {
            case Nonlinearity::Relu:
                for (float& v : post.data) v = std::max(0.0f, v);
                break;
            case Nonlinearity::Sigmoid:
                for (float& v : post.data) v = sigmoidf(v);
                break;
            case Nonlinearity::None:
                break;
        }
        if (cache) {
            cache->padded_in.push_back(std::move(padded));
            cache->pre.push_back(pre);
            cache->post.push_back(post);
        }
        x = std::move(post);
    }

    Tensor probs = Tensor::zeros({spec.grid_h(), spec.grid_w()});
    if (x.numel() != probs.numel())
        throw ShapeError("head produced " + dims_to_string(x.dims) + ", expected " +
                         std::to_string(spec.grid_h()) + "x" + std::to_string(spec.grid_w()) +
                         " grid");
    probs.data = x.data;
    return probs;
}

double cross_entropy(const Tensor& probs, const Tensor& labels) {
    if (!probs.same_dims(labels))
        throw ShapeError("probs dims " + dims_to_string(probs.dims) + " vs labels " +
                         dims_to_string(labels.dims));
    constexpr double kEps = 1e-7;
    double total = 0.0;
    for (std::size_t i = 0; i < probs.data.size(); ++i) {
        double p = std::clamp(static_cast<double>(probs.data[i]), kEps, 1.0 - kEps);
        double y = labels.data[i];
        total += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    return total / static_cast<double>(probs.data.size());
}

std::pair<double, std::vector<LayerGrads>> compute_gradients(const NetworkParams& params,
                                                             const NetworkSpec& spec,
                                                             const TrainItem& item) {
    auto plan = layer_plan(spec);
    ForwardCache cache;
    Tensor probs = forward(params, spec, *item.input, &cache, item.first_acts);
    double loss = cross_entropy(probs, *item.labels);

    std::size_t n_layers = plan.size();
    std::vector<LayerGrads> grads(n_layers);

    // d(loss)/d(logit) of sigmoid + mean cross-entropy is (p - y) / n.
    const Tensor& head_post = cache.post.back();
    Tensor d_pre = Tensor::zeros(head_post.dims);
    double inv_n = 1.0 / static_cast<double>(probs.data.size());
    for (std::size_t i = 0; i < d_pre.data.size(); ++i)
        d_pre.data[i] =
            static_cast<float>((head_post.data[i] - item.labels->data[i]) * inv_n);

    for (std::size_t li = n_layers; li-- > 0;) {
        const Layer& layer = params.layers[li];
        if (layer.trainable) {
            grads[li].dw = correlate_weight_grad(cache.padded_in[li], d_pre, layer.k);
            if (!layer.bias.empty()) {
                int f = layer.k.features();
                std::vector<double> db(static_cast<std::size_t>(f), 0.0);
                for (std::size_t i = 0; i < d_pre.data.size(); ++i)
                    db[i % static_cast<std::size_t>(f)] += d_pre.data[i];
                grads[li].db.resize(db.size());
                for (std::size_t i2 = 0; i2 < db.size(); ++i2)
                    grads[li].db[i2] = static_cast<float>(db[i2]);
            }
        }

        bool any_below = false;
        for (std::size_t lj = 0; lj < li; ++lj) any_below |= params.layers[lj].trainable;
        if (!any_below || li == 0) continue;

        Tensor d_padded = reconstruct(d_pre, layer.k);
        const Tensor& prev_post = cache.post[li - 1];
        std::array<int, 3> extent{prev_post.dims[1], prev_post.dims[2], prev_post.dims[3]};
        Tensor dx = crop_thw(d_padded, plan[li].pad_before, extent);

        const Tensor& prev_pre = cache.pre[li - 1];
        Tensor next = std::move(dx);
        if (plan[li - 1].nonlin == Nonlinearity::Relu) {
            for (std::size_t i = 0; i < next.data.size(); ++i)
                if (prev_pre.data[i] <= 0.0f) next.data[i] = 0.0f;
        }
        d_pre = std::move(next);
    }
    return {loss, std::move(grads)};
}

AdamState make_adam_state(const NetworkParams& params) {
    AdamState s;
    for (const Layer& layer : params.layers) {
        if (layer.trainable) {
            s.m_w.push_back(Tensor::zeros(layer.k.weights.dims));
            s.v_w.push_back(Tensor::zeros(layer.k.weights.dims));
        } else {
            s.m_w.emplace_back();
            s.v_w.emplace_back();
        }
        s.m_b.emplace_back(layer.bias.size(), 0.0f);
        s.v_b.emplace_back(layer.bias.size(), 0.0f);
    }
    return s;
}

double train_step(NetworkParams& params, const NetworkSpec& spec, const std::vector<TrainItem>& batch,
                  AdamState& opt, float lr) {
    if (batch.empty()) throw ConfigError("train_step: empty batch");
    if (opt.m_w.size() != params.layers.size())
        throw ConfigError("optimizer state does not match the network");

    std::size_t n_layers = params.layers.size();
    std::vector<LayerGrads> sum(n_layers);
    double loss_sum = 0.0;
    for (const TrainItem& item : batch) {
        auto [loss, g] = compute_gradients(params, spec, item);
        loss_sum += loss;
        for (std::size_t li = 0; li < n_layers; ++li) {
            if (g[li].dw.numel() == 0) continue;
            if (sum[li].dw.numel() == 0) {
                sum[li] = std::move(g[li]);
            } else {
                for (std::size_t i = 0; i < sum[li].dw.data.size(); ++i)
                    sum[li].dw.data[i] += g[li].dw.data[i];
                for (std::size_t i = 0; i < sum[li].db.size(); ++i)
                    sum[li].db[i] += g[li].db[i];
            }
        }
    }
    double mean_loss = loss_sum / static_cast<double>(batch.size());
    if (!std::isfinite(mean_loss))
        throw DivergenceError("train_step: loss is not finite");

    float inv_b = 1.0f / static_cast<float>(batch.size());
    opt.step += 1;
    double bc1 = 1.0 - std::pow(static_cast<double>(opt.beta1), static_cast<double>(opt.step));
    double bc2 = 1.0 - std::pow(static_cast<double>(opt.beta2), static_cast<double>(opt.step));

    auto adam_update = [&](float& w, float g, float& m, float& v) {
        m = opt.beta1 * m + (1.0f - opt.beta1) * g;
        v = opt.beta2 * v + (1.0f - opt.beta2) * g * g;
        double mhat = m / bc1;
        double vhat = v / bc2;
        w -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + opt.eps));
    };

    for (std::size_t li = 0; li < n_layers; ++li) {
        Layer& layer = params.layers[li];
        if (!layer.trainable || sum[li].dw.numel() == 0) continue;
        Tensor& mw = opt.m_w[li];
        Tensor& vw = opt.v_w[li];
        for (std::size_t i = 0; i < layer.k.weights.data.size(); ++i)
            adam_update(layer.k.weights.data[i], sum[li].dw.data[i] * inv_b, mw.data[i], vw.data[i]);
        for (std::size_t i = 0; i < layer.bias.size(); ++i)
            adam_update(layer.bias[i], sum[li].db[i] * inv_b, opt.m_b[li][i], opt.v_b[li][i]);
    }
    return mean_loss;
}

Tensor EncodeCache::get_or_compute(const std::string& id, const NetworkParams& params,
                                   const NetworkSpec& spec, const Tensor& input) {
    // Key folds in the first-layer weights and LCA settings so stale entries
    // from other dictionaries can never be served.
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, std::size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    const Tensor& w = params.layers.at(0).k.weights;
    mix(w.data.data(), w.data.size() * sizeof(float));
    mix(&spec.lca.lambda, sizeof(spec.lca.lambda));
    mix(&spec.lca.tau, sizeof(spec.lca.tau));
    mix(&spec.lca.dt, sizeof(spec.lca.dt));
    mix(&spec.lca.max_iters, sizeof(spec.lca.max_iters));
    mix(&spec.lca.stop_tol, sizeof(spec.lca.stop_tol));
    mix(id.data(), id.size());

    char keybuf[32];
    std::snprintf(keybuf, sizeof(keybuf), "%016llx", static_cast<unsigned long long>(h));
    std::string key(keybuf);

    for (const auto& [k, t] : mem_)
        if (k == key) return t;

    if (!dir_.empty()) {
        std::filesystem::create_directories(dir_);
        std::filesystem::path path = std::filesystem::path(dir_) / (key + ".sten");
        if (std::filesystem::exists(path)) {
            Tensor t = read_sten(path.string());
            mem_.emplace_back(key, t);
            return t;
        }
        Tensor t = first_layer_activations(params, spec, input);
        write_sten(path.string(), t);
        mem_.emplace_back(key, t);
        return t;
    }

    Tensor t = first_layer_activations(params, spec, input);
    mem_.emplace_back(key, t);
    return t;
}

TrainedDetector train_detector(const NetworkSpec& spec, const LabeledDataset& data,
                               const DetectorTrainOptions& opts, const KernelStack* dict,
                               EncodeCache* cache) {
    spec.validate();
    if (data.count < 1) throw ConfigError("train_detector: empty dataset");
    if (opts.epochs < 1) throw ConfigError("train_detector: epochs must be positive");
    if (opts.batch_size < 1) throw ConfigError("train_detector: batch_size must be positive");
    int n = opts.n_train > 0 ? opts.n_train : data.count;
    if (n > data.count)
        throw ConfigError("train_detector: n_train " + std::to_string(n) + " exceeds dataset size " +
                          std::to_string(data.count));

    Rng rng(opts.seed);
    NetworkParams params = build_network(spec, dict, opts.seed);

    std::vector<int> order(static_cast<std::size_t>(data.count));
    for (int i = 0; i < data.count; ++i) order[static_cast<std::size_t>(i)] = i;
    for (int i = data.count - 1; i > 0; --i)
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
    order.resize(static_cast<std::size_t>(n));

    std::vector<LabeledExample> subset;
    subset.reserve(order.size());
    for (int idx : order) subset.push_back(data.get(idx));

    bool sparse = spec.variant == VariantKind::SparseUnsup;
    EncodeCache local;
    EncodeCache* enc = cache ? cache : &local;
    std::vector<Tensor> acts;
    if (sparse) {
        acts.reserve(subset.size());
        for (const LabeledExample& ex : subset)
            acts.push_back(enc->get_or_compute(ex.id, params, spec, ex.input));
    }

    AdamState opt = make_adam_state(params);
    TrainedDetector out;
    std::vector<std::size_t> perm(subset.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        for (std::size_t i = perm.size() - 1; i > 0; --i)
            std::swap(perm[i], perm[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i) + 1))]);

        double epoch_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(opts.batch_size)) {
            std::size_t stop = std::min(perm.size(), start + static_cast<std::size_t>(opts.batch_size));
            std::vector<TrainItem> batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                TrainItem item;
                item.input = &subset[perm[i]].input;
                item.labels = &subset[perm[i]].labels;
                if (sparse) item.first_acts = &acts[perm[i]];
                batch.push_back(item);
            }
            double loss = train_step(params, spec, batch, opt, opts.lr);
            epoch_sum += loss * static_cast<double>(batch.size());
            seen += batch.size();
        }
        out.epoch_loss.push_back(epoch_sum / static_cast<double>(seen));
    }
    out.params = std::move(params);
    return out;
}

}  // namespace stereosparse
