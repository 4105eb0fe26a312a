#include "stereosparse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "stereosparse/errors.hpp"
#include "stereosparse/model_io.hpp"
#include "stereosparse/sten.hpp"

namespace stereosparse {

PRCurve pr_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ShapeError("pr_curve: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
    if (scores.empty()) throw std::domain_error("pr_curve: empty input");
    std::int64_t positives = 0;
    for (int y : labels) positives += (y != 0);
    if (positives == 0) throw std::domain_error("pr_curve: no positive labels");

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0u);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    PRCurve curve;
    curve.positive_count = positives;
    curve.total_count = static_cast<std::int64_t>(scores.size());
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        double s = scores[idx[i]];
        // All entries tied at this score enter together.
        while (i < idx.size() && scores[idx[i]] == s) {
            if (labels[idx[i]] != 0)
                ++tp;
            else
                ++fp;
            ++i;
        }
        PRPoint p;
        p.recall = static_cast<double>(tp) / static_cast<double>(positives);
        p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        curve.points.push_back(p);
    }
    return curve;
}

double auc(const PRCurve& curve) {
    if (curve.points.empty()) throw std::domain_error("auc: empty curve");
    // Precision extends left from the first point to recall 0.
    double area = curve.points.front().precision * curve.points.front().recall;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const PRPoint& a = curve.points[i - 1];
        const PRPoint& b = curve.points[i];
        area += 0.5 * (a.precision + b.precision) * (b.recall - a.recall);
    }
    return area;
}

EvalResult evaluate_detector(const NetworkParams& params, const NetworkSpec& spec,
                             const LabeledDataset& data, EncodeCache* cache) {
    if (data.count < 1) throw ConfigError("evaluate_detector: empty dataset");
    EncodeCache local;
    EncodeCache* enc = cache ? cache : &local;
    bool sparse = spec.variant == VariantKind::SparseUnsup;

    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < data.count; ++i) {
        LabeledExample ex = data.get(i);
        Tensor probs;
        if (sparse) {
            Tensor acts = enc->get_or_compute(ex.id, params, spec, ex.input);
            probs = forward(params, spec, ex.input, nullptr, &acts);
        } else {
            probs = forward(params, spec, ex.input);
        }
        for (std::size_t j = 0; j < probs.data.size(); ++j) {
            scores.push_back(probs.data[j]);
            labels.push_back(ex.labels.data[j] > 0.5f ? 1 : 0);
        }
    }
    EvalResult r;
    r.curve = pr_curve(scores, labels);
    r.auc_value = auc(r.curve);
    return r;
}

double sparsity_match_threshold(std::vector<float> magnitudes, std::int64_t target_nnz) {
    std::int64_t total = static_cast<std::int64_t>(magnitudes.size());
    if (target_nnz < 0 || target_nnz > total)
        throw std::domain_error("sparsity_match_threshold: target " + std::to_string(target_nnz) +
                                " outside [0, " + std::to_string(total) + "]");
    if (target_nnz == 0) return std::numeric_limits<double>::infinity();
    for (float& m : magnitudes) m = std::fabs(m);
    std::sort(magnitudes.begin(), magnitudes.end(), std::greater<float>());
    if (target_nnz == total) return -std::numeric_limits<double>::denorm_min();
    // Survivors are strictly above t, so ties at the cut drop out.
    return magnitudes[static_cast<std::size_t>(target_nnz)];
}

double selectivity_index(const std::vector<double>& bin_mass) {
    double total = 0.0, best = 0.0;
    for (double m : bin_mass) {
        total += m;
        best = std::max(best, m);
    }
    if (total <= 0.0) return 0.0;
    return best / total;
}

void activation_overlay(const Tensor& input, const Tensor& acts, int feature,
                        std::array<int, 3> kernel, std::array<int, 3> stride,
                        std::array<int, 3> pad_before, const std::string& path) {
    if (input.ndim() != 4)
        throw ShapeError("activation_overlay: input must be [t,h,w,c], got " +
                         dims_to_string(input.dims));
    if (acts.ndim() != 5)
        throw ShapeError("activation_overlay: activations must be [1,t,h,w,f], got " +
                         dims_to_string(acts.dims));
    int h = input.dims[1], w = input.dims[2], c = input.dims[3];
    int ah = acts.dims[2], aw = acts.dims[3], af = acts.dims[4];
    if (feature < 0 || feature >= af)
        throw ShapeError("activation_overlay: feature " + std::to_string(feature) + " outside [0, " +
                         std::to_string(af) + ")");
    int want_h = (h + stride[1] - 1) / stride[1];
    int want_w = (w + stride[2] - 1) / stride[2];
    if (ah != want_h || aw != want_w)
        throw ShapeError("activation_overlay: activation grid " + std::to_string(ah) + "x" +
                         std::to_string(aw) + " misaligned with frame " + std::to_string(h) + "x" +
                         std::to_string(w) + " at stride " + std::to_string(stride[1]) + "x" +
                         std::to_string(stride[2]));

    // Grayscale base: mean of the left RGB channels in the last frame.
    int t_last = input.dims[0] - 1;
    std::vector<double> gray(static_cast<std::size_t>(h) * w);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int r = 0; r < h; ++r)
        for (int cc = 0; cc < w; ++cc) {
            double v = 0.0;
            int nch = std::min(3, c);
            for (int ch = 0; ch < nch; ++ch)
                v += input.data[((static_cast<std::size_t>(t_last) * h + r) * w + cc) * c + ch];
            v /= nch;
            gray[static_cast<std::size_t>(r) * w + cc] = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    double span = hi > lo ? hi - lo : 1.0;

    double max_act = 0.0;
    for (int i = 0; i < ah; ++i)
        for (int j = 0; j < aw; ++j)
            max_act = std::max(max_act,
                               std::fabs(static_cast<double>(acts.at5(0, 0, i, j, feature))));

    std::vector<double> green(static_cast<std::size_t>(h) * w, 0.0);
    if (max_act > 0.0) {
        for (int i = 0; i < ah; ++i) {
            for (int j = 0; j < aw; ++j) {
                double m = std::fabs(static_cast<double>(acts.at5(0, 0, i, j, feature)));
                if (m == 0.0) continue;
                // Paint the site's full receptive field in the frame.
                int r0 = i * stride[1] - pad_before[1];
                int c0 = j * stride[2] - pad_before[2];
                for (int r = std::max(0, r0); r < std::min(h, r0 + kernel[1]); ++r)
                    for (int cc = std::max(0, c0); cc < std::min(w, c0 + kernel[2]); ++cc) {
                        std::size_t at = static_cast<std::size_t>(r) * w + cc;
                        green[at] = std::max(green[at], m / max_act);
                    }
            }
        }
    }

    Image img = Image::blank(h, w);
    for (int r = 0; r < h; ++r)
        for (int cc = 0; cc < w; ++cc) {
            std::size_t at = static_cast<std::size_t>(r) * w + cc;
            auto g8 = static_cast<std::uint8_t>(
                std::lround(255.0 * (gray[at] - lo) / span));
            img.at(r, cc, 0) = g8;
            img.at(r, cc, 2) = g8;
            img.at(r, cc, 1) =
                green[at] > 0.0 ? static_cast<std::uint8_t>(std::lround(255.0 * green[at])) : g8;
        }
    write_ppm(path, img);
}

SelectivityReport depth_selectivity_report(const NetworkParams& sparse_params,
                                           const NetworkSpec& sparse_spec,
                                           const NetworkParams& control_params,
                                           const NetworkSpec& control_spec, const Dataset& data,
                                           EncodeCache* cache) {
    if (data.count() < 1) throw ConfigError("depth_selectivity_report: empty dataset");
    if (sparse_spec.variant != VariantKind::SparseUnsup)
        throw ConfigError("depth_selectivity_report: first model must be sparse_unsup");
    EncodeCache local;
    EncodeCache* enc = cache ? cache : &local;

    auto plan = layer_plan(sparse_spec);
    const LayerDesc& l0 = plan[0];
    auto cplan = layer_plan(control_spec);
    if (cplan[0].kernel != l0.kernel || cplan[0].stride != l0.stride)
        throw ConfigError("depth_selectivity_report: first-layer geometries differ");

    // Bin centers: the distinct planted disparity values over the dataset.
    std::vector<double> levels;
    std::vector<Tensor> disps;
    disps.reserve(static_cast<std::size_t>(data.count()));
    for (int i = 0; i < data.count(); ++i) {
        disps.push_back(data.load_disparity(i));
        for (float v : disps.back().data) {
            if (v <= 0.0f) continue;
            bool known = false;
            for (double l : levels)
                if (std::fabs(l - v) < 1e-3) known = true;
            if (!known) levels.push_back(v);
        }
    }
    if (levels.empty())
        throw std::domain_error("depth_selectivity_report: no planted disparities in dataset");
    std::sort(levels.begin(), levels.end());

    std::vector<Tensor> sparse_acts, control_acts;
    std::int64_t sparse_nnz = 0;
    std::vector<float> control_mags;
    for (int i = 0; i < data.count(); ++i) {
        LabeledExample ex = data.load(i);
        Tensor sa = enc->get_or_compute(ex.id, sparse_params, sparse_spec, ex.input);
        sparse_nnz += count_nonzero(sa);
        ForwardCache fc;
        forward(control_params, control_spec, ex.input, &fc);
        Tensor ca = fc.post[0];
        control_mags.reserve(control_mags.size() + ca.data.size());
        for (float v : ca.data) control_mags.push_back(v);
        sparse_acts.push_back(std::move(sa));
        control_acts.push_back(std::move(ca));
    }

    SelectivityReport rep;
    rep.disparity_levels = levels;
    rep.sparse_nnz = sparse_nnz;
    rep.threshold = sparsity_match_threshold(control_mags, sparse_nnz);

    int f_sparse = sparse_acts[0].dims[4];
    int f_control = control_acts[0].dims[4];
    std::vector<std::vector<double>> smass(static_cast<std::size_t>(f_sparse),
                                           std::vector<double>(levels.size(), 0.0));
    std::vector<std::vector<double>> cmass(static_cast<std::size_t>(f_control),
                                           std::vector<double>(levels.size(), 0.0));

    for (int i = 0; i < data.count(); ++i) {
        const Tensor& disp = disps[static_cast<std::size_t>(i)];
        const Tensor& sa = sparse_acts[static_cast<std::size_t>(i)];
        const Tensor& ca = control_acts[static_cast<std::size_t>(i)];
        int ah = sa.dims[2], aw = sa.dims[3];
        int dh = disp.dims[0], dw = disp.dims[1];
        for (int r = 0; r < ah; ++r) {
            for (int c = 0; c < aw; ++c) {
                // Receptive-field center of site (r,c) in frame pixels.
                int pr = std::clamp(r * l0.stride[1] - l0.pad_before[1] + l0.kernel[1] / 2, 0, dh - 1);
                int pc = std::clamp(c * l0.stride[2] - l0.pad_before[2] + l0.kernel[2] / 2, 0, dw - 1);
                float d = disp.data[static_cast<std::size_t>(pr) * dw + pc];
                if (d <= 0.0f) continue;
                std::size_t bin = 0;
                double bestgap = std::numeric_limits<double>::infinity();
                for (std::size_t b = 0; b < levels.size(); ++b) {
                    double gap = std::fabs(levels[b] - d);
                    if (gap < bestgap) {
                        bestgap = gap;
                        bin = b;
                    }
                }
                for (int f = 0; f < f_sparse; ++f) {
                    double m = std::fabs(static_cast<double>(sa.at5(0, 0, r, c, f)));
                    if (m > 0.0) smass[static_cast<std::size_t>(f)][bin] += m;
                }
                for (int f = 0; f < f_control; ++f) {
                    double m = std::fabs(static_cast<double>(ca.at5(0, 0, r, c, f)));
                    if (m > rep.threshold) {
                        cmass[static_cast<std::size_t>(f)][bin] += m;
                        ++rep.control_survivors;
                    }
                }
            }
        }
    }

    auto summarize = [](const std::vector<std::vector<double>>& mass, std::vector<double>* idx) {
        double sum = 0.0;
        int fired = 0;
        for (const auto& bins : mass) {
            double tot = 0.0;
            for (double m : bins) tot += m;
            if (tot <= 0.0) {
                idx->push_back(-1.0);
                continue;
            }
            double s = selectivity_index(bins);
            idx->push_back(s);
            sum += s;
            ++fired;
        }
        return fired > 0 ? sum / fired : 0.0;
    };
    rep.sparse_mean = summarize(smass, &rep.sparse_index);
    rep.control_mean = summarize(cmass, &rep.control_index);
    return rep;
}

AnalysisOutputs write_depth_analysis(const KernelStack& dict, const NetworkParams& control_params,
                                     const NetworkSpec& control_spec, const Dataset& data,
                                     const LcaConfig& lca, const std::string& out_dir,
                                     int overlay_features, int overlay_examples,
                                     EncodeCache* cache) {
    NetworkSpec sparse_spec;
    sparse_spec.variant = VariantKind::SparseUnsup;
    sparse_spec.depth = 2;
    sparse_spec.features = dict.weights.dims[0];
    sparse_spec.lca = lca;
    sparse_spec.validate();
    NetworkParams sparse_params = build_network(sparse_spec, &dict, 1);

    std::filesystem::create_directories(out_dir);
    EncodeCache local_cache;
    if (!cache) cache = &local_cache;

    AnalysisOutputs out;
    out.report = depth_selectivity_report(sparse_params, sparse_spec, control_params, control_spec,
                                          data, cache);

    char buf[96];
    std::string csv_path = (std::filesystem::path(out_dir) / "selectivity.csv").string();
    std::ofstream csv(csv_path);
    csv << "kind,feature,index\n";
    for (std::size_t f = 0; f < out.report.sparse_index.size(); ++f) {
        std::snprintf(buf, sizeof(buf), "sparse,%zu,%.6f\n", f, out.report.sparse_index[f]);
        csv << buf;
    }
    for (std::size_t f = 0; f < out.report.control_index.size(); ++f) {
        std::snprintf(buf, sizeof(buf), "control,%zu,%.6f\n", f, out.report.control_index[f]);
        csv << buf;
    }
    if (!csv) throw ConfigError("cannot write " + csv_path);
    out.written.push_back(csv_path);

    nlohmann::json sj;
    sj["sparse_mean"] = out.report.sparse_mean;
    sj["control_mean"] = out.report.control_mean;
    sj["threshold"] = out.report.threshold;
    sj["sparse_nnz"] = out.report.sparse_nnz;
    sj["control_survivors"] = out.report.control_survivors;
    sj["disparity_levels"] = out.report.disparity_levels;
    std::string sum_path = (std::filesystem::path(out_dir) / "selectivity_summary.json").string();
    std::ofstream sum(sum_path);
    sum << sj.dump(2) << "\n";
    if (!sum) throw ConfigError("cannot write " + sum_path);
    out.written.push_back(sum_path);

    auto plan = layer_plan(sparse_spec);
    const LayerDesc& l0 = plan[0];
    int n_ex = std::min(overlay_examples, data.count());
    for (int i = 0; i < n_ex; ++i) {
        LabeledExample ex = data.load(i);
        Tensor sa = cache->get_or_compute(ex.id, sparse_params, sparse_spec, ex.input);
        ForwardCache fc;
        forward(control_params, control_spec, ex.input, &fc);
        Tensor ca = fc.post[0];
        for (float& v : ca.data)
            if (std::fabs(static_cast<double>(v)) <= out.report.threshold) v = 0.0f;
        int nf = std::min({overlay_features, sa.dims[4], ca.dims[4]});
        for (int f = 0; f < nf; ++f) {
            char name[96];
            std::snprintf(name, sizeof(name), "overlay_sparse_e%d_f%d.ppm", i, f);
            std::string spath = (std::filesystem::path(out_dir) / name).string();
            activation_overlay(ex.input, sa, f, l0.kernel, l0.stride, l0.pad_before, spath);
            out.written.push_back(spath);
            std::snprintf(name, sizeof(name), "overlay_control_e%d_f%d.ppm", i, f);
            std::string cpath = (std::filesystem::path(out_dir) / name).string();
            activation_overlay(ex.input, ca, f, l0.kernel, l0.stride, l0.pad_before, cpath);
            out.written.push_back(cpath);
        }
    }
    return out;
}

namespace {

std::uint64_t fnv_mix(std::uint64_t h, const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t fnv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv_mix(h, buf, static_cast<std::size_t>(in.gcount()));
    return h;
}

std::string hex64(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

RunReport run_matrix(const MatrixConfig& config,
                     const std::function<void(const std::string&)>& log) {
    if (config.variants.empty() || config.depths.empty() || config.n_trains.empty() ||
        config.seeds.empty())
        throw ConfigError("run_matrix: variants, depths, n_trains, and seeds must be non-empty");
    if (config.out_dir.empty()) throw ConfigError("run_matrix: out_dir required");

    bool needs_dict = false;
    for (VariantKind v : config.variants) needs_dict |= variant_needs_dictionary(v);
    KernelStack dict;
    std::uint64_t dict_hash = 0;
    if (needs_dict) {
        if (config.dict_path.empty())
            throw ConfigError("run_matrix: a variant requires a dictionary but none was given");
        dict.weights = read_sten(config.dict_path);
        dict.stride = {1, 2, 2};
        if (dict.weights.ndim() != 5)
            throw ConfigError("run_matrix: dictionary must be a 5-d kernel stack, got " +
                              dims_to_string(dict.weights.dims));
        if (dict.weights.dims[0] != config.base.features)
            throw ConfigError("run_matrix: dictionary has " + std::to_string(dict.weights.dims[0]) +
                              " atoms, config expects " + std::to_string(config.base.features));
        dict_hash = fnv_file(config.dict_path);
    }

    Dataset all = read_manifest(config.data_manifest);
    Dataset train_ds = all.split("train");
    Dataset test_ds = all.split("test");
    if (train_ds.count() < 1 || test_ds.count() < 1)
        throw ConfigError("run_matrix: manifest needs non-empty train and test splits");
    LabeledDataset train_ld = train_ds.labeled();
    LabeledDataset test_ld = test_ds.labeled();
    std::uint64_t manifest_hash = fnv_file(config.data_manifest);

    std::string cache_dir = config.cache_dir.empty() ? config.out_dir + "/cache" : config.cache_dir;
    std::filesystem::create_directories(config.out_dir);
    std::filesystem::create_directories(config.out_dir + "/models");
    std::filesystem::create_directories(cache_dir + "/cells");
    std::filesystem::create_directories(cache_dir + "/encodes");
    EncodeCache enc(cache_dir + "/encodes");

    // Best control candidate for the selectivity step: a trained supervised
    // first layer, largest training subset, earliest (depth, seed) in config
    // order.
    std::string control_model_path;
    int control_rank = -1;

    RunReport report;
    for (VariantKind v : config.variants) {
        for (int depth : config.depths) {
            for (int nt : config.n_trains) {
                int resolved_nt = nt == 0 ? train_ds.count() : nt;
                for (std::uint32_t seed : config.seeds) {
                    std::string desc = variant_to_string(v) + "|" + std::to_string(depth) + "|" +
                                       std::to_string(resolved_nt) + "|" + std::to_string(seed) + "|" +
                                       std::to_string(config.base.features) + "|" +
                                       fmt6(config.base.lca.lambda) + "|" +
                                       fmt6(config.base.lca.tau) + "|" + fmt6(config.base.lca.dt) +
                                       "|" + std::to_string(config.base.lca.max_iters) + "|" +
                                       fmt6(config.base.lca.stop_tol) + "|" +
                                       std::to_string(config.train.epochs) + "|" +
                                       std::to_string(config.train.batch_size) + "|" +
                                       fmt6(config.train.lr);
                    std::uint64_t h = 1469598103934665603ull;
                    h = fnv_mix(h, desc.data(), desc.size());
                    h = fnv_mix(h, &dict_hash, sizeof(dict_hash));
                    h = fnv_mix(h, &manifest_hash, sizeof(manifest_hash));
                    std::string cell_path = cache_dir + "/cells/" + hex64(h) + ".json";

                    std::string model_path = config.out_dir + "/models/" + variant_to_string(v) +
                                             "-d" + std::to_string(depth) + "-n" +
                                             std::to_string(resolved_nt) + "-s" +
                                             std::to_string(seed) + ".ssm";

                    CellResult cell;
                    cell.variant = v;
                    cell.depth = depth;
                    cell.n_train = resolved_nt;
                    cell.seed = seed;
                    bool cached = std::filesystem::exists(cell_path);
                    if (cached) {
                        std::ifstream in(cell_path);
                        nlohmann::json j = nlohmann::json::parse(in);
                        cell.auc_value = j.at("auc").get<double>();
                    } else {
                        NetworkSpec spec = config.base;
                        spec.variant = v;
                        spec.depth = depth;
                        spec.validate();
                        DetectorTrainOptions opts = config.train;
                        opts.seed = seed;
                        opts.n_train = resolved_nt;
                        TrainedDetector td = train_detector(spec, train_ld, opts,
                                                            needs_dict && variant_needs_dictionary(v)
                                                                ? &dict
                                                                : nullptr,
                                                            &enc);
                        EvalResult er = evaluate_detector(td.params, spec, test_ld, &enc);
                        save_model(model_path, spec, td.params);
                        cell.auc_value = er.auc_value;
                        nlohmann::json j;
                        j["auc"] = er.auc_value;
                        j["final_train_loss"] = td.epoch_loss.back();
                        std::ofstream out(cell_path);
                        out << j.dump() << "\n";
                        if (!out) throw ConfigError("run_matrix: cannot write " + cell_path);
                    }
                    if (v != VariantKind::SparseUnsup && std::filesystem::exists(model_path)) {
                        int rank = resolved_nt * 10 + (v == VariantKind::ConvSup ? 1 : 0);
                        if (rank > control_rank) {
                            control_rank = rank;
                            control_model_path = model_path;
                        }
                    }
                    if (log)
                        log("cell " + variant_to_string(v) + " depth=" + std::to_string(depth) +
                            " n_train=" + std::to_string(resolved_nt) + " seed=" +
                            std::to_string(seed) + " auc=" + fmt6(cell.auc_value) +
                            (cached ? " (cached)" : ""));
                    report.cells.push_back(cell);
                }

                SummaryRow row;
                row.variant = v;
                row.depth = depth;
                row.n_train = resolved_nt;
                std::vector<double> aucs;
                for (std::size_t i = report.cells.size() - config.seeds.size();
                     i < report.cells.size(); ++i)
                    aucs.push_back(report.cells[i].auc_value);
                row.median = median_of(aucs);
                row.range = *std::max_element(aucs.begin(), aucs.end()) -
                            *std::min_element(aucs.begin(), aucs.end());
                report.summary.push_back(row);
            }
        }
    }

    report.results_csv_path = config.out_dir + "/results.csv";
    std::ofstream rcsv(report.results_csv_path);
    rcsv << "variant,depth,n_train,seed,auc\n";
    for (const CellResult& c : report.cells)
        rcsv << variant_to_string(c.variant) << "," << c.depth << "," << c.n_train << "," << c.seed
             << "," << fmt6(c.auc_value) << "\n";
    if (!rcsv) throw ConfigError("run_matrix: cannot write " + report.results_csv_path);

    report.summary_csv_path = config.out_dir + "/summary.csv";
    std::ofstream scsv(report.summary_csv_path);
    scsv << "variant,depth,n_train,median_auc,range\n";
    for (const SummaryRow& s : report.summary)
        scsv << variant_to_string(s.variant) << "," << s.depth << "," << s.n_train << ","
             << fmt6(s.median) << "," << fmt6(s.range) << "\n";
    if (!scsv) throw ConfigError("run_matrix: cannot write " + report.summary_csv_path);

    // Selectivity + overlay outputs ride along when the ingredients exist:
    // a dictionary for the sparse side, a trained supervised model for the
    // control side, and disparity maps in the test split.
    if (!needs_dict) {
        if (log) log("selectivity: skipped (no dictionary in this matrix)");
    } else if (control_model_path.empty()) {
        if (log) log("selectivity: skipped (no trained supervised model saved)");
    } else {
        try {
            auto [cspec, cparams] = load_model(control_model_path);
            write_depth_analysis(dict, cparams, cspec, test_ds, config.base.lca, config.out_dir, 4,
                                 2, &enc);
            if (log) log("selectivity: control " + control_model_path);
        } catch (const std::domain_error& e) {
            if (log) log(std::string("selectivity: skipped (") + e.what() + ")");
        }
    }
    return report;
}

}  // namespace stereosparse
