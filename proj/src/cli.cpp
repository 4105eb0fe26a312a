#include "stereosparse/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stereosparse/data.hpp"
#include "stereosparse/dict_learning.hpp"
#include "stereosparse/errors.hpp"
#include "stereosparse/eval.hpp"
#include "stereosparse/model_io.hpp"
#include "stereosparse/network.hpp"
#include "stereosparse/rng.hpp"
#include "stereosparse/sten.hpp"

namespace stereosparse {

namespace {

// A bad flag combination: reported as usage (exit 2), not runtime failure.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

class Logger {
public:
    explicit Logger(std::ostream& err) : err_(err) {}

    void info(const std::string& msg) { line("info", msg); }
    void error(const std::string& msg) { line("error", msg); }

private:
    void line(const char* level, const std::string& msg) {
        std::time_t t = std::time(nullptr);
        char stamp[32];
        std::strftime(stamp, sizeof(stamp), "%FT%TZ", std::gmtime(&t));
        err_ << level << " " << stamp << " " << msg << "\n";
    }
    std::ostream& err_;
};

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
    std::vector<int> out;
    for (const std::string& item : split_csv(s)) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw UsageError(std::string(what) + ": bad integer '" + item + "'");
        }
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& s, const char* what) {
    std::vector<double> out;
    for (const std::string& item : split_csv(s)) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw UsageError(std::string(what) + ": bad number '" + item + "'");
        }
    }
    return out;
}

KernelStack load_dictionary(const std::string& path) {
    KernelStack k;
    k.weights = read_sten(path);
    k.stride = {1, 2, 2};
    if (k.weights.ndim() != 5)
        throw ParseError("dictionary " + path + ": expected a 5-d kernel stack, got " +
                         dims_to_string(k.weights.dims));
    return k;
}

void write_resolved_config(const std::string& dir, const nlohmann::json& resolved, Logger& log) {
    std::filesystem::create_directories(dir);
    std::string path = (std::filesystem::path(dir) / "config.resolved.json").string();
    std::ofstream out(path);
    out << resolved.dump(2) << "\n";
    if (!out) throw ConfigError("cannot write " + path);
    log.info("wrote " + path);
}

// Shared LCA flag block.
struct LcaFlags {
    double lambda = 0.1, tau = 10.0, dt = 1.0, stop_tol = 1e-4;
    int max_iters = 400;

    void attach(CLI::App* cmd) {
        cmd->add_option("--lambda", lambda, "L1 sparsity weight");
        cmd->add_option("--tau", tau, "LCA time constant");
        cmd->add_option("--dt", dt, "LCA step size");
        cmd->add_option("--iters,--max-iters", max_iters, "LCA iteration cap");
        cmd->add_option("--stop-tol", stop_tol, "relative energy-change stop tolerance");
    }
    LcaConfig to_config() const {
        LcaConfig c;
        c.lambda = static_cast<float>(lambda);
        c.tau = static_cast<float>(tau);
        c.dt = static_cast<float>(dt);
        c.max_iters = max_iters;
        c.stop_tol = stop_tol;
        return c;
    }
    void echo(nlohmann::json* j) const {
        (*j)["lambda"] = lambda;
        (*j)["tau"] = tau;
        (*j)["dt"] = dt;
        (*j)["iters"] = max_iters;
        (*j)["stop-tol"] = stop_tol;
    }
};

std::array<int, 3> parse_dims3(const std::string& s, const char* what) {
    std::array<int, 3> out{};
    int parsed = 0;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, 'x')) {
        if (parsed == 3) break;
        try {
            out[static_cast<std::size_t>(parsed++)] = std::stoi(item);
        } catch (const std::exception&) {
            throw UsageError(std::string(what) + ": bad component '" + item + "' in '" + s + "'");
        }
    }
    if (parsed != 3 || in.peek() != std::char_traits<char>::eof())
        throw UsageError(std::string(what) + ": expected TxHxW, got '" + s + "'");
    for (int v : out)
        if (v <= 0) throw UsageError(std::string(what) + ": components must be positive");
    return out;
}

std::string sibling_csv(const std::string& out_path, const char* suffix) {
    std::filesystem::path p(out_path);
    p.replace_extension("");
    return p.string() + suffix;
}

void ensure_parent_dir(const std::string& out_path) {
    std::filesystem::path parent = std::filesystem::path(out_path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

struct SynthArgs {
    int n = 500, n_test = 0;
    std::uint32_t seed = 1;
    std::string out;
    int width = 512, height = 128, min_objects = 1, max_objects = 3;
    double min_disparity = 2.0, max_disparity = 12.0;
    std::string disparity_levels;
    double velocity_scale = 0.8, noise = 6.0;
    bool write_disparity = false;
    bool inline_entries = false;
};

int cmd_synth(const SynthArgs& a, Logger& log) {
    SynthParams p;
    p.width = a.width;
    p.height = a.height;
    p.min_objects = a.min_objects;
    p.max_objects = a.max_objects;
    p.min_disparity = a.min_disparity;
    p.max_disparity = a.max_disparity;
    if (!a.disparity_levels.empty())
        p.disparity_levels = parse_double_list(a.disparity_levels, "--disparity-levels");
    p.velocity_scale = a.velocity_scale;
    p.noise = a.noise;

    std::filesystem::create_directories(a.out);
    std::filesystem::create_directories(std::filesystem::path(a.out) / "examples");

    std::vector<ManifestEntry> entries;
    auto emit = [&](const std::string& split, int index, std::uint32_t scene_seed) {
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "%s-%04d", split.c_str(), index);
        ManifestEntry e;
        e.id = idbuf;
        e.split = split;
        if (a.inline_entries) {
            e.synth_seed = scene_seed;
            e.synth_params = p;
            entries.push_back(std::move(e));
            return;
        }
        SynthScene scene = synth_scene(scene_seed, p);
        Example ex = preprocess(scene.clip, scene.boxes);
        std::string rel = std::string("examples/") + idbuf + ".sten";
        write_sten((std::filesystem::path(a.out) / rel).string(), ex.input);
        e.input_path = rel;
        e.labels_inline.reserve(ex.labels.data.size());
        for (float v : ex.labels.data) e.labels_inline.push_back(v > 0.5f ? 1 : 0);
        if (a.write_disparity) {
            std::string drel = std::string("examples/") + idbuf + ".disp.sten";
            write_sten((std::filesystem::path(a.out) / drel).string(),
                       disparity_to_frame(scene.disparity));
            e.disparity_path = drel;
        }
        entries.push_back(std::move(e));
    };

    for (int i = 0; i < a.n; ++i) emit("train", i, a.seed + static_cast<std::uint32_t>(i));
    for (int i = 0; i < a.n_test; ++i)
        emit("test", i, a.seed + 1000000u + static_cast<std::uint32_t>(i));

    std::string manifest = (std::filesystem::path(a.out) / "manifest.jsonl").string();
    write_manifest(manifest, entries);
    log.info("synth: " + std::to_string(a.n) + " train + " + std::to_string(a.n_test) +
             " test examples -> " + manifest);
    return 0;
}

// The exact energy gradient sums over every activation site, so its scale
// grows with the crop area; the default lr here suits the default crop,
// not the library-level default meant for single-site problems.
struct TrainDictArgs {
    std::string data, out;
    int features = 64, batches = 500, batch_size = 8;
    double lr = 1e-4;
    std::uint32_t seed = 1;
    std::string kernel = "3x8x8", stride = "1x2x2";
    int crop_h = 16, crop_w = 32, crops_per_example = 8;
    LcaFlags lca;
};

int cmd_train_dict(const TrainDictArgs& a, Logger& log) {
    Dataset all = read_manifest(a.data);
    Dataset train = all.split("train");
    if (train.count() < 1) throw ConfigError("train-dict: no training examples in " + a.data);

    std::array<int, 3> k = parse_dims3(a.kernel, "--kernel");
    std::array<int, 3> st = parse_dims3(a.stride, "--stride");
    if (k[0] != 3 || st[0] != 1)
        throw UsageError("train-dict: clips have 3 frames, so the kernel must span 3x...x... "
                         "at time stride 1");
    if (a.crop_h < k[1] || a.crop_w < k[2])
        throw UsageError("train-dict: crop smaller than the kernel");
    if ((a.crop_h - k[1]) % st[1] != 0 || (a.crop_w - k[2]) % st[2] != 0)
        throw UsageError("train-dict: (crop - kernel) must be divisible by the stride");

    // Virtual crop pool: crop i picks its example and offsets from a hash
    // of (seed, i), so the pool is stable across runs.
    int n = train.count();
    TensorDataset crops;
    crops.count = n * a.crops_per_example;
    std::uint32_t seed = a.seed;
    int crop_h = a.crop_h, crop_w = a.crop_w;
    crops.get = [&train, n, seed, crop_h, crop_w](int i) {
        Rng rng(seed ^ (0x9e3779b9u + static_cast<std::uint32_t>(i) * 2654435761u));
        LabeledExample ex = train.load(rng.uniform_int(n));
        Tensor& x = ex.input;
        std::vector<int> d5{1};
        d5.insert(d5.end(), x.dims.begin(), x.dims.end());
        x.dims = d5;
        int y0 = rng.uniform_int(x.dims[2] - crop_h + 1);
        int x0 = rng.uniform_int(x.dims[3] - crop_w + 1);
        return crop_thw(x, {0, y0, x0}, {x.dims[1], crop_h, crop_w});
    };

    KernelStack init = init_dictionary(a.features, k[0], k[1], k[2], 6, st, a.seed);
    DictTrainConfig cfg;
    cfg.lr = static_cast<float>(a.lr);
    cfg.batches = a.batches;
    cfg.batch_size = a.batch_size;
    cfg.lca = a.lca.to_config();
    cfg.seed = a.seed;

    auto [phi, history] = train_dictionary(crops, init, cfg);
    ensure_parent_dir(a.out);
    write_sten(a.out, phi.weights);

    std::string hist_path = sibling_csv(a.out, ".history.csv");
    std::ofstream hcsv(hist_path);
    hcsv << "batch,recon_err,sparsity,total,nnz_fraction,min_atom_norm,max_atom_norm\n";
    char buf[160];
    for (std::size_t b = 0; b < history.batches.size(); ++b) {
        const DictBatchStats& s = history.batches[b];
        std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", b,
                      s.mean_energy.recon_err, s.mean_energy.sparsity, s.mean_energy.total,
                      s.mean_nnz_fraction, s.min_atom_norm, s.max_atom_norm);
        hcsv << buf;
    }
    if (!hcsv) throw ConfigError("cannot write " + hist_path);

    const DictBatchStats& last = history.batches.back();
    log.info("train-dict: " + std::to_string(a.batches) + " batches, final energy " +
             std::to_string(last.mean_energy.total) + ", nnz fraction " +
             std::to_string(last.mean_nnz_fraction) + ", smoothed descent " +
             (history.smoothed_descent_ok() ? "ok" : "NOT ok"));
    log.info("wrote " + a.out);
    log.info("wrote " + hist_path);
    return 0;
}

struct EncodeArgs {
    std::string dict, input, out;
    LcaFlags lca;
};

int cmd_encode(const EncodeArgs& a, Logger& log) {
    KernelStack phi = load_dictionary(a.dict);
    Tensor x = read_sten(a.input);
    if (x.ndim() == 4) {
        std::vector<int> d5{1};
        d5.insert(d5.end(), x.dims.begin(), x.dims.end());
        x.dims = d5;
    }
    if (x.ndim() != 5)
        throw ParseError("encode: input must be [t,h,w,c] or [b,t,h,w,c], got " +
                         dims_to_string(x.dims));
    auto ph = same_pad_extent(x.dims[2], phi.kh(), phi.stride[1]);
    auto pw = same_pad_extent(x.dims[3], phi.kw(), phi.stride[2]);
    Tensor padded = pad_thw(x, {0, ph[0], pw[0]}, {0, ph[1], pw[1]});
    LcaState state = lca_encode_adaptive(padded, phi, a.lca.to_config());
    ensure_parent_dir(a.out);
    write_sten(a.out, state.a);

    std::string trace_path = sibling_csv(a.out, ".trace.csv");
    std::ofstream tcsv(trace_path);
    tcsv << "iter,recon_err,sparsity,total,nnz\n";
    char buf[160];
    for (std::size_t i = 0; i < state.energy_trace.size(); ++i) {
        const EnergyReport& r = state.energy_trace[i];
        std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f,%lld\n", i, r.recon_err, r.sparsity,
                      r.total, static_cast<long long>(r.nnz));
        tcsv << buf;
    }
    if (!tcsv) throw ConfigError("cannot write " + trace_path);

    const EnergyReport& e = state.energy_trace.back();
    log.info("encode: " + std::to_string(state.energy_trace.size() - 1) + " iterations, energy " +
             std::to_string(e.total) + ", nnz " + std::to_string(e.nnz));
    log.info("wrote " + a.out);
    log.info("wrote " + trace_path);
    return 0;
}

struct TrainNetArgs {
    std::string variant;
    int depth = 3, features = 64;
    std::string dict, data, out, cache;
    int n_train = 0, epochs = 30, batch_size = 16;
    double lr = 1e-3;
    std::uint32_t seed = 1;
    LcaFlags lca;
};

int cmd_train_net(const TrainNetArgs& a, Logger& log) {
    VariantKind v = variant_from_string(a.variant);
    if (variant_needs_dictionary(v) && a.dict.empty())
        throw UsageError("train-net: variant " + a.variant + " requires --dict");
    if (!variant_needs_dictionary(v) && !a.dict.empty())
        throw UsageError("train-net: variant " + a.variant + " forbids --dict");

    NetworkSpec spec;
    spec.variant = v;
    spec.depth = a.depth;
    spec.features = a.features;
    spec.lca = a.lca.to_config();
    spec.validate();

    std::optional<KernelStack> dict;
    if (!a.dict.empty()) {
        dict = load_dictionary(a.dict);
        if (dict->weights.dims[0] != a.features)
            throw UsageError("train-net: dictionary has " + std::to_string(dict->weights.dims[0]) +
                             " atoms but --features is " + std::to_string(a.features));
    }

    Dataset all = read_manifest(a.data);
    Dataset train = all.split("train");
    if (train.count() < 1) throw ConfigError("train-net: no training examples in " + a.data);
    LabeledDataset ld = train.labeled();

    DetectorTrainOptions opts;
    opts.n_train = a.n_train;
    opts.epochs = a.epochs;
    opts.batch_size = a.batch_size;
    opts.lr = static_cast<float>(a.lr);
    opts.seed = a.seed;

    std::string cache_dir =
        a.cache.empty() ? (std::filesystem::path(a.out).parent_path() / "encode-cache").string()
                        : a.cache;
    EncodeCache cache(cache_dir);

    TrainedDetector td = train_detector(spec, ld, opts, dict ? &*dict : nullptr, &cache);
    ensure_parent_dir(a.out);
    save_model(a.out, spec, td.params);
    log.info("train-net: loss " + std::to_string(td.epoch_loss.front()) + " -> " +
             std::to_string(td.epoch_loss.back()) + " over " + std::to_string(a.epochs) + " epochs");
    log.info("wrote " + a.out);
    return 0;
}

struct EvalArgs {
    std::string model, data, split = "test", cache, out;
};

int cmd_eval(const EvalArgs& a, Logger& log, std::ostream& out) {
    auto [spec, params] = load_model(a.model);
    Dataset all = read_manifest(a.data);
    Dataset ds = a.split == "all" ? all : all.split(a.split);
    if (ds.count() < 1) throw ConfigError("eval: split '" + a.split + "' is empty in " + a.data);
    LabeledDataset ld = ds.labeled();

    EncodeCache mem;
    EncodeCache disk(a.cache);
    EvalResult r = evaluate_detector(params, spec, ld, a.cache.empty() ? &mem : &disk);

    char buf[64];
    std::snprintf(buf, sizeof(buf), "auc %.6f\n", r.auc_value);
    out << buf;
    log.info("eval: " + std::to_string(ds.count()) + " examples, " +
             std::to_string(r.curve.total_count) + " windows, " +
             std::to_string(r.curve.positive_count) + " positive");

    if (!a.out.empty()) {
        std::filesystem::create_directories(a.out);
        std::string path = (std::filesystem::path(a.out) / "pr_curve.csv").string();
        std::ofstream csv(path);
        csv << "recall,precision\n";
        for (const PRPoint& pt : r.curve.points) {
            std::snprintf(buf, sizeof(buf), "%.6f,%.6f\n", pt.recall, pt.precision);
            csv << buf;
        }
        if (!csv) throw ConfigError("cannot write " + path);
        log.info("wrote " + path);
    }
    return 0;
}

struct RunMatrixArgs {
    std::string variants = "conv_sup,sparse_unsup";
    std::string depths = "3";
    std::string n_trains = "0";
    std::string seeds = "1,2,3,4,5,6";
    int features = 64;
    std::string dict, data, out, cache;
    int epochs = 30, batch_size = 16;
    double lr = 1e-3;
    LcaFlags lca;
};

int cmd_run_matrix(const RunMatrixArgs& a, Logger& log) {
    MatrixConfig cfg;
    for (const std::string& name : split_csv(a.variants))
        cfg.variants.push_back(variant_from_string(name));
    if (cfg.variants.empty()) throw UsageError("run-matrix: --variants is empty");
    cfg.depths = parse_int_list(a.depths, "--depths");
    cfg.n_trains = parse_int_list(a.n_trains, "--n-trains");
    cfg.seeds.clear();
    for (int s : parse_int_list(a.seeds, "--seeds")) {
        if (s < 0) throw UsageError("run-matrix: seeds must be non-negative");
        cfg.seeds.push_back(static_cast<std::uint32_t>(s));
    }
    cfg.base.features = a.features;
    cfg.base.lca = a.lca.to_config();
    cfg.train.epochs = a.epochs;
    cfg.train.batch_size = a.batch_size;
    cfg.train.lr = static_cast<float>(a.lr);
    cfg.dict_path = a.dict;
    cfg.data_manifest = a.data;
    cfg.out_dir = a.out;
    cfg.cache_dir = a.cache;

    bool needs_dict = false;
    for (VariantKind v : cfg.variants) needs_dict |= variant_needs_dictionary(v);
    if (needs_dict && a.dict.empty())
        throw UsageError("run-matrix: a selected variant requires --dict");

    RunReport report = run_matrix(cfg, [&log](const std::string& msg) { log.info(msg); });
    log.info("wrote " + report.results_csv_path);
    log.info("wrote " + report.summary_csv_path);
    return 0;
}

struct AnalyzeArgs {
    std::string dict, control_model, data, out, cache;
    std::string split = "test";
    int overlay_features = 4, overlay_examples = 2;
    LcaFlags lca;
};

int cmd_analyze(const AnalyzeArgs& a, Logger& log, std::ostream& out) {
    KernelStack dict = load_dictionary(a.dict);
    auto [control_spec, control_params] = load_model(a.control_model);
    if (control_spec.variant == VariantKind::SparseUnsup)
        throw UsageError("analyze: the control model must be a convolutional variant");

    Dataset all = read_manifest(a.data);
    Dataset ds = a.split == "all" ? all : all.split(a.split);
    if (ds.count() < 1) throw ConfigError("analyze: split '" + a.split + "' is empty in " + a.data);

    std::filesystem::create_directories(a.out);
    EncodeCache cache(a.cache.empty() ? (std::filesystem::path(a.out) / "encode-cache").string()
                                      : a.cache);

    AnalysisOutputs res =
        write_depth_analysis(dict, control_params, control_spec, ds, a.lca.to_config(), a.out,
                             a.overlay_features, a.overlay_examples, &cache);
    const SelectivityReport& rep = res.report;

    char buf[96];
    std::snprintf(buf, sizeof(buf), "sparse_mean %.6f\ncontrol_mean %.6f\n", rep.sparse_mean,
                  rep.control_mean);
    out << buf;
    log.info("analyze: sparsity-matched threshold " + std::to_string(rep.threshold) + ", " +
             std::to_string(rep.sparse_nnz) + " sparse nonzeros");
    for (const std::string& path : res.written) log.info("wrote " + path);
    return 0;
}

struct IngestArgs {
    std::string left, right, labels, id = "example", out_dir;
};

int cmd_ingest(const IngestArgs& a, Logger& log) {
    std::vector<std::string> lpaths = split_csv(a.left);
    std::vector<std::string> rpaths = split_csv(a.right);
    if (lpaths.size() != 3 || rpaths.size() != 3)
        throw UsageError("ingest: --left and --right each need 3 comma-separated PPM paths "
                         "(oldest first)");
    StereoClip clip;
    for (int t = 0; t < 3; ++t) {
        clip.left[static_cast<std::size_t>(t)] = read_ppm(lpaths[static_cast<std::size_t>(t)]);
        clip.right[static_cast<std::size_t>(t)] = read_ppm(rpaths[static_cast<std::size_t>(t)]);
    }
    std::vector<BoundingBox> boxes;
    if (!a.labels.empty()) {
        std::ifstream in(a.labels);
        if (!in) throw ParseError("cannot open " + a.labels);
        std::stringstream ss;
        ss << in.rdbuf();
        boxes = parse_kitti_labels(ss.str());
    }
    Example ex = preprocess(clip, boxes);

    std::filesystem::create_directories(a.out_dir);
    std::string input_rel = a.id + ".sten";
    std::string labels_rel = a.id + ".labels.sten";
    write_sten((std::filesystem::path(a.out_dir) / input_rel).string(), ex.input);
    write_sten((std::filesystem::path(a.out_dir) / labels_rel).string(), ex.labels);

    ManifestEntry e;
    e.id = a.id;
    e.split = "train";
    e.input_path = input_rel;
    e.labels_path = labels_rel;
    std::string mpath = (std::filesystem::path(a.out_dir) / (a.id + ".manifest.jsonl")).string();
    write_manifest(mpath, {e});

    log.info("ingest: " + std::to_string(boxes.size()) + " vehicle boxes, " +
             (ex.degenerate_std ? "degenerate" : "normalized") + " input");
    log.info("wrote " + mpath);
    return 0;
}

// Expands `--config file.json` into flag tokens placed before the explicit
// flags, so command-line values win.
std::vector<std::string> merge_config_args(const std::vector<std::string>& args) {
    std::string config_path;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw UsageError("--config needs a file path");
            config_path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (config_path.empty()) return rest;
    if (rest.empty()) throw UsageError("--config requires a subcommand");

    std::ifstream in(config_path);
    if (!in) throw UsageError("cannot open config " + config_path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config " + config_path + ": " + e.what());
    }
    if (!j.is_object()) throw UsageError("config " + config_path + ": expected a JSON object");

    std::vector<std::string> merged;
    merged.push_back(rest.front());  // subcommand
    for (const auto& [key, value] : j.items()) {
        std::string flag = "--" + key;
        if (value.is_boolean()) {
            if (value.get<bool>()) merged.push_back(flag);
        } else if (value.is_array()) {
            std::string joined;
            for (const auto& item : value) {
                if (!joined.empty()) joined += ",";
                joined += item.is_string() ? item.get<std::string>() : item.dump();
            }
            merged.push_back(flag);
            merged.push_back(joined);
        } else {
            merged.push_back(flag);
            merged.push_back(value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
    merged.insert(merged.end(), rest.begin() + 1, rest.end());
    return merged;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Logger log(err);
    CLI::App app{"stereo sparse-coding vehicle detection toolkit"};
    app.name("stereosparse");
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic stereo-video dataset");
    synth_cmd->add_option("--n", synth.n, "training examples");
    synth_cmd->add_option("--n-test", synth.n_test, "test examples");
    synth_cmd->add_option("--seed", synth.seed, "base scene seed");
    synth_cmd->add_option("--out", synth.out, "output directory")->required();
    synth_cmd->add_option("--width", synth.width, "render width");
    synth_cmd->add_option("--height", synth.height, "render height");
    synth_cmd->add_option("--min-objects", synth.min_objects, "minimum vehicles per scene");
    synth_cmd->add_option("--max-objects", synth.max_objects, "maximum vehicles per scene");
    synth_cmd->add_option("--min-disparity", synth.min_disparity, "closest-object disparity");
    synth_cmd->add_option("--max-disparity", synth.max_disparity, "farthest-object disparity");
    synth_cmd->add_option("--disparity-levels", synth.disparity_levels,
                          "comma-separated fixed disparity values (overrides the range)");
    synth_cmd->add_option("--velocity-scale", synth.velocity_scale,
                          "object speed per unit disparity");
    synth_cmd->add_option("--noise", synth.noise, "sensor noise, 8-bit units");
    synth_cmd->add_flag("--write-disparity", synth.write_disparity,
                        "also write per-pixel disparity maps");
    synth_cmd->add_flag("--inline", synth.inline_entries,
                        "manifest carries seeds instead of materialized tensors");

    TrainDictArgs td;
    auto* td_cmd = app.add_subcommand("train-dict", "Learn a sparse-coding dictionary");
    td_cmd->add_option("--data", td.data, "dataset manifest")->required();
    td_cmd->add_option("--out", td.out, "output dictionary STEN path")->required();
    td_cmd->add_option("--features", td.features, "dictionary atoms");
    td_cmd->add_option("--batches", td.batches, "training batches");
    td_cmd->add_option("--batch-size", td.batch_size, "crops per batch");
    td_cmd->add_option("--lr", td.lr, "learning rate");
    td_cmd->add_option("--seed", td.seed, "training seed");
    td_cmd->add_option("--kernel", td.kernel, "kernel extents TxHxW");
    td_cmd->add_option("--stride", td.stride, "stride TxHxW");
    td_cmd->add_option("--crop-h", td.crop_h, "crop height");
    td_cmd->add_option("--crop-w", td.crop_w, "crop width");
    td_cmd->add_option("--crops-per-example", td.crops_per_example, "virtual crop pool factor");
    td.lca.attach(td_cmd);

    EncodeArgs enc;
    auto* enc_cmd = app.add_subcommand("encode", "Sparse-code one input tensor");
    enc_cmd->add_option("--dict", enc.dict, "dictionary STEN path")->required();
    enc_cmd->add_option("--input", enc.input, "input STEN path")->required();
    enc_cmd->add_option("--out", enc.out, "output activations STEN path")->required();
    enc.lca.attach(enc_cmd);

    TrainNetArgs tn;
    auto* tn_cmd = app.add_subcommand("train-net", "Train a vehicle detector");
    tn_cmd->add_option("--variant", tn.variant,
                       "conv_sup | sparse_unsup | conv_rand | conv_unsup | conv_finetune")
        ->required();
    tn_cmd->add_option("--depth", tn.depth, "layer count (2-4)");
    tn_cmd->add_option("--features", tn.features, "first/mid layer features");
    tn_cmd->add_option("--dict", tn.dict, "dictionary STEN path (dictionary variants)");
    tn_cmd->add_option("--data", tn.data, "dataset manifest")->required();
    tn_cmd->add_option("--n-train", tn.n_train, "training subset size (0 = all)");
    tn_cmd->add_option("--epochs", tn.epochs, "training epochs");
    tn_cmd->add_option("--batch-size", tn.batch_size, "examples per step");
    tn_cmd->add_option("--lr", tn.lr, "Adam learning rate");
    tn_cmd->add_option("--seed", tn.seed, "training seed");
    tn_cmd->add_option("--out", tn.out, "output model path")->required();
    tn_cmd->add_option("--cache", tn.cache, "encode cache directory");
    tn.lca.attach(tn_cmd);

    EvalArgs ev;
    auto* ev_cmd = app.add_subcommand("eval", "Score a model on a dataset split");
    ev_cmd->add_option("--model", ev.model, "model path")->required();
    ev_cmd->add_option("--data", ev.data, "dataset manifest")->required();
    ev_cmd->add_option("--split", ev.split, "train | test | all");
    ev_cmd->add_option("--cache", ev.cache, "encode cache directory");
    ev_cmd->add_option("--out", ev.out, "directory for the PR curve CSV");

    RunMatrixArgs rm;
    auto* rm_cmd = app.add_subcommand("run-matrix", "Train and score a variants x seeds matrix");
    rm_cmd->add_option("--variants", rm.variants, "comma-separated variant list");
    rm_cmd->add_option("--depths", rm.depths, "comma-separated depths");
    rm_cmd->add_option("--n-trains", rm.n_trains, "comma-separated subset sizes (0 = all)");
    rm_cmd->add_option("--seeds", rm.seeds, "comma-separated seeds");
    rm_cmd->add_option("--features", rm.features, "first/mid layer features");
    rm_cmd->add_option("--dict", rm.dict, "dictionary STEN path");
    rm_cmd->add_option("--data", rm.data, "dataset manifest")->required();
    rm_cmd->add_option("--out", rm.out, "output directory")->required();
    rm_cmd->add_option("--cache", rm.cache, "cell/encode cache directory");
    rm_cmd->add_option("--epochs", rm.epochs, "training epochs");
    rm_cmd->add_option("--batch-size", rm.batch_size, "examples per step");
    rm_cmd->add_option("--lr", rm.lr, "Adam learning rate");
    rm.lca.attach(rm_cmd);

    AnalyzeArgs an;
    auto* an_cmd = app.add_subcommand("analyze", "Depth-selectivity report and overlays");
    an_cmd->add_option("--dict", an.dict, "dictionary STEN path")->required();
    an_cmd->add_option("--control-model", an.control_model, "trained convolutional model")
        ->required();
    an_cmd->add_option("--data", an.data, "dataset manifest with disparity maps")->required();
    an_cmd->add_option("--out", an.out, "output directory")->required();
    an_cmd->add_option("--split", an.split, "train | test | all");
    an_cmd->add_option("--overlay-features", an.overlay_features, "features per overlay example");
    an_cmd->add_option("--overlay-examples", an.overlay_examples, "examples to render");
    an_cmd->add_option("--cache", an.cache, "encode cache directory");
    an.lca.attach(an_cmd);

    IngestArgs ing;
    auto* ing_cmd = app.add_subcommand("ingest", "Preprocess stereo PPM frames and KITTI labels");
    ing_cmd->add_option("--left", ing.left, "3 comma-separated left PPMs, oldest first")
        ->required();
    ing_cmd->add_option("--right", ing.right, "3 comma-separated right PPMs, oldest first")
        ->required();
    ing_cmd->add_option("--labels", ing.labels, "KITTI label text file");
    ing_cmd->add_option("--id", ing.id, "example id");
    ing_cmd->add_option("--out-dir", ing.out_dir, "output directory")->required();

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        std::vector<std::string> merged = merge_config_args(args);
        std::vector<const char*> cargv;
        cargv.push_back(argv[0]);
        for (const std::string& s : merged) cargv.push_back(s.c_str());
        app.parse(static_cast<int>(cargv.size()), cargv.data());

        if (synth_cmd->parsed()) {
            nlohmann::json j;
            j["n"] = synth.n;
            j["n-test"] = synth.n_test;
            j["seed"] = synth.seed;
            j["width"] = synth.width;
            j["height"] = synth.height;
            j["min-objects"] = synth.min_objects;
            j["max-objects"] = synth.max_objects;
            j["min-disparity"] = synth.min_disparity;
            j["max-disparity"] = synth.max_disparity;
            if (!synth.disparity_levels.empty()) j["disparity-levels"] = synth.disparity_levels;
            j["velocity-scale"] = synth.velocity_scale;
            j["noise"] = synth.noise;
            j["write-disparity"] = synth.write_disparity;
            j["inline"] = synth.inline_entries;
            int rc = cmd_synth(synth, log);
            write_resolved_config(synth.out, j, log);
            return rc;
        }
        if (td_cmd->parsed()) {
            nlohmann::json j;
            j["data"] = td.data;
            j["features"] = td.features;
            j["batches"] = td.batches;
            j["batch-size"] = td.batch_size;
            j["lr"] = td.lr;
            j["seed"] = td.seed;
            j["kernel"] = td.kernel;
            j["stride"] = td.stride;
            j["crop-h"] = td.crop_h;
            j["crop-w"] = td.crop_w;
            j["crops-per-example"] = td.crops_per_example;
            td.lca.echo(&j);
            int rc = cmd_train_dict(td, log);
            write_resolved_config(std::filesystem::path(td.out).parent_path().string(), j, log);
            return rc;
        }
        if (enc_cmd->parsed()) {
            int rc = cmd_encode(enc, log);
            nlohmann::json j;
            j["dict"] = enc.dict;
            j["input"] = enc.input;
            enc.lca.echo(&j);
            write_resolved_config(std::filesystem::path(enc.out).parent_path().string(), j, log);
            return rc;
        }
        if (tn_cmd->parsed()) {
            nlohmann::json j;
            j["variant"] = tn.variant;
            j["depth"] = tn.depth;
            j["features"] = tn.features;
            if (!tn.dict.empty()) j["dict"] = tn.dict;
            j["data"] = tn.data;
            j["n-train"] = tn.n_train;
            j["epochs"] = tn.epochs;
            j["batch-size"] = tn.batch_size;
            j["lr"] = tn.lr;
            j["seed"] = tn.seed;
            if (!tn.cache.empty()) j["cache"] = tn.cache;
            tn.lca.echo(&j);
            int rc = cmd_train_net(tn, log);
            write_resolved_config(std::filesystem::path(tn.out).parent_path().string(), j, log);
            return rc;
        }
        if (ev_cmd->parsed()) {
            int rc = cmd_eval(ev, log, out);
            if (!ev.out.empty()) {
                nlohmann::json j;
                j["model"] = ev.model;
                j["data"] = ev.data;
                j["split"] = ev.split;
                if (!ev.cache.empty()) j["cache"] = ev.cache;
                write_resolved_config(ev.out, j, log);
            }
            return rc;
        }
        if (rm_cmd->parsed()) {
            nlohmann::json j;
            j["variants"] = rm.variants;
            j["depths"] = rm.depths;
            j["n-trains"] = rm.n_trains;
            j["seeds"] = rm.seeds;
            j["features"] = rm.features;
            if (!rm.dict.empty()) j["dict"] = rm.dict;
            j["data"] = rm.data;
            if (!rm.cache.empty()) j["cache"] = rm.cache;
            j["epochs"] = rm.epochs;
            j["batch-size"] = rm.batch_size;
            j["lr"] = rm.lr;
            rm.lca.echo(&j);
            int rc = cmd_run_matrix(rm, log);
            write_resolved_config(rm.out, j, log);
            return rc;
        }
        if (an_cmd->parsed()) {
            nlohmann::json j;
            j["dict"] = an.dict;
            j["control-model"] = an.control_model;
            j["data"] = an.data;
            j["split"] = an.split;
            j["overlay-features"] = an.overlay_features;
            j["overlay-examples"] = an.overlay_examples;
            if (!an.cache.empty()) j["cache"] = an.cache;
            an.lca.echo(&j);
            int rc = cmd_analyze(an, log, out);
            write_resolved_config(an.out, j, log);
            return rc;
        }
        if (ing_cmd->parsed()) {
            nlohmann::json j;
            j["left"] = ing.left;
            j["right"] = ing.right;
            if (!ing.labels.empty()) j["labels"] = ing.labels;
            j["id"] = ing.id;
            int rc = cmd_ingest(ing, log);
            write_resolved_config(ing.out_dir, j, log);
            return rc;
        }
        err << "no subcommand\n";
        return 2;
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        log.error(e.what());
        return 1;
    }
}

}  // namespace stereosparse
