#include <pybind11/iostream.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "stereosparse/cli.hpp"
#include "stereosparse/conv.hpp"
#include "stereosparse/data.hpp"
#include "stereosparse/dict_learning.hpp"
#include "stereosparse/errors.hpp"
#include "stereosparse/eval.hpp"
#include "stereosparse/lca.hpp"
#include "stereosparse/sten.hpp"
#include "stereosparse/tensor.hpp"

namespace py = pybind11;
using namespace stereosparse;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& arr) {
    std::vector<int> dims(static_cast<std::size_t>(arr.ndim()));
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) {
        dims[static_cast<std::size_t>(i)] = static_cast<int>(arr.shape(i));
    }
    std::vector<float> values(arr.data(), arr.data() + arr.size());
    return Tensor(std::move(dims), std::move(values));
}

py::array_t<float> to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
    py::array_t<float> arr(shape);
    std::copy(t.data.begin(), t.data.end(), arr.mutable_data());
    return arr;
}

KernelStack to_kernels(const FloatArray& weights, std::array<int, 3> stride) {
    Tensor w = to_tensor(weights);
    if (w.ndim() != 5) {
        throw ShapeError("kernel weights must be 5-d [features,kt,kh,kw,cin], got " +
                         dims_to_string(w.dims));
    }
    return KernelStack(std::move(w), stride);
}

LcaConfig make_lca_config(float lam, float tau, float dt, int max_iters, float stop_tol) {
    LcaConfig cfg;
    cfg.lambda = lam;
    cfg.tau = tau;
    cfg.dt = dt;
    cfg.max_iters = max_iters;
    cfg.stop_tol = stop_tol;
    cfg.validate();
    return cfg;
}

py::array_t<double> trace_to_array(const std::vector<EnergyReport>& trace) {
    py::array_t<double> out({static_cast<py::ssize_t>(trace.size()), py::ssize_t{4}});
    auto view = out.mutable_unchecked<2>();
    for (py::ssize_t i = 0; i < view.shape(0); ++i) {
        const EnergyReport& r = trace[static_cast<std::size_t>(i)];
        view(i, 0) = r.recon_err;
        view(i, 1) = r.sparsity;
        view(i, 2) = r.total;
        view(i, 3) = static_cast<double>(r.nnz);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(stereosparse, m) {
    m.doc() = "Convolutional sparse coding and detector toolkit for stereo video";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

    m.def(
        "read_sten", [](const std::string& path) { return to_array(read_sten(path)); },
        py::arg("path"), "Load a STEN tensor file as a float32 array.");

    m.def(
        "write_sten",
        [](const std::string& path, const FloatArray& arr) { write_sten(path, to_tensor(arr)); },
        py::arg("path"), py::arg("array"), "Write a float32 array as a STEN tensor file.");

    m.def(
        "correlate",
        [](const FloatArray& input, const FloatArray& weights, std::array<int, 3> stride) {
            return to_array(correlate(to_tensor(input), to_kernels(weights, stride)));
        },
        py::arg("input"), py::arg("weights"), py::arg("stride") = std::array<int, 3>{1, 1, 1},
        "Strided valid cross-correlation: [b,t,h,w,cin] -> [b,t',h',w',features].");

    m.def(
        "reconstruct",
        [](const FloatArray& acts, const FloatArray& weights, std::array<int, 3> stride) {
            return to_array(reconstruct(to_tensor(acts), to_kernels(weights, stride)));
        },
        py::arg("activations"), py::arg("weights"), py::arg("stride") = std::array<int, 3>{1, 1, 1},
        "Adjoint of correlate: activations back to input space.");

    m.def(
        "soft_threshold",
        [](const FloatArray& u, float lam) { return to_array(soft_threshold(to_tensor(u), lam)); },
        py::arg("u"), py::arg("lam"), "Elementwise shrinkage sign(u) * max(|u| - lam, 0).");

    m.def(
        "lca_encode",
        [](const FloatArray& input, const FloatArray& weights, std::array<int, 3> stride, float lam,
           float tau, float dt, int max_iters, float stop_tol, bool adaptive) {
            const Tensor x = to_tensor(input);
            const KernelStack phi = to_kernels(weights, stride);
            const LcaConfig cfg = make_lca_config(lam, tau, dt, max_iters, stop_tol);
            LcaState state = adaptive ? lca_encode_adaptive(x, phi, cfg) : lca_encode(x, phi, cfg);
            py::dict out;
            out["a"] = to_array(state.a);
            out["u"] = to_array(state.u);
            out["trace"] = trace_to_array(state.energy_trace);
            return out;
        },
        py::arg("input"), py::arg("weights"), py::arg("stride") = std::array<int, 3>{1, 1, 1},
        py::arg("lam") = 0.1f, py::arg("tau") = 10.0f, py::arg("dt") = 1.0f,
        py::arg("max_iters") = 400, py::arg("stop_tol") = 1e-4f, py::arg("adaptive") = true,
        "Sparse-code an input against a dictionary. Returns activations, membrane\n"
        "potentials, and the per-iteration energy trace (recon_err, l1, total, nnz).");

    m.def(
        "ista_oracle",
        [](const FloatArray& input, const FloatArray& weights, std::array<int, 3> stride, float lam,
           int iters) {
            return to_array(ista_oracle(to_tensor(input), to_kernels(weights, stride), lam, iters));
        },
        py::arg("input"), py::arg("weights"), py::arg("stride") = std::array<int, 3>{1, 1, 1},
        py::arg("lam") = 0.1f, py::arg("iters") = 2000,
        "Dense proximal-gradient reference solver for small problems.");

    m.def(
        "init_dictionary",
        [](int features, std::array<int, 3> kernel, int cin, std::array<int, 3> stride,
           std::uint32_t seed) {
            return to_array(
                init_dictionary(features, kernel[0], kernel[1], kernel[2], cin, stride, seed)
                    .weights);
        },
        py::arg("features"), py::arg("kernel"), py::arg("cin"),
        py::arg("stride") = std::array<int, 3>{1, 1, 1}, py::arg("seed") = 1,
        "Gaussian dictionary with unit-norm atoms, [features,kt,kh,kw,cin].");

    m.def(
        "dict_gradient",
        [](const FloatArray& input, const FloatArray& acts, const FloatArray& weights,
           std::array<int, 3> stride) {
            return to_array(
                dict_gradient(to_tensor(input), to_tensor(acts), to_kernels(weights, stride)));
        },
        py::arg("input"), py::arg("activations"), py::arg("weights"),
        py::arg("stride") = std::array<int, 3>{1, 1, 1},
        "Gradient of the encoding cost w.r.t. the dictionary at fixed activations.");

    m.def(
        "train_dictionary",
        [](const std::vector<FloatArray>& data, const FloatArray& init,
           std::array<int, 3> stride, float lr, int batches, int batch_size, std::uint32_t seed,
           float lam, float tau, float dt, int max_iters, float stop_tol) {
            std::vector<Tensor> items;
            items.reserve(data.size());
            for (const FloatArray& arr : data) {
                Tensor t = to_tensor(arr);
                if (t.ndim() == 4) t.dims.insert(t.dims.begin(), 1);
                items.push_back(std::move(t));
            }
            TensorDataset ds;
            ds.count = static_cast<int>(items.size());
            ds.get = [items = std::move(items)](int i) { return items[static_cast<std::size_t>(i)]; };
            DictTrainConfig cfg;
            cfg.lr = lr;
            cfg.batches = batches;
            cfg.batch_size = batch_size;
            cfg.seed = seed;
            cfg.lca = make_lca_config(lam, tau, dt, max_iters, stop_tol);
            auto [phi, history] = train_dictionary(ds, to_kernels(init, stride), cfg);
            py::array_t<double> hist(
                {static_cast<py::ssize_t>(history.batches.size()), py::ssize_t{7}});
            auto view = hist.mutable_unchecked<2>();
            for (py::ssize_t i = 0; i < view.shape(0); ++i) {
                const DictBatchStats& s = history.batches[static_cast<std::size_t>(i)];
                view(i, 0) = s.mean_energy.recon_err;
                view(i, 1) = s.mean_energy.sparsity;
                view(i, 2) = s.mean_energy.total;
                view(i, 3) = static_cast<double>(s.mean_energy.nnz);
                view(i, 4) = s.mean_nnz_fraction;
                view(i, 5) = s.min_atom_norm;
                view(i, 6) = s.max_atom_norm;
            }
            return py::make_tuple(to_array(phi.weights), hist);
        },
        py::arg("data"), py::arg("init"), py::arg("stride") = std::array<int, 3>{1, 1, 1},
        py::arg("lr") = 0.01f, py::arg("batches") = 100, py::arg("batch_size") = 16,
        py::arg("seed") = 1, py::arg("lam") = 0.1f, py::arg("tau") = 10.0f, py::arg("dt") = 1.0f,
        py::arg("max_iters") = 400, py::arg("stop_tol") = 1e-4f,
        "Alternate sparse coding and averaged dictionary descent over a list of\n"
        "[t,h,w,c] (or [1,t,h,w,c]) inputs. Returns (weights, history) where the\n"
        "history columns are recon_err, l1, total, nnz, nnz_fraction, min and max\n"
        "atom norm per batch.");

    m.def(
        "synth_example",
        [](std::uint32_t seed, int width, int height, int min_objects, int max_objects,
           double min_disparity, double max_disparity, std::vector<double> disparity_levels,
           double velocity_scale, double noise) {
            SynthParams params;
            params.width = width;
            params.height = height;
            params.min_objects = min_objects;
            params.max_objects = max_objects;
            params.min_disparity = min_disparity;
            params.max_disparity = max_disparity;
            params.disparity_levels = std::move(disparity_levels);
            params.velocity_scale = velocity_scale;
            params.noise = noise;
            const SynthScene scene = synth_scene(seed, params);
            const Example ex = preprocess(scene.clip, scene.boxes);
            py::dict out;
            out["input"] = to_array(ex.input);
            out["labels"] = to_array(ex.labels);
            out["disparity"] = to_array(disparity_to_frame(scene.disparity));
            return out;
        },
        py::arg("seed"), py::arg("width") = 512, py::arg("height") = 128,
        py::arg("min_objects") = 1, py::arg("max_objects") = 3, py::arg("min_disparity") = 2.0,
        py::arg("max_disparity") = 12.0, py::arg("disparity_levels") = std::vector<double>{},
        py::arg("velocity_scale") = 0.8, py::arg("noise") = 6.0,
        "Render one synthetic stereo scene and preprocess it. Returns the\n"
        "[3,64,256,6] input, the [4,8] window labels, and the planted per-pixel\n"
        "disparity map at frame resolution.");

    m.def(
        "window_labels",
        [](const std::vector<std::array<double, 4>>& boxes) {
            std::vector<BoundingBox> bb;
            bb.reserve(boxes.size());
            for (const auto& b : boxes) {
                BoundingBox box;
                box.class_name = "Car";
                box.left = b[0];
                box.top = b[1];
                box.right = b[2];
                box.bottom = b[3];
                bb.push_back(box);
            }
            return to_array(window_labels(bb));
        },
        py::arg("boxes"),
        "Window label grid for (left, top, right, bottom) boxes in 256x64 frame "
        "pixels.");

    m.def(
        "pr_curve",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
            const PRCurve curve = pr_curve(scores, labels);
            py::array_t<double> out(
                {static_cast<py::ssize_t>(curve.points.size()), py::ssize_t{2}});
            auto view = out.mutable_unchecked<2>();
            for (py::ssize_t i = 0; i < view.shape(0); ++i) {
                view(i, 0) = curve.points[static_cast<std::size_t>(i)].recall;
                view(i, 1) = curve.points[static_cast<std::size_t>(i)].precision;
            }
            return out;
        },
        py::arg("scores"), py::arg("labels"),
        "Precision-recall sweep as an [n,2] array of (recall, precision) rows.");

    m.def(
        "pr_auc",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
            return auc(pr_curve(scores, labels));
        },
        py::arg("scores"), py::arg("labels"), "Area under the precision-recall curve.");

    m.def(
        "downsample_area",
        [](const FloatArray& x, int target_h, int target_w) {
            return to_array(downsample_area(to_tensor(x), target_h, target_w));
        },
        py::arg("x"), py::arg("target_h"), py::arg("target_w"),
        "Area-average the spatial axes of a [b,t,h,w,c] tensor.");

    m.def(
        "cli",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv;
            argv.reserve(args.size() + 1);
            argv.push_back("stereosparse");
            for (const std::string& a : args) argv.push_back(a.c_str());
            py::scoped_ostream_redirect out_guard(std::cout, py::module_::import("sys").attr("stdout"));
            py::scoped_ostream_redirect err_guard(std::cerr, py::module_::import("sys").attr("stderr"));
            return run_cli(static_cast<int>(argv.size()), argv.data(), std::cout, std::cerr);
        },
        py::arg("args"),
        "Run a stereosparse CLI subcommand in-process; returns the exit code.");
}
