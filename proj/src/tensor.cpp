#include "stereosparse/tensor.hpp"

#include <cmath>
#include <sstream>

namespace stereosparse {

std::string dims_to_string(const std::vector<int>& dims) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << ',';
        os << dims[i];
    }
    os << ']';
    return os.str();
}

std::int64_t checked_numel(const std::vector<int>& dims) {
    std::int64_t n = 1;
    for (int d : dims) {
        if (d <= 0) throw ShapeError("non-positive dimension in " + dims_to_string(dims));
        if (__builtin_mul_overflow(n, static_cast<std::int64_t>(d), &n)) {
            throw ShapeError("element count overflows int64 in " + dims_to_string(dims));
        }
    }
    return n;
}

Tensor::Tensor(std::vector<int> d, std::vector<float> values) : dims(std::move(d)), data(std::move(values)) {
    if (checked_numel(dims) != static_cast<std::int64_t>(data.size())) {
        throw ShapeError("value count " + std::to_string(data.size()) + " does not match dims " +
                         dims_to_string(dims));
    }
}

Tensor Tensor::zeros(std::vector<int> d) {
    std::int64_t n = checked_numel(d);
    Tensor t;
    t.dims = std::move(d);
    t.data.assign(static_cast<std::size_t>(n), 0.0f);
    return t;
}

Tensor Tensor::full(std::vector<int> d, float value) {
    Tensor t = zeros(std::move(d));
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
}

bool Tensor::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

KernelStack::KernelStack(Tensor w, std::array<int, 3> s) : weights(std::move(w)), stride(s) {
    if (weights.ndim() != 5) {
        throw ShapeError("kernel weights must be 5-d [f][kt][kh][kw][cin], got " +
                         dims_to_string(weights.dims));
    }
    for (int v : stride) {
        if (v <= 0) throw ShapeError("kernel stride must be positive");
    }
}

TensorStats stats(const Tensor& x) {
    if (x.numel() == 0) throw std::domain_error("stats of an empty tensor");
    double sum = 0.0, sumsq = 0.0;
    for (float v : x.data) {
        sum += v;
        sumsq += static_cast<double>(v) * v;
    }
    double n = static_cast<double>(x.numel());
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    if (var < 0.0) var = 0.0;
    return {mean, std::sqrt(var)};
}

namespace {

// Per output cell along one axis: the covered source cells and their
// overlap lengths with the fractional box.
struct AxisBoxes {
    std::vector<int> offsets;           // first source index per output cell
    std::vector<std::vector<double>> w; // overlap weights per output cell
};

AxisBoxes axis_boxes(int src, int dst) {
    AxisBoxes boxes;
    boxes.offsets.resize(dst);
    boxes.w.resize(dst);
    double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        double a = i * scale;
        double b = (i + 1) * scale;
        int first = static_cast<int>(a);
        int last = std::min(src - 1, static_cast<int>(std::ceil(b)) - 1);
        boxes.offsets[i] = first;
        for (int s = first; s <= last; ++s) {
            double overlap = std::min<double>(s + 1, b) - std::max<double>(s, a);
            if (overlap <= 0.0) overlap = 0.0;
            boxes.w[i].push_back(overlap);
        }
    }
    return boxes;
}

}  // namespace

Tensor downsample_area(const Tensor& x, int target_h, int target_w) {
    if (x.ndim() != 5) {
        throw ShapeError("downsample_area expects [b,t,h,w,c], got " + dims_to_string(x.dims));
    }
    int b = x.dims[0], t = x.dims[1], h = x.dims[2], w = x.dims[3], c = x.dims[4];
    if (target_h <= 0 || target_w <= 0 || target_h > h || target_w > w) {
        throw std::domain_error("downsample_area target " + std::to_string(target_h) + "x" +
                                std::to_string(target_w) + " invalid for source " + std::to_string(h) +
                                "x" + std::to_string(w));
    }
    AxisBoxes rows = axis_boxes(h, target_h);
    AxisBoxes cols = axis_boxes(w, target_w);

    Tensor out = Tensor::zeros({b, t, target_h, target_w, c});
    for (int bi = 0; bi < b; ++bi) {
        for (int ti = 0; ti < t; ++ti) {
            for (int i = 0; i < target_h; ++i) {
                const auto& rw = rows.w[i];
                for (int j = 0; j < target_w; ++j) {
                    const auto& cw = cols.w[j];
                    for (int ci = 0; ci < c; ++ci) {
                        double acc = 0.0, wsum = 0.0;
                        for (std::size_t ri = 0; ri < rw.size(); ++ri) {
                            int sr = rows.offsets[i] + static_cast<int>(ri);
                            for (std::size_t cj = 0; cj < cw.size(); ++cj) {
                                int sc = cols.offsets[j] + static_cast<int>(cj);
                                double wgt = rw[ri] * cw[cj];
                                acc += wgt * x.at5(bi, ti, sr, sc, ci);
                                wsum += wgt;
                            }
                        }
                        out.at5(bi, ti, i, j, ci) = static_cast<float>(acc / wsum);
                    }
                }
            }
        }
    }
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    if (!a.same_dims(b)) {
        throw ShapeError("dot: dims " + dims_to_string(a.dims) + " vs " + dims_to_string(b.dims));
    }
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a.data[i]) * b.data[i];
    return acc;
}

double sum_abs(const Tensor& x) {
    double acc = 0.0;
    for (float v : x.data) acc += std::abs(static_cast<double>(v));
    return acc;
}

double sum_squares(const Tensor& x) {
    double acc = 0.0;
    for (float v : x.data) acc += static_cast<double>(v) * v;
    return acc;
}

std::int64_t count_nonzero(const Tensor& x) {
    std::int64_t n = 0;
    for (float v : x.data) n += (v != 0.0f);
    return n;
}

}  // namespace stereosparse
