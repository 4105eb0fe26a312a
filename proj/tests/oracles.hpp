#pragma once

// Reference implementations the tests compare the library against. Everything
// here is written the most direct way available (nested loops, full sorts,
// dense enumeration) and shares no code with src/.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "stereosparse/tensor.hpp"

namespace oracle {

using stereosparse::KernelStack;
using stereosparse::Tensor;

// Strided valid cross-correlation by seven nested loops.
inline Tensor naive_correlate(const Tensor& x, const KernelStack& k) {
    const int b = x.dims[0], t = x.dims[1], h = x.dims[2], w = x.dims[3], ci = x.dims[4];
    const int f = k.features(), kt = k.kt(), kh = k.kh(), kw = k.kw();
    const int st = k.stride[0], sh = k.stride[1], sw = k.stride[2];
    const int ot = (t - kt) / st + 1, oh = (h - kh) / sh + 1, ow = (w - kw) / sw + 1;
    Tensor out = Tensor::zeros({b, ot, oh, ow, f});
    for (int bi = 0; bi < b; ++bi)
        for (int i = 0; i < ot; ++i)
            for (int j = 0; j < oh; ++j)
                for (int l = 0; l < ow; ++l)
                    for (int fi = 0; fi < f; ++fi) {
                        double acc = 0.0;
                        for (int a = 0; a < kt; ++a)
                            for (int bb = 0; bb < kh; ++bb)
                                for (int cc = 0; cc < kw; ++cc)
                                    for (int ch = 0; ch < ci; ++ch)
                                        acc += static_cast<double>(x.at5(bi, i * st + a, j * sh + bb,
                                                                         l * sw + cc, ch)) *
                                               k.weights.at5(fi, a, bb, cc, ch);
                        out.at5(bi, i, j, l, fi) = static_cast<float>(acc);
                    }
    return out;
}

// Adjoint of naive_correlate by scatter-add.
inline Tensor naive_reconstruct(const Tensor& y, const KernelStack& k,
                                std::array<int, 3> in_extent) {
    const int b = y.dims[0], ot = y.dims[1], oh = y.dims[2], ow = y.dims[3], f = y.dims[4];
    const int kt = k.kt(), kh = k.kh(), kw = k.kw(), ci = k.cin();
    const int st = k.stride[0], sh = k.stride[1], sw = k.stride[2];
    Tensor out = Tensor::zeros({b, in_extent[0], in_extent[1], in_extent[2], ci});
    for (int bi = 0; bi < b; ++bi)
        for (int i = 0; i < ot; ++i)
            for (int j = 0; j < oh; ++j)
                for (int l = 0; l < ow; ++l)
                    for (int fi = 0; fi < f; ++fi) {
                        const float v = y.at5(bi, i, j, l, fi);
                        if (v == 0.0f) continue;
                        for (int a = 0; a < kt; ++a)
                            for (int bb = 0; bb < kh; ++bb)
                                for (int cc = 0; cc < kw; ++cc)
                                    for (int ch = 0; ch < ci; ++ch)
                                        out.at5(bi, i * st + a, j * sh + bb, l * sw + cc, ch) +=
                                            v * k.weights.at5(fi, a, bb, cc, ch);
                    }
    return out;
}

// Sparse-coding energy evaluated through the naive reconstruction.
inline double naive_energy(const Tensor& input, const Tensor& a, const KernelStack& phi,
                           double lambda) {
    std::array<int, 3> extent{input.dims[1], input.dims[2], input.dims[3]};
    const Tensor recon = naive_reconstruct(a, phi, extent);
    double err = 0.0;
    for (std::int64_t i = 0; i < input.numel(); ++i) {
        const double d = static_cast<double>(input.data[i]) - recon.data[i];
        err += d * d;
    }
    double l1 = 0.0;
    for (float v : a.data) l1 += std::abs(static_cast<double>(v));
    return 0.5 * err + lambda * l1;
}

struct MeanStd {
    double mean;
    double std;
};

// Two-pass mean / population standard deviation.
inline MeanStd two_pass_stats(const std::vector<float>& v) {
    double mean = 0.0;
    for (float x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (float x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return {mean, std::sqrt(var)};
}

// Fractional-box area-average downsampling of one [h,w] plane.
inline double box_mean(const std::function<double(int, int)>& at, int h, int w, int H, int W,
                       int oi, int oj) {
    const double y0 = static_cast<double>(oi) * h / H, y1 = static_cast<double>(oi + 1) * h / H;
    const double x0 = static_cast<double>(oj) * w / W, x1 = static_cast<double>(oj + 1) * w / W;
    double total = 0.0;
    for (int r = static_cast<int>(std::floor(y0)); r < static_cast<int>(std::ceil(y1)); ++r) {
        const double wy = std::min<double>(r + 1, y1) - std::max<double>(r, y0);
        if (wy <= 0) continue;
        for (int c = static_cast<int>(std::floor(x0)); c < static_cast<int>(std::ceil(x1)); ++c) {
            const double wx = std::min<double>(c + 1, x1) - std::max<double>(c, x0);
            if (wx <= 0) continue;
            total += wy * wx * at(r, c);
        }
    }
    return total / ((y1 - y0) * (x1 - x0));
}

struct PRPointRef {
    double recall;
    double precision;
};

// Brute-force threshold enumeration: one point per distinct score, descending.
inline std::vector<PRPointRef> enumerate_pr(const std::vector<double>& scores,
                                            const std::vector<int>& labels) {
    std::vector<double> thresholds = scores;
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    double positives = 0.0;
    for (int l : labels) positives += l;
    std::vector<PRPointRef> pts;
    for (double t : thresholds) {
        double tp = 0.0, predicted = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= t) {
                predicted += 1.0;
                tp += labels[i];
            }
        }
        pts.push_back({tp / positives, tp / predicted});
    }
    return pts;
}

// Trapezoid over recall with the first precision extended to recall 0.
inline double enumerate_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    const std::vector<PRPointRef> pts = enumerate_pr(scores, labels);
    double area = 0.0, prev_r = 0.0, prev_p = pts.front().precision;
    for (const PRPointRef& p : pts) {
        area += (p.recall - prev_r) * (p.precision + prev_p) * 0.5;
        prev_r = p.recall;
        prev_p = p.precision;
    }
    return area;
}

// Half-open 16x32-pixel windows on the 64x256 frame; positive iff the
// intersection area with any (l,t,r,b) box is strictly positive.
inline std::vector<int> window_label_grid(const std::vector<std::array<double, 4>>& boxes) {
    std::vector<int> grid(4 * 8, 0);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 8; ++c) {
            const double wy0 = 16.0 * r, wy1 = wy0 + 16.0;
            const double wx0 = 32.0 * c, wx1 = wx0 + 32.0;
            for (const auto& b : boxes) {
                const double ix = std::min(b[2], wx1) - std::max(b[0], wx0);
                const double iy = std::min(b[3], wy1) - std::max(b[1], wy0);
                if (ix > 0.0 && iy > 0.0) {
                    grid[static_cast<std::size_t>(r * 8 + c)] = 1;
                    break;
                }
            }
        }
    return grid;
}

// Central finite difference of a scalar functional at data[i].
inline double central_diff(const std::function<double()>& f, float* slot, double h) {
    const float saved = *slot;
    *slot = static_cast<float>(saved + h);
    const double up = f();
    *slot = static_cast<float>(saved - h);
    const double down = f();
    *slot = saved;
    return (up - down) / (2.0 * h);
}

// Best |cosine| between one planted atom and any learned atom.
inline double best_match_abs_cosine(const std::vector<float>& planted,
                                    const Tensor& learned_weights) {
    const std::int64_t size = learned_weights.numel() / learned_weights.dims[0];
    double best = 0.0;
    for (int f = 0; f < learned_weights.dims[0]; ++f) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::int64_t i = 0; i < size; ++i) {
            const double a = planted[static_cast<std::size_t>(i)];
            const double b = learned_weights.data[f * size + i];
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        if (na > 0 && nb > 0) best = std::max(best, std::abs(dot) / std::sqrt(na * nb));
    }
    return best;
}

}  // namespace oracle
