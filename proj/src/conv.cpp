#include "stereosparse/conv.hpp"

#include <Eigen/Core>

namespace stereosparse {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRowMat = Eigen::Map<RowMat>;
using ConstMapRowMat = Eigen::Map<const RowMat>;

void check_input_kernel(const Tensor& input, const KernelStack& k) {
    if (input.ndim() != 5) {
        throw ShapeError("correlate expects input [b,t,h,w,c], got " + dims_to_string(input.dims));
    }
    if (input.dims[4] != k.cin()) {
        throw ShapeError("input channels " + std::to_string(input.dims[4]) +
                         " != kernel input channels " + std::to_string(k.cin()) + "; input " +
                         dims_to_string(input.dims) + ", kernel " + dims_to_string(k.weights.dims));
    }
}

int out_extent(int in, int kernel, int stride, const Tensor& input, const KernelStack& k) {
    int span = in - kernel;
    if (span < 0 || span % stride != 0) {
        throw ShapeError("kernel does not tile input: input " + dims_to_string(input.dims) +
                         ", kernel " + dims_to_string(k.weights.dims) + ", stride (" +
                         std::to_string(k.stride[0]) + "," + std::to_string(k.stride[1]) + "," +
                         std::to_string(k.stride[2]) + ")");
    }
    return span / stride + 1;
}

// Gather the input patch under every output site into a [sites x K] row-major
// matrix, K = kt*kh*kw*cin, matching the kernel's memory order.
void im2col(const Tensor& input, const KernelStack& k, const std::array<int, 3>& out, float* patches) {
    const int b = input.dims[0], h = input.dims[2], w = input.dims[3], c = input.dims[4];
    const int st = k.stride[0], sh = k.stride[1], sw = k.stride[2];
    const int kt = k.kt(), kh = k.kh(), kw = k.kw();
    const std::int64_t row_w = static_cast<std::int64_t>(w) * c;
    const std::int64_t row_h = static_cast<std::int64_t>(h) * row_w;
    const float* src = input.ptr();
    float* dst = patches;
    for (int bi = 0; bi < b; ++bi) {
        const float* base_b = src + bi * (row_h * input.dims[1]);
        for (int to = 0; to < out[0]; ++to) {
            for (int ho = 0; ho < out[1]; ++ho) {
                for (int wo = 0; wo < out[2]; ++wo) {
                    const float* base = base_b + (to * st) * row_h + (ho * sh) * row_w +
                                        static_cast<std::int64_t>(wo * sw) * c;
                    for (int dt = 0; dt < kt; ++dt) {
                        for (int dh = 0; dh < kh; ++dh) {
                            const float* line = base + dt * row_h + dh * row_w;
                            std::copy(line, line + static_cast<std::int64_t>(kw) * c, dst);
                            dst += static_cast<std::int64_t>(kw) * c;
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

std::array<int, 3> correlate_out_extents(const Tensor& input, const KernelStack& k) {
    check_input_kernel(input, k);
    return {out_extent(input.dims[1], k.kt(), k.stride[0], input, k),
            out_extent(input.dims[2], k.kh(), k.stride[1], input, k),
            out_extent(input.dims[3], k.kw(), k.stride[2], input, k)};
}

Tensor correlate(const Tensor& input, const KernelStack& k) {
    auto out = correlate_out_extents(input, k);
    const int b = input.dims[0];
    const int f = k.features();
    const std::int64_t sites = static_cast<std::int64_t>(b) * out[0] * out[1] * out[2];
    const std::int64_t ksz = k.kernel_size();

    std::vector<float> patches(static_cast<std::size_t>(sites * ksz));
    im2col(input, k, out, patches.data());

    Tensor result = Tensor::zeros({b, out[0], out[1], out[2], f});
    ConstMapRowMat P(patches.data(), sites, ksz);
    ConstMapRowMat W(k.weights.ptr(), f, ksz);
    MapRowMat O(result.ptr(), sites, f);
    O.noalias() = P * W.transpose();
    return result;
}

Tensor reconstruct(const Tensor& activations, const KernelStack& k) {
    if (activations.ndim() != 5) {
        throw ShapeError("reconstruct expects activations [b,t',h',w',f], got " +
                         dims_to_string(activations.dims));
    }
    if (activations.dims[4] != k.features()) {
        throw ShapeError("activation features " + std::to_string(activations.dims[4]) +
                         " != kernel features " + std::to_string(k.features()) + "; activations " +
                         dims_to_string(activations.dims) + ", kernel " + dims_to_string(k.weights.dims));
    }
    const int b = activations.dims[0];
    const int ot = activations.dims[1], oh = activations.dims[2], ow = activations.dims[3];
    const int st = k.stride[0], sh = k.stride[1], sw = k.stride[2];
    const int t = (ot - 1) * st + k.kt();
    const int h = (oh - 1) * sh + k.kh();
    const int w = (ow - 1) * sw + k.kw();
    const int c = k.cin();
    const int f = k.features();
    const std::int64_t sites = static_cast<std::int64_t>(b) * ot * oh * ow;
    const std::int64_t ksz = k.kernel_size();

    // Patch contributions of every site, then scatter-add. Sites are applied
    // in a fixed lexicographic order so overlapping sums are reproducible.
    std::vector<float> cols(static_cast<std::size_t>(sites * ksz));
    ConstMapRowMat A(activations.ptr(), sites, f);
    ConstMapRowMat W(k.weights.ptr(), f, ksz);
    MapRowMat C(cols.data(), sites, ksz);
    C.noalias() = A * W;

    Tensor out = Tensor::zeros({b, t, h, w, c});
    const std::int64_t row_w = static_cast<std::int64_t>(w) * c;
    const std::int64_t row_h = static_cast<std::int64_t>(h) * row_w;
    float* dstbase = out.ptr();
    const float* srow = cols.data();
    for (int bi = 0; bi < b; ++bi) {
        float* base_b = dstbase + bi * (row_h * t);
        for (int to = 0; to < ot; ++to) {
            for (int ho = 0; ho < oh; ++ho) {
                for (int wo = 0; wo < ow; ++wo) {
                    float* base = base_b + (to * st) * row_h + (ho * sh) * row_w +
                                  static_cast<std::int64_t>(wo * sw) * c;
                    for (int dt = 0; dt < k.kt(); ++dt) {
                        for (int dh = 0; dh < k.kh(); ++dh) {
                            float* line = base + dt * row_h + dh * row_w;
                            const std::int64_t n = static_cast<std::int64_t>(k.kw()) * c;
                            for (std::int64_t i = 0; i < n; ++i) line[i] += srow[i];
                            srow += n;
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor correlate_weight_grad(const Tensor& input, const Tensor& grad_out, const KernelStack& k) {
    auto out = correlate_out_extents(input, k);
    std::vector<int> expect = {input.dims[0], out[0], out[1], out[2], k.features()};
    if (grad_out.dims != expect) {
        throw ShapeError("grad_out dims " + dims_to_string(grad_out.dims) + " != correlate output " +
                         dims_to_string(expect));
    }
    const std::int64_t sites = static_cast<std::int64_t>(input.dims[0]) * out[0] * out[1] * out[2];
    const std::int64_t ksz = k.kernel_size();

    std::vector<float> patches(static_cast<std::size_t>(sites * ksz));
    im2col(input, k, out, patches.data());

    Tensor grad = Tensor::zeros(k.weights.dims);
    ConstMapRowMat P(patches.data(), sites, ksz);
    ConstMapRowMat G(grad_out.ptr(), sites, k.features());
    MapRowMat W(grad.ptr(), k.features(), ksz);
    W.noalias() = G.transpose() * P;
    return grad;
}

std::array<int, 2> same_pad_extent(int in, int kernel, int stride) {
    if (in < 1 || kernel < 1 || stride < 1) throw ShapeError("same_pad_extent: non-positive argument");
    int out = (in + stride - 1) / stride;
    int total = std::max(0, (out - 1) * stride + kernel - in);
    return {total / 2, total - total / 2};
}

Tensor pad_thw(const Tensor& x, std::array<int, 3> before, std::array<int, 3> after) {
    if (x.ndim() != 5) throw ShapeError("pad_thw expects [b,t,h,w,c], got " + dims_to_string(x.dims));
    for (int i = 0; i < 3; ++i) {
        if (before[i] < 0 || after[i] < 0) throw ShapeError("negative padding");
    }
    Tensor out = Tensor::zeros({x.dims[0], x.dims[1] + before[0] + after[0],
                                x.dims[2] + before[1] + after[1], x.dims[3] + before[2] + after[2],
                                x.dims[4]});
    const std::int64_t rowbytes = static_cast<std::int64_t>(x.dims[3]) * x.dims[4];
    for (int b = 0; b < x.dims[0]; ++b) {
        for (int t = 0; t < x.dims[1]; ++t) {
            for (int h = 0; h < x.dims[2]; ++h) {
                const float* src = x.ptr() + x.idx5(b, t, h, 0, 0);
                float* dst = out.ptr() + out.idx5(b, t + before[0], h + before[1], before[2], 0);
                std::copy(src, src + rowbytes, dst);
            }
        }
    }
    return out;
}

Tensor crop_thw(const Tensor& x, std::array<int, 3> before, std::array<int, 3> extent) {
    if (x.ndim() != 5) throw ShapeError("crop_thw expects [b,t,h,w,c], got " + dims_to_string(x.dims));
    for (int i = 0; i < 3; ++i) {
        if (before[i] < 0 || extent[i] <= 0 || before[i] + extent[i] > x.dims[i + 1]) {
            throw ShapeError("crop window out of range for " + dims_to_string(x.dims));
        }
    }
    Tensor out = Tensor::zeros({x.dims[0], extent[0], extent[1], extent[2], x.dims[4]});
    const std::int64_t rowbytes = static_cast<std::int64_t>(extent[2]) * x.dims[4];
    for (int b = 0; b < x.dims[0]; ++b) {
        for (int t = 0; t < extent[0]; ++t) {
            for (int h = 0; h < extent[1]; ++h) {
                const float* src = x.ptr() + x.idx5(b, t + before[0], h + before[1], before[2], 0);
                float* dst = out.ptr() + out.idx5(b, t, h, 0, 0);
                std::copy(src, src + rowbytes, dst);
            }
        }
    }
    return out;
}

}  // namespace stereosparse
