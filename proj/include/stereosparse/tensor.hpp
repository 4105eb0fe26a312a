#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stereosparse/errors.hpp"

namespace stereosparse {

enum class AxisRole { None, Batch, Time, Height, Width, Channel };

std::string dims_to_string(const std::vector<int>& dims);

/// Dense N-dimensional float32 array, row-major (slowest axis first).
/// The canonical 5-axis layout is [batch, time, height, width, channel].
struct Tensor {
    std::vector<int> dims;
    std::vector<float> data;
    std::vector<AxisRole> roles;  // optional per-axis tags, may be empty

    Tensor() = default;
    Tensor(std::vector<int> d, std::vector<float> values);

    static Tensor zeros(std::vector<int> d);
    static Tensor full(std::vector<int> d, float value);

    int ndim() const { return static_cast<int>(dims.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool same_dims(const Tensor& other) const { return dims == other.dims; }
    bool all_finite() const;

    float* ptr() { return data.data(); }
    const float* ptr() const { return data.data(); }

    // Flat index for the 5-axis layout. Callers keep hot loops on raw
    // pointers; this is for setup code and tests.
    std::int64_t idx5(int b, int t, int h, int w, int c) const {
        return (((static_cast<std::int64_t>(b) * dims[1] + t) * dims[2] + h) * dims[3] + w) * dims[4] + c;
    }
    float& at5(int b, int t, int h, int w, int c) { return data[idx5(b, t, h, w, c)]; }
    float at5(int b, int t, int h, int w, int c) const { return data[idx5(b, t, h, w, c)]; }

    float& at2(int i, int j) { return data[static_cast<std::int64_t>(i) * dims[1] + j]; }
    float at2(int i, int j) const { return data[static_cast<std::int64_t>(i) * dims[1] + j]; }
};

std::int64_t checked_numel(const std::vector<int>& dims);

/// A stack of convolution kernels: weights [features][kt][kh][kw][cin]
/// applied with strides (st, sh, sw) along time/height/width.
struct KernelStack {
    Tensor weights;
    std::array<int, 3> stride{1, 1, 1};

    KernelStack() = default;
    KernelStack(Tensor w, std::array<int, 3> s);

    int features() const { return weights.dims[0]; }
    int kt() const { return weights.dims[1]; }
    int kh() const { return weights.dims[2]; }
    int kw() const { return weights.dims[3]; }
    int cin() const { return weights.dims[4]; }
    // Elements per kernel, i.e. kt*kh*kw*cin.
    std::int64_t kernel_size() const {
        return weights.numel() / features();
    }
};

struct TensorStats {
    double mean;
    double std;  // population standard deviation
};

/// Mean and population std over all elements. Empty tensor -> std::domain_error.
TensorStats stats(const Tensor& x);

/// Area-average downsampling of the spatial axes of a [b,t,h,w,c] tensor.
/// Each output pixel is the mean of its (possibly fractional) source box.
/// Upsampling requests -> std::domain_error.
Tensor downsample_area(const Tensor& x, int target_h, int target_w);

// Elementwise helpers used across modules. All accumulate in double.
double dot(const Tensor& a, const Tensor& b);
double sum_abs(const Tensor& x);
double sum_squares(const Tensor& x);
std::int64_t count_nonzero(const Tensor& x);

}  // namespace stereosparse
