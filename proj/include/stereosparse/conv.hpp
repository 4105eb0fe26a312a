#pragma once

#include "stereosparse/tensor.hpp"

namespace stereosparse {

/// Output extents (t',h',w') of a valid strided correlation. The kernel must
/// tile the input exactly: (extent - kernel) divisible by stride, result > 0.
std::array<int, 3> correlate_out_extents(const Tensor& input, const KernelStack& k);

/// Strided valid cross-correlation (no kernel flip): [b,t,h,w,cin] -> [b,t',h',w',f].
/// output[f] at each site is the dot product of kernel f with the input patch.
Tensor correlate(const Tensor& input, const KernelStack& k);

/// Exact linear adjoint of correlate with the same kernel stack:
/// <correlate(x,k), y> == <x, reconstruct(y,k)> for all x, y.
/// Maps activations [b,t',h',w',f] back to input space [b,t,h,w,cin].
Tensor reconstruct(const Tensor& activations, const KernelStack& k);

/// Gradient of sum(grad_out * correlate(input, k)) with respect to the kernel
/// weights; same dims as k.weights.
Tensor correlate_weight_grad(const Tensor& input, const Tensor& grad_out, const KernelStack& k);

/// Smallest {before, after} zero padding so a strided kernel tiles the
/// input with ceil(in/stride) output sites; the extra unit goes after.
std::array<int, 2> same_pad_extent(int in, int kernel, int stride);

/// Zero padding on the (t,h,w) axes of a [b,t,h,w,c] tensor.
Tensor pad_thw(const Tensor& x, std::array<int, 3> before, std::array<int, 3> after);

/// Crop on the (t,h,w) axes: keep `extent` starting at `before`.
Tensor crop_thw(const Tensor& x, std::array<int, 3> before, std::array<int, 3> extent);

}  // namespace stereosparse
