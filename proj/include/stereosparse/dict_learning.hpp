#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "stereosparse/lca.hpp"
#include "stereosparse/rng.hpp"
#include "stereosparse/tensor.hpp"

namespace stereosparse {

struct DictTrainConfig {
    float lr = 0.01f;
    int batches = 100;
    int batch_size = 16;
    LcaConfig lca;
    std::uint32_t seed = 1;
    void validate() const;
};

struct DictBatchStats {
    EnergyReport mean_energy;   // per-item means over the batch
    double mean_nnz_fraction;   // nnz / activation size, batch mean
    double min_atom_norm;       // post-update atom norms
    double max_atom_norm;
};

struct DictHistory {
    std::vector<DictBatchStats> batches;

    // Moving average (window w) of mean total energy is non-increasing over
    // the final half of training, up to a relative tolerance per step.
    bool smoothed_descent_ok(int window = 10, double tol = 0.05) const;
};

/// Random dataset access for dictionary training; get(i) for i in [0, count).
struct TensorDataset {
    std::function<Tensor(int)> get;
    int count = 0;
};

/// Gradient of the encoding cost with respect to the dictionary, holding the
/// activations fixed: minus the correlation of activations with the residual.
Tensor dict_gradient(const Tensor& input, const Tensor& a, const KernelStack& phi);

/// One descent step followed by per-atom renormalization to unit L2 norm.
/// A zero-norm atom is reinitialized from Gaussian noise drawn from `rng`.
KernelStack dict_update(const KernelStack& phi, const Tensor& grad, float lr, Rng& rng);
KernelStack dict_update(const KernelStack& phi, const Tensor& grad, float lr);

/// Gaussian-initialized dictionary with unit-norm atoms.
KernelStack init_dictionary(int features, int kt, int kh, int kw, int cin,
                            std::array<int, 3> stride, std::uint32_t seed);

/// Alternate LCA encoding with one averaged gradient step per batch. Batch
/// items are drawn from `data` with replacement using the configured seed;
/// the learning rate decays as 1/sqrt(batch) over the second half of
/// training. Atoms whose mean |activation| stays below 1e-6 for 100 batches
/// are reinitialized from noise.
std::pair<KernelStack, DictHistory> train_dictionary(const TensorDataset& data,
                                                     const KernelStack& init,
                                                     const DictTrainConfig& cfg);

}  // namespace stereosparse
