#include "stereosparse/dict_learning.hpp"

#include <cmath>

namespace stereosparse {

void DictTrainConfig::validate() const {
    if (lr <= 0.0f) throw std::domain_error("dictionary lr must be > 0");
    if (batches < 0 || batch_size <= 0) throw std::domain_error("batch counts must be positive");
    lca.validate();
}

bool DictHistory::smoothed_descent_ok(int window, double tol) const {
    const int n = static_cast<int>(batches.size());
    if (n < 2 * window) return true;  // too short to judge
    std::vector<double> ma;
    for (int i = 0; i + window <= n; ++i) {
        double s = 0.0;
        for (int j = i; j < i + window; ++j) s += batches[j].mean_energy.total;
        ma.push_back(s / window);
    }
    const int start = static_cast<int>(ma.size()) / 2;
    for (std::size_t i = start; i + 1 < ma.size(); ++i) {
        if (ma[i + 1] > ma[i] * (1.0 + tol)) return false;
    }
    return true;
}

Tensor dict_gradient(const Tensor& input, const Tensor& a, const KernelStack& phi) {
    Tensor recon = reconstruct(a, phi);
    if (!recon.same_dims(input)) {
        throw ShapeError("dict_gradient: reconstruction dims " + dims_to_string(recon.dims) +
                         " != input dims " + dims_to_string(input.dims));
    }
    Tensor residual = input;
    for (std::int64_t i = 0; i < residual.numel(); ++i) residual.data[i] -= recon.data[i];
    Tensor grad = correlate_weight_grad(residual, a, phi);
    for (float& v : grad.data) v = -v;
    return grad;
}

namespace {

void renormalize_atoms(KernelStack& phi, Rng& rng) {
    const std::int64_t ksz = phi.kernel_size();
    for (int f = 0; f < phi.features(); ++f) {
        float* atom = phi.weights.ptr() + f * ksz;
        double norm2 = 0.0;
        for (std::int64_t i = 0; i < ksz; ++i) norm2 += static_cast<double>(atom[i]) * atom[i];
        double norm = std::sqrt(norm2);
        if (norm < 1e-12) {
            norm2 = 0.0;
            for (std::int64_t i = 0; i < ksz; ++i) {
                atom[i] = static_cast<float>(rng.normal());
                norm2 += static_cast<double>(atom[i]) * atom[i];
            }
            norm = std::sqrt(norm2);
        }
        const float scale = static_cast<float>(1.0 / norm);
        for (std::int64_t i = 0; i < ksz; ++i) atom[i] *= scale;
    }
}

void reinit_atom(KernelStack& phi, int f, Rng& rng) {
    const std::int64_t ksz = phi.kernel_size();
    float* atom = phi.weights.ptr() + f * ksz;
    double norm2 = 0.0;
    for (std::int64_t i = 0; i < ksz; ++i) {
        atom[i] = static_cast<float>(rng.normal());
        norm2 += static_cast<double>(atom[i]) * atom[i];
    }
    const float scale = static_cast<float>(1.0 / std::sqrt(norm2));
    for (std::int64_t i = 0; i < ksz; ++i) atom[i] *= scale;
}

double atom_norm(const KernelStack& phi, int f) {
    const std::int64_t ksz = phi.kernel_size();
    const float* atom = phi.weights.ptr() + f * ksz;
    double norm2 = 0.0;
    for (std::int64_t i = 0; i < ksz; ++i) norm2 += static_cast<double>(atom[i]) * atom[i];
    return std::sqrt(norm2);
}

}  // namespace

KernelStack dict_update(const KernelStack& phi, const Tensor& grad, float lr, Rng& rng) {
    if (lr <= 0.0f) throw std::domain_error("dict_update: lr must be > 0");
    if (!grad.same_dims(phi.weights)) {
        throw ShapeError("dict_update: grad dims " + dims_to_string(grad.dims) + " != dict dims " +
                         dims_to_string(phi.weights.dims));
    }
    KernelStack next = phi;
    for (std::int64_t i = 0; i < next.weights.numel(); ++i) {
        next.weights.data[i] -= lr * grad.data[i];
    }
    renormalize_atoms(next, rng);
    return next;
}

KernelStack dict_update(const KernelStack& phi, const Tensor& grad, float lr) {
    Rng rng(0xd1c7u);
    return dict_update(phi, grad, lr, rng);
}

KernelStack init_dictionary(int features, int kt, int kh, int kw, int cin,
                            std::array<int, 3> stride, std::uint32_t seed) {
    if (features <= 0 || kt <= 0 || kh <= 0 || kw <= 0 || cin <= 0) {
        throw std::domain_error("init_dictionary: all extents must be positive");
    }
    Rng rng(seed);
    KernelStack phi(Tensor::zeros({features, kt, kh, kw, cin}), stride);
    for (int f = 0; f < features; ++f) reinit_atom(phi, f, rng);
    return phi;
}

std::pair<KernelStack, DictHistory> train_dictionary(const TensorDataset& data,
                                                     const KernelStack& init,
                                                     const DictTrainConfig& cfg) {
    cfg.validate();
    if (data.count <= 0 && cfg.batches > 0) throw std::domain_error("train_dictionary: empty dataset");

    KernelStack phi = init;
    DictHistory history;
    Rng rng(cfg.seed);

    const int half = cfg.batches / 2;
    const int atoms = phi.features();
    std::vector<std::vector<double>> abs_history(atoms);  // per-atom mean |a| per batch

    for (int batch = 0; batch < cfg.batches; ++batch) {
        Tensor grad_sum;
        double recon = 0.0, sparsity = 0.0, total = 0.0, nnz_frac = 0.0;
        std::vector<double> atom_abs(atoms, 0.0);
        std::int64_t act_size = 0;

        for (int item = 0; item < cfg.batch_size; ++item) {
            Tensor input = data.get(rng.uniform_int(data.count));
            LcaState state;
            try {
                state = lca_encode(input, phi, cfg.lca);
            } catch (const DivergenceError& e) {
                throw DivergenceError("batch " + std::to_string(batch) + ": " + e.what());
            }
            Tensor g = dict_gradient(input, state.a, phi);
            if (grad_sum.numel() == 0) {
                grad_sum = std::move(g);
            } else {
                for (std::int64_t i = 0; i < grad_sum.numel(); ++i) grad_sum.data[i] += g.data[i];
            }
            const EnergyReport& e = state.energy_trace.back();
            recon += e.recon_err;
            sparsity += e.sparsity;
            total += e.total;
            act_size = state.a.numel();
            nnz_frac += static_cast<double>(e.nnz) / static_cast<double>(act_size);

            // Feature is the fastest activation axis.
            for (std::int64_t i = 0; i < state.a.numel(); ++i) {
                atom_abs[static_cast<int>(i % atoms)] += std::abs(state.a.data[i]);
            }
        }

        const float inv = 1.0f / static_cast<float>(cfg.batch_size);
        for (float& v : grad_sum.data) v *= inv;

        // Mean gradient keeps lr batch-size independent; decay after halfway.
        float lr_b = cfg.lr;
        if (batch + 1 > half && half > 0) {
            lr_b = cfg.lr * static_cast<float>(std::sqrt(static_cast<double>(half) / (batch + 1)));
        }
        phi = dict_update(phi, grad_sum, lr_b, rng);

        const std::int64_t per_atom_sites = act_size / atoms;
        for (int f = 0; f < atoms; ++f) {
            abs_history[f].push_back(atom_abs[f] / (cfg.batch_size * static_cast<double>(per_atom_sites)));
        }
        // An atom dead for the last 100 batches gets a fresh start.
        for (int f = 0; f < atoms; ++f) {
            if (static_cast<int>(abs_history[f].size()) < 100) continue;
            double mean = 0.0;
            for (std::size_t i = abs_history[f].size() - 100; i < abs_history[f].size(); ++i) {
                mean += abs_history[f][i];
            }
            mean /= 100.0;
            if (mean < 1e-6) {
                reinit_atom(phi, f, rng);
                abs_history[f].clear();
            }
        }

        DictBatchStats stats;
        stats.mean_energy = {recon / cfg.batch_size, sparsity / cfg.batch_size,
                             total / cfg.batch_size, 0};
        stats.mean_nnz_fraction = nnz_frac / cfg.batch_size;
        stats.min_atom_norm = atom_norm(phi, 0);
        stats.max_atom_norm = stats.min_atom_norm;
        for (int f = 1; f < atoms; ++f) {
            double n = atom_norm(phi, f);
            stats.min_atom_norm = std::min(stats.min_atom_norm, n);
            stats.max_atom_norm = std::max(stats.max_atom_norm, n);
        }
        history.batches.push_back(stats);
    }
    return {phi, history};
}

}  // namespace stereosparse
