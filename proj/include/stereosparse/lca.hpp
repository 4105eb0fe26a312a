#pragma once

#include <cstdint>
#include <vector>

#include "stereosparse/conv.hpp"
#include "stereosparse/tensor.hpp"

namespace stereosparse {

struct LcaConfig {
    float lambda = 0.1f;    // sparsity weight, >= 0
    float tau = 10.0f;      // time constant, > 0
    float dt = 1.0f;        // integration step, 0 < dt <= tau
    int max_iters = 400;
    float stop_tol = 1e-4f; // relative energy-change stopping threshold

    float dt_over_tau() const { return dt / tau; }
    void validate() const;
};

struct EnergyReport {
    double recon_err;   // 0.5 * ||I - a (*) phi||^2
    double sparsity;    // ||a||_1
    double total;       // recon_err + lambda * sparsity
    std::int64_t nnz;   // nonzero activations
};

/// Membrane potentials, activations, and the energy history of one encode.
/// a == soft_threshold(u, lambda) holds after every step.
struct LcaState {
    Tensor u;
    Tensor a;
    std::vector<EnergyReport> energy_trace;
};

/// Elementwise shrinkage sign(u) * max(|u| - lambda, 0).
Tensor soft_threshold(const Tensor& u, float lambda);

EnergyReport energy(const Tensor& input, const Tensor& a, const KernelStack& phi, float lambda);

/// Fresh state with u = a = 0 and the initial energy as trace[0].
LcaState lca_init(const Tensor& input, const KernelStack& phi, const LcaConfig& cfg);

/// One Euler step of the LCA dynamics:
///   u += (dt/tau) * (correlate(input - reconstruct(a), phi) + a - u)
///   a  = soft_threshold(u, lambda)
/// Appends the post-step energy to the trace.
LcaState lca_step(LcaState state, const Tensor& input, const KernelStack& phi, const LcaConfig& cfg);

/// Run lca_step from u = 0 until max_iters, or until the relative energy
/// change drops to stop_tol at an iterate that is also an approximate
/// fixed point (du-based residual ratio <= 1e-3, so a flat energy during
/// the initial sub-threshold ramp does not end the run). Throws
/// DivergenceError if the energy exceeds 10x its initial value.
///
/// Euler integration is stable only while the dictionary's Gram spectral
/// radius stays under 2*tau/dt; trained dictionaries can exceed that at
/// the default rate through shift self-coherence of structured atoms.
LcaState lca_encode(const Tensor& input, const KernelStack& phi, const LcaConfig& cfg);

/// lca_encode, doubling tau and retrying when the solver diverges. The
/// LCA fixed point does not depend on the integration rate, so a slower
/// rate recovers the same code; the retry trigger is deterministic per
/// input. Rethrows the final DivergenceError once max_halvings rate cuts
/// are exhausted.
LcaState lca_encode_adaptive(const Tensor& input, const KernelStack& phi, LcaConfig cfg,
                             int max_halvings = 4);

/// Independent proximal-gradient reference solver on the dense, flattened
/// problem. Builds the dense operator by direct index arithmetic, estimates
/// the Lipschitz constant by power iteration, then runs ISTA for `iters`
/// steps in double precision. Refuses problems above 4096 activation
/// variables.
Tensor ista_oracle(const Tensor& input, const KernelStack& phi, float lambda, int iters);

}  // namespace stereosparse
