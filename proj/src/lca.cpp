#include "stereosparse/lca.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "stereosparse/rng.hpp"

namespace stereosparse {

void LcaConfig::validate() const {
    if (lambda < 0.0f) throw std::domain_error("lambda must be >= 0");
    if (tau <= 0.0f || dt <= 0.0f) throw std::domain_error("tau and dt must be > 0");
    if (dt > tau) throw std::domain_error("dt/tau must lie in (0, 1]");
    if (max_iters <= 0) throw std::domain_error("max_iters must be positive");
    if (stop_tol < 0.0f) throw std::domain_error("stop_tol must be >= 0");
}

Tensor soft_threshold(const Tensor& u, float lambda) {
    if (lambda < 0.0f) throw std::domain_error("soft_threshold: negative lambda");
    Tensor out = u;
    for (float& v : out.data) {
        float mag = std::abs(v) - lambda;
        v = mag > 0.0f ? (v > 0.0f ? mag : -mag) : 0.0f;
    }
    return out;
}

namespace {

EnergyReport energy_from_residual(const Tensor& residual, const Tensor& a, float lambda) {
    EnergyReport r;
    r.recon_err = 0.5 * sum_squares(residual);
    r.sparsity = sum_abs(a);
    r.total = r.recon_err + static_cast<double>(lambda) * r.sparsity;
    r.nnz = count_nonzero(a);
    return r;
}

Tensor residual_of(const Tensor& input, const Tensor& a, const KernelStack& phi) {
    Tensor recon = reconstruct(a, phi);
    if (!recon.same_dims(input)) {
        throw ShapeError("reconstruction dims " + dims_to_string(recon.dims) + " != input dims " +
                         dims_to_string(input.dims));
    }
    Tensor res = input;
    for (std::int64_t i = 0; i < res.numel(); ++i) res.data[i] -= recon.data[i];
    return res;
}

// Fixed-point residual ratio max|drive + a - u| / max|u| of the current
// iterate, which is what du/(dt/tau) measures; it vanishes exactly at the
// LCA fixed point.
double fixed_point_ratio(const LcaState& state, const Tensor& drive) {
    float fp_max = 0.0f;
    float u_max = 0.0f;
    for (std::int64_t i = 0; i < state.u.numel(); ++i) {
        const float fp = drive.data[i] + state.a.data[i] - state.u.data[i];
        fp_max = std::max(fp_max, std::abs(fp));
        u_max = std::max(u_max, std::abs(state.u.data[i]));
    }
    return u_max > 0.0f ? static_cast<double>(fp_max) / static_cast<double>(u_max) : 0.0;
}

// Core update; consumes the drive and residual matching state.a, leaves the
// post-step residual.
void step_with_drive(LcaState& state, const Tensor& input, const KernelStack& phi,
                     const LcaConfig& cfg, const Tensor& drive, Tensor& residual) {
    const float rate = cfg.dt_over_tau();
    for (std::int64_t i = 0; i < state.u.numel(); ++i) {
        const float fp = drive.data[i] + state.a.data[i] - state.u.data[i];
        state.u.data[i] += rate * fp;
    }
    state.a = soft_threshold(state.u, cfg.lambda);
    residual = residual_of(input, state.a, phi);
    state.energy_trace.push_back(energy_from_residual(residual, state.a, cfg.lambda));
}

}  // namespace

EnergyReport energy(const Tensor& input, const Tensor& a, const KernelStack& phi, float lambda) {
    if (lambda < 0.0f) throw std::domain_error("energy: negative lambda");
    return energy_from_residual(residual_of(input, a, phi), a, lambda);
}

LcaState lca_init(const Tensor& input, const KernelStack& phi, const LcaConfig& cfg) {
    cfg.validate();
    auto out = correlate_out_extents(input, phi);
    LcaState state;
    state.u = Tensor::zeros({input.dims[0], out[0], out[1], out[2], phi.features()});
    state.a = state.u;
    Tensor residual = input;
    state.energy_trace.push_back(energy_from_residual(residual, state.a, cfg.lambda));
    return state;
}

LcaState lca_step(LcaState state, const Tensor& input, const KernelStack& phi, const LcaConfig& cfg) {
    cfg.validate();
    Tensor residual = residual_of(input, state.a, phi);
    Tensor drive = correlate(residual, phi);
    step_with_drive(state, input, phi, cfg, drive, residual);
    return state;
}

LcaState lca_encode(const Tensor& input, const KernelStack& phi, const LcaConfig& cfg) {
    LcaState state = lca_init(input, phi, cfg);
    Tensor residual = input;
    const double j0 = state.energy_trace[0].total;
    // The energy stays flat both while u ramps from zero (a not yet fired)
    // and briefly at activation onset, so a flat energy alone does not mean
    // convergence. The drive that would power the next Euler step also gives
    // the fixed-point residual correlate(residual, phi) + a - u, which
    // vanishes only at the true fixed point; require both signals before
    // stopping, and stop before applying the step so the returned iterate is
    // the one the residual bound was checked on.
    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        Tensor drive = correlate(residual, phi);
        if (state.energy_trace.size() >= 2) {
            const auto& tr = state.energy_trace;
            const double last = tr[tr.size() - 1].total;
            const double before = tr[tr.size() - 2].total;
            const double denom = std::max(before, 1e-300);
            if (std::abs(before - last) / denom <= cfg.stop_tol &&
                fixed_point_ratio(state, drive) <= 1e-3)
                break;
        }
        step_with_drive(state, input, phi, cfg, drive, residual);
        const double total = state.energy_trace.back().total;
        if (!std::isfinite(total) || total > 10.0 * j0) {
            throw DivergenceError("lca_encode diverged at iteration " + std::to_string(iter) +
                                  ": energy " + std::to_string(total) + " > 10 * initial " +
                                  std::to_string(j0) + "; dt/tau = " +
                                  std::to_string(cfg.dt_over_tau()));
        }
    }
    return state;
}

LcaState lca_encode_adaptive(const Tensor& input, const KernelStack& phi, LcaConfig cfg,
                             int max_halvings) {
    for (int cut = 0;; ++cut) {
        try {
            return lca_encode(input, phi, cfg);
        } catch (const DivergenceError&) {
            if (cut >= max_halvings) throw;
            cfg.tau *= 2.0f;
        }
    }
}

Tensor ista_oracle(const Tensor& input, const KernelStack& phi, float lambda, int iters) {
    if (lambda < 0.0f) throw std::domain_error("ista_oracle: negative lambda");
    auto out = correlate_out_extents(input, phi);
    const int b = input.dims[0], f = phi.features();
    const std::int64_t n_act = static_cast<std::int64_t>(b) * out[0] * out[1] * out[2] * f;
    if (n_act > 4096) {
        throw std::domain_error("ista_oracle: " + std::to_string(n_act) +
                                " activation variables exceed the 4096 limit");
    }
    const std::int64_t n_in = input.numel();
    const int st = phi.stride[0], sh = phi.stride[1], sw = phi.stride[2];
    const int t = input.dims[1], h = input.dims[2], w = input.dims[3], c = input.dims[4];

    // Dense operator, column j = the input-space footprint of activation j.
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_in, n_act);
    std::int64_t col = 0;
    for (int bi = 0; bi < b; ++bi) {
        for (int to = 0; to < out[0]; ++to) {
            for (int ho = 0; ho < out[1]; ++ho) {
                for (int wo = 0; wo < out[2]; ++wo) {
                    for (int fi = 0; fi < f; ++fi, ++col) {
                        for (int dt = 0; dt < phi.kt(); ++dt) {
                            for (int dh = 0; dh < phi.kh(); ++dh) {
                                for (int dw = 0; dw < phi.kw(); ++dw) {
                                    for (int ci = 0; ci < c; ++ci) {
                                        std::int64_t row =
                                            (((static_cast<std::int64_t>(bi) * t + (to * st + dt)) * h +
                                              (ho * sh + dh)) * w + (wo * sw + dw)) * c + ci;
                                        A(row, col) += phi.weights.at5(fi, dt, dh, dw, ci);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    Eigen::VectorXd target(n_in);
    for (std::int64_t i = 0; i < n_in; ++i) target(i) = input.data[static_cast<std::size_t>(i)];

    // Largest squared singular value via power iteration on A^T A.
    Rng rng(12345);
    Eigen::VectorXd v(n_act);
    for (std::int64_t i = 0; i < n_act; ++i) v(i) = rng.normal();
    v.normalize();
    Eigen::MatrixXd gram = A.transpose() * A;
    double lip = 1.0;
    for (int it = 0; it < 100; ++it) {
        Eigen::VectorXd next = gram * v;
        double norm = next.norm();
        if (norm == 0.0) break;
        lip = norm;
        v = next / norm;
    }
    const double step = 1.0 / (lip * 1.0001 + 1e-12);

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n_act);
    const double shrink = static_cast<double>(lambda) * step;
    for (int it = 0; it < iters; ++it) {
        Eigen::VectorXd grad = A.transpose() * (A * x - target);
        x -= step * grad;
        for (std::int64_t i = 0; i < n_act; ++i) {
            double mag = std::abs(x(i)) - shrink;
            x(i) = mag > 0.0 ? (x(i) > 0.0 ? mag : -mag) : 0.0;
        }
    }

    Tensor result = Tensor::zeros({b, out[0], out[1], out[2], f});
    for (std::int64_t i = 0; i < n_act; ++i) result.data[static_cast<std::size_t>(i)] = static_cast<float>(x(i));
    return result;
}

}  // namespace stereosparse
