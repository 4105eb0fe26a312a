#include <cmath>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "oracles.hpp"
#include "stereosparse/dict_learning.hpp"
#include "stereosparse/lca.hpp"
#include "stereosparse/rng.hpp"

using namespace stereosparse;

namespace {

Tensor random_tensor(std::vector<int> dims, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(dims));
    for (float& v : t.data) v = static_cast<float>(rng.normal());
    return t;
}

double trace_energy(const Tensor& input, const Tensor& a, const KernelStack& phi, float lambda) {
    return energy(input, a, phi, lambda).total;
}

}  // namespace

TEST_CASE("soft_threshold analytic cases") {
    Tensor u({3}, {1.2f, 0.3f, -2.0f});
    Tensor a = soft_threshold(u, 0.5f);
    CHECK(a.data[0] == doctest::Approx(0.7f));
    CHECK(a.data[1] == doctest::Approx(0.0f));
    CHECK(a.data[2] == doctest::Approx(-1.5f));
    CHECK_THROWS_AS(soft_threshold(u, -0.1f), std::domain_error);
}

TEST_CASE("soft_threshold is scale covariant") {
    Rng rng(3);
    Tensor u = random_tensor({32}, rng);
    const float lam = 0.2f, c = 3.5f;
    Tensor scaled = u;
    for (float& v : scaled.data) v *= c;
    Tensor lhs = soft_threshold(scaled, c * lam);
    Tensor rhs = soft_threshold(u, lam);
    for (std::int64_t i = 0; i < u.numel(); ++i)
        CHECK(lhs.data[i] == doctest::Approx(c * rhs.data[i]).epsilon(1e-5));
}

TEST_CASE("energy terms for exact and empty codes") {
    // One atom, one site: input equal to the atom scaled by the activation.
    KernelStack phi(Tensor({1, 1, 2, 2, 1}, {0.5f, 0.5f, 0.5f, 0.5f}), {1, 1, 1});
    Tensor a({1, 1, 1, 1, 1}, {1.0f});
    Tensor input = reconstruct(a, phi);
    EnergyReport r = energy(input, a, phi, 0.1f);
    CHECK(r.recon_err == doctest::Approx(0.0));
    CHECK(r.sparsity == doctest::Approx(1.0));
    CHECK(r.total == doctest::Approx(0.1));
    CHECK(r.nnz == 1);

    Tensor zero = Tensor::zeros(a.dims);
    r = energy(input, zero, phi, 0.1f);
    CHECK(r.recon_err == doctest::Approx(0.5 * sum_squares(input)));
    CHECK(r.sparsity == doctest::Approx(0.0));
    CHECK(r.nnz == 0);
}

TEST_CASE("energy matches the dense oracle on random instances") {
    Rng rng(13);
    for (int trial = 0; trial < 4; ++trial) {
        Tensor x = random_tensor({1, 1, 6, 7, 2}, rng);
        KernelStack phi(random_tensor({3, 1, 3, 3, 2}, rng), {1, 1, 2});
        Tensor a = random_tensor({1, 1, 4, 3, 3}, rng);
        const float lam = 0.25f;
        EnergyReport got = energy(x, a, phi, lam);
        CHECK(got.total == doctest::Approx(oracle::naive_energy(x, a, phi, lam)).epsilon(1e-6));
        CHECK(got.total == doctest::Approx(got.recon_err + lam * got.sparsity).epsilon(1e-9));
    }
}

TEST_CASE("the origin is a fixed point for zero input") {
    KernelStack phi(Tensor({1, 1, 2, 2, 1}, {0.5f, 0.5f, 0.5f, 0.5f}), {1, 1, 1});
    Tensor input = Tensor::zeros({1, 1, 2, 2, 1});
    LcaConfig cfg;
    LcaState s = lca_init(input, phi, cfg);
    s = lca_step(std::move(s), input, phi, cfg);
    for (float v : s.u.data) CHECK(v == 0.0f);
    for (float v : s.a.data) CHECK(v == 0.0f);
    CHECK(s.energy_trace.size() == 2);  // init entry plus one per step
}

TEST_CASE("single matched atom converges to activation one at lambda zero") {
    Rng rng(17);
    KernelStack phi = init_dictionary(1, 1, 3, 3, 1, {1, 1, 1}, 7);
    Tensor input = Tensor::zeros({1, 1, 3, 3, 1});
    for (std::int64_t i = 0; i < input.numel(); ++i) input.data[i] = phi.weights.data[i];
    LcaConfig cfg;
    cfg.lambda = 0.0f;
    cfg.stop_tol = 0.0f;  // run the full budget
    cfg.max_iters = 400;
    LcaState s = lca_encode(input, phi, cfg);
    CHECK(s.a.data[0] == doctest::Approx(1.0).epsilon(1e-5));
    (void)rng;
}

TEST_CASE("lambda above the max drive yields the empty code") {
    Rng rng(19);
    Tensor input = random_tensor({1, 1, 6, 6, 1}, rng);
    KernelStack phi = init_dictionary(3, 1, 3, 3, 1, {1, 1, 1}, 3);
    Tensor drive = correlate(input, phi);
    float max_drive = 0.0f;
    for (float v : drive.data) max_drive = std::max(max_drive, std::abs(v));
    LcaConfig cfg;
    cfg.lambda = max_drive * 1.5f;
    LcaState s = lca_encode(input, phi, cfg);
    CHECK(count_nonzero(s.a) == 0);
    CHECK(s.energy_trace.back().nnz == 0);
}

TEST_CASE("an orthonormal pointwise dictionary converges to soft_threshold of the input") {
    // Identity kernels over channels: correlate(x) copies x, the Gram matrix
    // is the identity, and the energy minimizer is the shrunken input.
    Tensor w = Tensor::zeros({2, 1, 1, 1, 2});
    w.at5(0, 0, 0, 0, 0) = 1.0f;
    w.at5(1, 0, 0, 0, 1) = 1.0f;
    KernelStack phi(w, {1, 1, 1});
    Rng rng(23);
    Tensor input = random_tensor({1, 1, 4, 5, 2}, rng);
    LcaConfig cfg;
    cfg.lambda = 0.2f;
    cfg.max_iters = 2000;
    cfg.stop_tol = 1e-10f;
    LcaState s = lca_encode(input, phi, cfg);
    Tensor want = soft_threshold(input, 0.2f);
    // The stop rule admits a fixed-point residual of 1e-3 * ||u||_inf, so
    // the bound here is absolute at that scale.
    for (std::int64_t i = 0; i < want.numel(); ++i)
        CHECK(std::abs(s.a.data[i] - want.data[i]) <= 5e-3f);
}

TEST_CASE("encode trace is monotone and ends at an approximate fixed point") {
    Rng rng(29);
    Tensor input = random_tensor({1, 1, 8, 8, 1}, rng);
    KernelStack phi = init_dictionary(4, 1, 3, 3, 1, {1, 1, 1}, 11);
    LcaConfig cfg;
    cfg.lambda = 0.1f;
    LcaState s = lca_encode(input, phi, cfg);

    const double j0 = s.energy_trace[0].total;
    for (std::size_t i = 1; i < s.energy_trace.size(); ++i)
        CHECK(s.energy_trace[i].total <= s.energy_trace[i - 1].total + 1e-6 * j0);

    // Fixed-point residual, recomputed from scratch.
    Tensor resid = input;
    Tensor recon = reconstruct(s.a, phi);
    for (std::int64_t i = 0; i < resid.numel(); ++i) resid.data[i] -= recon.data[i];
    Tensor drive = correlate(resid, phi);
    double num = 0.0, den = 0.0;
    for (std::int64_t i = 0; i < drive.numel(); ++i) {
        num = std::max(num, std::abs(static_cast<double>(drive.data[i]) + s.a.data[i] - s.u.data[i]));
        den = std::max(den, std::abs(static_cast<double>(s.u.data[i])));
    }
    CHECK(num <= 1e-3 * den);

    // a == soft_threshold(u, lambda) after every public operation.
    Tensor thresh = soft_threshold(s.u, cfg.lambda);
    for (std::int64_t i = 0; i < thresh.numel(); ++i) CHECK(s.a.data[i] == thresh.data[i]);
}

TEST_CASE("divergence raises an error that names dt/tau") {
    // Three identical atoms make the Gram spectral radius 3 > 2*tau/dt at
    // dt = tau, so Euler integration must blow up.
    Tensor w = Tensor::zeros({3, 1, 2, 2, 1});
    for (int f = 0; f < 3; ++f)
        for (int i = 0; i < 4; ++i) w.data[f * 4 + i] = 0.5f;
    KernelStack phi(w, {1, 1, 1});
    Rng rng(31);
    Tensor input = random_tensor({1, 1, 6, 6, 1}, rng);
    LcaConfig cfg;
    cfg.lambda = 0.01f;
    cfg.tau = 1.0f;
    cfg.dt = 1.0f;
    CHECK_THROWS_AS(lca_encode(input, phi, cfg), DivergenceError);
    try {
        lca_encode(input, phi, cfg);
    } catch (const DivergenceError& e) {
        CHECK(std::string(e.what()).find("dt/tau") != std::string::npos);
    }

    // The adaptive wrapper slows the same dynamics down and recovers a code
    // at the same fixed point instead of failing.
    LcaState s = lca_encode_adaptive(input, phi, cfg);
    CHECK(s.energy_trace.back().total <= s.energy_trace[0].total);
}

TEST_CASE("lca matches the reference solver within one percent") {
    Rng rng(37);
    Tensor input = random_tensor({1, 1, 8, 8, 1}, rng);
    KernelStack phi = init_dictionary(4, 1, 3, 3, 1, {1, 1, 1}, 13);
    const float lam = 0.1f;
    LcaConfig cfg;
    cfg.lambda = lam;
    cfg.max_iters = 3000;
    cfg.stop_tol = 1e-9f;
    LcaState s = lca_encode(input, phi, cfg);
    Tensor a_ref = ista_oracle(input, phi, lam, 4000);
    const double j_lca = trace_energy(input, s.a, phi, lam);
    const double j_ref = trace_energy(input, a_ref, phi, lam);
    CHECK(std::abs(j_lca - j_ref) / j_ref <= 0.01);
}

TEST_CASE("ista solves the lambda-zero dense system") {
    // Pointwise dictionary, well conditioned: the optimal residual is zero.
    Rng rng(41);
    Tensor w = Tensor::zeros({4, 1, 1, 1, 4});
    for (int f = 0; f < 4; ++f)
        for (int c = 0; c < 4; ++c)
            w.at5(f, 0, 0, 0, c) = (f == c ? 1.0f : 0.0f) + 0.2f * static_cast<float>(rng.normal());
    KernelStack phi(w, {1, 1, 1});
    Tensor input = random_tensor({1, 1, 2, 2, 4}, rng);
    Tensor a = ista_oracle(input, phi, 0.0f, 6000);
    Tensor recon = reconstruct(a, phi);
    double err = 0.0, scale = 0.0;
    for (std::int64_t i = 0; i < input.numel(); ++i) {
        err += (input.data[i] - recon.data[i]) * (input.data[i] - recon.data[i]);
        scale += input.data[i] * input.data[i];
    }
    CHECK(std::sqrt(err / scale) <= 1e-4);
}

TEST_CASE("ista goes to zero under a huge lambda and refuses big problems") {
    Rng rng(43);
    Tensor input = random_tensor({1, 1, 6, 6, 1}, rng);
    KernelStack phi = init_dictionary(3, 1, 3, 3, 1, {1, 1, 1}, 5);
    Tensor a = ista_oracle(input, phi, 1e6f, 50);
    CHECK(count_nonzero(a) == 0);

    Tensor big = Tensor::zeros({1, 1, 66, 66, 1});
    KernelStack phi2 = init_dictionary(2, 1, 3, 3, 1, {1, 1, 1}, 5);
    CHECK_THROWS_AS(ista_oracle(big, phi2, 0.1f, 10), std::domain_error);
}

TEST_CASE("lca config validation") {
    LcaConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.dt = 11.0f;  // dt > tau
    CHECK_THROWS_AS(cfg.validate(), std::domain_error);
    cfg = LcaConfig{};
    cfg.lambda = -1.0f;
    CHECK_THROWS_AS(cfg.validate(), std::domain_error);
    cfg = LcaConfig{};
    cfg.max_iters = 0;
    CHECK_THROWS_AS(cfg.validate(), std::domain_error);
}
