#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "stereosparse/dict_learning.hpp"
#include "stereosparse/rng.hpp"

using namespace stereosparse;

namespace {

Tensor random_tensor(std::vector<int> dims, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(dims));
    for (float& v : t.data) v = static_cast<float>(rng.normal());
    return t;
}

double atom_norm(const Tensor& weights, int f) {
    const std::int64_t size = weights.numel() / weights.dims[0];
    double s = 0.0;
    for (std::int64_t i = 0; i < size; ++i) {
        const double v = weights.data[f * size + i];
        s += v * v;
    }
    return std::sqrt(s);
}

TensorDataset dataset_of(std::vector<Tensor> items) {
    TensorDataset ds;
    ds.count = static_cast<int>(items.size());
    ds.get = [items = std::move(items)](int i) { return items[static_cast<std::size_t>(i)]; };
    return ds;
}

}  // namespace

TEST_CASE("dict_gradient vanishes for empty codes and perfect reconstructions") {
    Rng rng(3);
    KernelStack phi = init_dictionary(3, 1, 3, 3, 2, {1, 1, 1}, 5);
    Tensor input = random_tensor({1, 1, 5, 5, 2}, rng);
    Tensor zero_a = Tensor::zeros({1, 1, 3, 3, 3});
    Tensor g = dict_gradient(input, zero_a, phi);
    for (float v : g.data) CHECK(v == 0.0f);

    Tensor a = random_tensor({1, 1, 3, 3, 3}, rng);
    Tensor perfect = reconstruct(a, phi);
    g = dict_gradient(perfect, a, phi);
    for (float v : g.data) CHECK(std::abs(v) <= 1e-5f);
}

TEST_CASE("dict_gradient matches central finite differences on three shapes") {
    Rng rng(7);
    const std::vector<std::vector<int>> input_shapes = {
        {1, 1, 4, 4, 1}, {1, 2, 6, 5, 2}, {1, 1, 8, 6, 1}};
    const std::vector<std::vector<int>> kernel_shapes = {
        {2, 1, 2, 2, 1}, {3, 2, 3, 3, 2}, {2, 1, 3, 3, 1}};
    const std::vector<std::array<int, 3>> strides = {{1, 1, 1}, {1, 1, 2}, {1, 2, 1}};
    for (std::size_t c = 0; c < input_shapes.size(); ++c) {
        Tensor input = random_tensor(input_shapes[c], rng);
        KernelStack phi(random_tensor(kernel_shapes[c], rng), strides[c]);
        Tensor a = random_tensor(correlate(input, phi).dims, rng);
        const float lam = 0.1f;
        Tensor grad = dict_gradient(input, a, phi);
        REQUIRE(grad.dims == phi.weights.dims);
        for (std::int64_t i = 0; i < grad.numel(); i += 3) {
            const double fd = oracle::central_diff(
                [&]() { return energy(input, a, phi, lam).total; }, &phi.weights.data[i], 1e-3);
            const double denom = std::max(1.0, std::abs(fd));
            CHECK(std::abs(grad.data[i] - fd) / denom <= 1e-3);
        }
    }
}

TEST_CASE("dict_update projects every atom to unit norm") {
    Rng rng(11);
    KernelStack phi = init_dictionary(4, 1, 3, 3, 2, {1, 1, 1}, 9);
    for (int f = 0; f < 4; ++f) CHECK(atom_norm(phi.weights, f) == doctest::Approx(1.0));

    SUBCASE("zero gradient leaves a unit-norm dictionary unchanged") {
        KernelStack next = dict_update(phi, Tensor::zeros(phi.weights.dims), 0.05f);
        for (std::int64_t i = 0; i < phi.weights.numel(); ++i)
            CHECK(next.weights.data[i] == doctest::Approx(phi.weights.data[i]).epsilon(1e-6));
    }
    SUBCASE("random gradients keep the projection contract") {
        Tensor g = random_tensor(phi.weights.dims, rng);
        KernelStack next = dict_update(phi, g, 0.5f);
        for (int f = 0; f < 4; ++f)
            CHECK(std::abs(atom_norm(next.weights, f) - 1.0) <= 1e-6);
    }
    SUBCASE("an atom driven to zero is reborn from noise at unit norm") {
        // lr = 1 and grad = atom makes the subtraction exactly zero.
        Tensor g = Tensor::zeros(phi.weights.dims);
        const std::int64_t size = phi.weights.numel() / 4;
        for (std::int64_t i = 0; i < size; ++i) g.data[i] = phi.weights.data[i];
        Rng reseed(21);
        KernelStack next = dict_update(phi, g, 1.0f, reseed);
        CHECK(std::abs(atom_norm(next.weights, 0) - 1.0) <= 1e-6);
        bool changed = false;
        for (std::int64_t i = 0; i < size; ++i)
            if (next.weights.data[i] != phi.weights.data[i]) changed = true;
        CHECK(changed);
    }
}

TEST_CASE("zero batches return the initial dictionary") {
    Rng rng(13);
    KernelStack init = init_dictionary(2, 1, 2, 2, 1, {1, 1, 1}, 3);
    DictTrainConfig cfg;
    cfg.batches = 0;
    auto [phi, history] = train_dictionary(dataset_of({random_tensor({1, 1, 4, 4, 1}, rng)}),
                                           init, cfg);
    CHECK(phi.weights.data == init.weights.data);
    CHECK(history.batches.empty());
}

TEST_CASE("training on a single atom input descends smoothly") {
    KernelStack init = init_dictionary(2, 1, 3, 3, 1, {1, 1, 1}, 17);
    Tensor item = Tensor::zeros({1, 1, 3, 3, 1});
    const std::int64_t size = init.weights.numel() / 2;
    for (std::int64_t i = 0; i < size; ++i) item.data[i] = init.weights.data[i + size] * 2.0f;
    DictTrainConfig cfg;
    cfg.batches = 40;
    cfg.batch_size = 2;
    cfg.lca.lambda = 0.05f;
    auto [phi, history] = train_dictionary(dataset_of({item}), init, cfg);
    REQUIRE(history.batches.size() == 40);
    CHECK(history.smoothed_descent_ok());
    CHECK(history.batches.back().mean_energy.total <=
          history.batches.front().mean_energy.total + 1e-9);
    for (int f = 0; f < 2; ++f) CHECK(std::abs(atom_norm(phi.weights, f) - 1.0) <= 1e-6);
}

TEST_CASE("training lowers held-out energy relative to the initial dictionary") {
    Rng rng(19);
    // Structured data: random positive mixtures of two fixed patterns.
    Tensor base1 = random_tensor({1, 1, 4, 4, 1}, rng);
    Tensor base2 = random_tensor({1, 1, 4, 4, 1}, rng);
    std::vector<Tensor> items;
    for (int i = 0; i < 8; ++i) {
        Tensor t = Tensor::zeros({1, 1, 4, 4, 1});
        const float c1 = static_cast<float>(rng.uniform(0.5, 1.5));
        const float c2 = static_cast<float>(rng.uniform(0.5, 1.5));
        for (std::int64_t j = 0; j < t.numel(); ++j)
            t.data[j] = c1 * base1.data[j] + c2 * base2.data[j];
        items.push_back(t);
    }
    Tensor held_out = items.back();
    items.pop_back();

    KernelStack init = init_dictionary(3, 1, 4, 4, 1, {1, 1, 1}, 23);
    DictTrainConfig cfg;
    cfg.batches = 60;
    cfg.batch_size = 4;
    cfg.lca.lambda = 0.05f;
    auto [trained, history] = train_dictionary(dataset_of(std::move(items)), init, cfg);

    const double before =
        lca_encode(held_out, init, cfg.lca).energy_trace.back().total;
    const double after =
        lca_encode(held_out, trained, cfg.lca).energy_trace.back().total;
    CHECK(after <= before);
}

TEST_CASE("training is deterministic per seed") {
    Rng rng(29);
    std::vector<Tensor> items;
    for (int i = 0; i < 4; ++i) items.push_back(random_tensor({1, 1, 4, 4, 1}, rng));
    KernelStack init = init_dictionary(2, 1, 3, 3, 1, {1, 1, 1}, 31);
    DictTrainConfig cfg;
    cfg.batches = 15;
    cfg.batch_size = 2;
    cfg.seed = 77;
    auto [a, ha] = train_dictionary(dataset_of(items), init, cfg);
    auto [b, hb] = train_dictionary(dataset_of(items), init, cfg);
    CHECK(a.weights.data == b.weights.data);
    REQUIRE(ha.batches.size() == hb.batches.size());
    for (std::size_t i = 0; i < ha.batches.size(); ++i)
        CHECK(ha.batches[i].mean_energy.total == hb.batches[i].mean_energy.total);
}

TEST_CASE("an atom that never fires is reinitialized as dead") {
    // Data lives entirely on atom 0's pattern; with a decent lambda atom 1
    // never activates, and after 100 quiet batches it must be replaced.
    KernelStack init = init_dictionary(2, 1, 3, 3, 1, {1, 1, 1}, 37);
    Tensor item = Tensor::zeros({1, 1, 3, 3, 1});
    const std::int64_t size = init.weights.numel() / 2;
    // Make the two atoms orthogonal so atom 1 sees zero drive.
    for (std::int64_t i = 0; i < size; ++i) init.weights.data[size + i] = 0.0f;
    init.weights.data[size + 0] = 1.0f;
    for (std::int64_t i = 1; i < size; ++i) init.weights.data[i] = 0.0f;
    init.weights.data[0] = 0.0f;
    init.weights.data[1] = 1.0f;
    for (std::int64_t i = 0; i < size; ++i) item.data[i] = init.weights.data[i] * 3.0f;

    DictTrainConfig cfg;
    cfg.batches = 130;
    cfg.batch_size = 1;
    cfg.lca.lambda = 0.2f;
    auto [phi, history] = train_dictionary(dataset_of({item}), init, cfg);
    REQUIRE(history.batches.size() == 130);

    std::vector<float> dead_before(init.weights.data.begin() + size, init.weights.data.end());
    std::vector<float> dead_after(phi.weights.data.begin() + size, phi.weights.data.end());
    CHECK(dead_before != dead_after);
    CHECK(std::abs(atom_norm(phi.weights, 1) - 1.0) <= 1e-6);
}

TEST_CASE("dict config validation") {
    DictTrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.lr = 0.0f;
    CHECK_THROWS(cfg.validate());
    cfg = DictTrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS(cfg.validate());
}
