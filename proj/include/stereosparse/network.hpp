#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stereosparse/conv.hpp"
#include "stereosparse/lca.hpp"
#include "stereosparse/tensor.hpp"

namespace stereosparse {

// First-layer scheme of the detector. Sparse/unsupervised variants take
// their first-layer weights from a dictionary; the others draw them fresh.
enum class VariantKind { ConvSup, SparseUnsup, ConvRand, ConvUnsup, ConvFinetune };

VariantKind variant_from_string(const std::string& name);
std::string variant_to_string(VariantKind v);
bool variant_needs_dictionary(VariantKind v);

/// Detector geometry. Defaults describe the stereo-video task: a
/// [1,3,64,256,6] input mapped to a 4x8 grid of 32x16-pixel windows.
struct NetworkSpec {
    VariantKind variant = VariantKind::ConvSup;
    int depth = 3;        // 2, 3, or 4 layers including the head
    int features = 64;    // first- and mid-layer feature count
    int input_t = 3;
    int input_h = 64;
    int input_w = 256;
    int input_c = 6;
    int window_h = 16;    // label window extent in pixels
    int window_w = 32;
    LcaConfig lca;        // SparseUnsup first-layer inference

    int grid_h() const { return input_h / window_h; }
    int grid_w() const { return input_w / window_w; }
    void validate() const;
};

enum class Nonlinearity { Relu, Sigmoid, None };

struct LayerDesc {
    std::array<int, 3> kernel;  // kt, kh, kw
    std::array<int, 3> stride;
    int features;
    std::array<int, 3> pad_before{0, 0, 0};
    std::array<int, 3> pad_after{0, 0, 0};
    Nonlinearity nonlin = Nonlinearity::Relu;
    bool trainable = true;
    bool bias = true;
};

/// Layer stack implied by the spec: first layer (3,8,8) stride (1,2,2),
/// stride-2 mid layers of (1,3,3) kernels, and a head whose kernel covers
/// exactly one window's cells so the logit grid is grid_h x grid_w.
std::vector<LayerDesc> layer_plan(const NetworkSpec& spec);

struct Layer {
    KernelStack k;
    std::vector<float> bias;  // one per output feature; empty if the layer has none
    bool trainable = true;
};

struct NetworkParams {
    std::vector<Layer> layers;
};

/// Per-window vehicle probabilities with their ground truth.
struct DetectionGrid {
    Tensor probs;   // [grid_h, grid_w], values in [0,1]
    Tensor labels;  // [grid_h, grid_w], values in {0,1}; zeros when unknown
};

/// Assemble parameters for a variant. Dictionary presence must match the
/// variant (ConfigError otherwise), and its geometry must equal the first
/// layer's. Deterministic per seed.
NetworkParams build_network(const NetworkSpec& spec, const KernelStack* dict, std::uint32_t seed);

struct ForwardCache {
    std::vector<Tensor> padded_in;  // per-layer padded input
    std::vector<Tensor> pre;        // pre-nonlinearity outputs (post bias)
    std::vector<Tensor> post;       // post-nonlinearity outputs
};

/// Run the detector on one example [1,t,h,w,c] and return window
/// probabilities [grid_h, grid_w]. For SparseUnsup the first layer runs
/// lca_encode on the padded input unless `first_acts` supplies precomputed
/// activations. `cache` (optional) collects intermediates for backprop.
Tensor forward(const NetworkParams& params, const NetworkSpec& spec, const Tensor& input,
               ForwardCache* cache = nullptr, const Tensor* first_acts = nullptr);

/// First-layer activations a SparseUnsup network would use for this input.
Tensor first_layer_activations(const NetworkParams& params, const NetworkSpec& spec,
                               const Tensor& input);

/// Mean over windows of -[y log p + (1-y) log(1-p)], probabilities clamped
/// to [1e-7, 1-1e-7].
double cross_entropy(const Tensor& probs, const Tensor& labels);

struct LayerGrads {
    Tensor dw;               // empty for frozen layers
    std::vector<float> db;
};

struct TrainItem {
    const Tensor* input;
    const Tensor* labels;
    const Tensor* first_acts = nullptr;  // cached SparseUnsup activations
};

/// Loss and parameter gradients for one example (cross-entropy backprop;
/// ReLU subgradient 0 at 0; no gradient flows into frozen layers or through
/// LCA inference).
std::pair<double, std::vector<LayerGrads>> compute_gradients(const NetworkParams& params,
                                                             const NetworkSpec& spec,
                                                             const TrainItem& item);

struct AdamState {
    std::vector<Tensor> m_w, v_w;
    std::vector<std::vector<float>> m_b, v_b;
    std::int64_t step = 0;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

AdamState make_adam_state(const NetworkParams& params);

/// One Adam step on the mean gradient over the batch. Returns the mean
/// loss; throws DivergenceError if it is not finite.
double train_step(NetworkParams& params, const NetworkSpec& spec, const std::vector<TrainItem>& batch,
                  AdamState& opt, float lr);

/// Example access for detector training and evaluation.
struct LabeledExample {
    std::string id;
    Tensor input;   // [t,h,w,c]
    Tensor labels;  // [grid_h, grid_w]
};

struct LabeledDataset {
    std::function<LabeledExample(int)> get;
    int count = 0;
};

/// Computes (and remembers) SparseUnsup first-layer activations per example
/// id. With a directory, entries persist as STEN files across runs; the key
/// folds in the dictionary bytes and LCA settings.
class EncodeCache {
public:
    EncodeCache() = default;
    explicit EncodeCache(std::string dir) : dir_(std::move(dir)) {}

    Tensor get_or_compute(const std::string& id, const NetworkParams& params, const NetworkSpec& spec,
                          const Tensor& input);

private:
    std::string dir_;
    std::vector<std::pair<std::string, Tensor>> mem_;
};

struct DetectorTrainOptions {
    int n_train = 0;  // 0 -> all training examples
    int epochs = 30;
    int batch_size = 16;
    float lr = 1e-3f;
    std::uint32_t seed = 1;
};

struct TrainedDetector {
    NetworkParams params;
    std::vector<double> epoch_loss;
};

/// Draw a seeded n_train subset, then train with per-epoch seeded shuffles.
/// Fully deterministic given the seed. `cache` is only consulted for
/// SparseUnsup.
TrainedDetector train_detector(const NetworkSpec& spec, const LabeledDataset& data,
                               const DetectorTrainOptions& opts, const KernelStack* dict,
                               EncodeCache* cache = nullptr);

}  // namespace stereosparse
