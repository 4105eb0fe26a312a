#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stereosparse/data.hpp"
#include "stereosparse/network.hpp"

namespace stereosparse {

struct PRPoint {
    double recall;
    double precision;
};

/// Threshold sweep over descending scores, ties grouped at one threshold.
struct PRCurve {
    std::vector<PRPoint> points;  // recall non-decreasing
    std::int64_t positive_count = 0;
    std::int64_t total_count = 0;
};

/// Scores and binary labels, paired by index. At least one positive label
/// is required (domain error otherwise).
PRCurve pr_curve(const std::vector<double>& scores, const std::vector<int>& labels);

/// Trapezoidal integral over recall in [0,1]; precision at recall 0 is
/// extended left from the first curve point.
double auc(const PRCurve& curve);

struct EvalResult {
    double auc_value = 0.0;
    PRCurve curve;
};

/// Forward every example, pool all window scores, and score them against
/// the window labels.
EvalResult evaluate_detector(const NetworkParams& params, const NetworkSpec& spec,
                             const LabeledDataset& data, EncodeCache* cache = nullptr);

/// Largest threshold t with count(|m| > t) <= target_nnz and the count
/// maximal; ties break toward fewer survivors. target 0 -> +infinity;
/// target == total -> an infinitesimally negative value (all survive).
double sparsity_match_threshold(std::vector<float> magnitudes, std::int64_t target_nnz);

/// max-bin mass over total mass; empty or all-zero histogram -> 0.
double selectivity_index(const std::vector<double>& bin_mass);

/// Grayscale left last frame with the green channel driven by |activation|
/// of one feature, painted over each active site's receptive field.
void activation_overlay(const Tensor& input, const Tensor& acts, int feature,
                        std::array<int, 3> kernel, std::array<int, 3> stride,
                        std::array<int, 3> pad_before, const std::string& path);

struct SelectivityReport {
    std::vector<double> disparity_levels;   // bin centers, preprocessed pixels
    std::vector<double> sparse_index;       // per feature; -1 if the feature never fired
    std::vector<double> control_index;
    double sparse_mean = 0.0;               // over features that fired
    double control_mean = 0.0;
    double threshold = 0.0;                 // sparsity-matched control threshold
    std::int64_t sparse_nnz = 0;
    std::int64_t control_survivors = 0;
};

/// Figure-2-style comparison: per-feature activation mass per planted
/// disparity level for SparseUnsup first-layer codes vs a sparsity-matched
/// threshold on the control network's first-layer activations. Only sites
/// whose cell lands on an object pixel count.
SelectivityReport depth_selectivity_report(const NetworkParams& sparse_params,
                                           const NetworkSpec& sparse_spec,
                                           const NetworkParams& control_params,
                                           const NetworkSpec& control_spec, const Dataset& data,
                                           EncodeCache* cache = nullptr);

/// Runs depth_selectivity_report with a SparseUnsup network built from the
/// dictionary, then writes selectivity.csv, selectivity_summary.json, and
/// overlay PPMs for the first few features of the first few examples into
/// out_dir. Returns the report and the files written.
struct AnalysisOutputs {
    SelectivityReport report;
    std::vector<std::string> written;
};
AnalysisOutputs write_depth_analysis(const KernelStack& dict, const NetworkParams& control_params,
                                     const NetworkSpec& control_spec, const Dataset& data,
                                     const LcaConfig& lca, const std::string& out_dir,
                                     int overlay_features, int overlay_examples,
                                     EncodeCache* cache = nullptr);

struct CellResult {
    VariantKind variant;
    int depth = 0;
    int n_train = 0;
    std::uint32_t seed = 0;
    double auc_value = 0.0;
};

struct SummaryRow {
    VariantKind variant;
    int depth = 0;
    int n_train = 0;
    double median = 0.0;
    double range = 0.0;  // max - min over exactly the seeds run
};

struct RunReport {
    std::vector<CellResult> cells;
    std::vector<SummaryRow> summary;
    std::string results_csv_path;
    std::string summary_csv_path;
};

struct MatrixConfig {
    std::vector<VariantKind> variants;
    std::vector<int> depths{3};
    std::vector<int> n_trains{0};       // 0 = all training examples
    std::vector<std::uint32_t> seeds{1, 2, 3, 4, 5, 6};
    NetworkSpec base;                   // features, geometry, lca settings
    DetectorTrainOptions train;         // epochs, batch size, lr
    std::string dict_path;              // STEN kernel stack, required by dict variants
    std::string data_manifest;
    std::string out_dir;
    std::string cache_dir;              // defaults to out_dir/cache
};

/// Train and evaluate every (variant, depth, n_train, seed) cell, writing
/// results.csv and the median/range summary.csv. Completed cells are
/// skipped via an on-disk cache keyed by the cell's config hash, so an
/// interrupted matrix resumes. Byte-identical outputs for identical runs.
RunReport run_matrix(const MatrixConfig& config,
                     const std::function<void(const std::string&)>& log = nullptr);

}  // namespace stereosparse
