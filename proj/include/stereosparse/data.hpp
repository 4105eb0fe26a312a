#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stereosparse/network.hpp"
#include "stereosparse/tensor.hpp"

namespace stereosparse {

/// 8-bit RGB image, row-major, 3 bytes per pixel.
struct Image {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> data;

    static Image blank(int h, int w, std::uint8_t value = 0);
    std::uint8_t& at(int r, int c, int ch);
    std::uint8_t at(int r, int c, int ch) const;
};

/// Three stereo frame pairs, oldest first.
struct StereoClip {
    std::array<Image, 3> left;
    std::array<Image, 3> right;
};

/// Axis-aligned box in the left camera's last frame, pixel units,
/// right > left and bottom > top for a non-degenerate box.
struct BoundingBox {
    std::string class_name;
    double left = 0, top = 0, right = 0, bottom = 0;
};

/// One preprocessed training example.
struct Example {
    std::string id;
    Tensor input;   // [3,64,256,6]: channels 0-2 left RGB, 3-5 right RGB
    Tensor labels;  // [4,8] binary
    double scale_h = 1.0, scale_w = 1.0;   // preprocessing resize factors
    bool degenerate_std = false;           // constant clip; std forced to 1
};

inline constexpr int kFrameH = 64;
inline constexpr int kFrameW = 256;
inline constexpr int kWindowH = 16;
inline constexpr int kWindowW = 32;
inline constexpr int kGridH = kFrameH / kWindowH;
inline constexpr int kGridW = kFrameW / kWindowW;

/// Binary P6 PPM with maxval 255. Header comments accepted. Malformed
/// input raises ParseError naming the byte offset.
Image parse_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> ppm_encode(const Image& img);
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

/// KITTI object label lines (15+ whitespace-delimited fields; fields 5-8
/// are left, top, right, bottom). Only Car, Van, and Truck boxes are kept.
std::vector<BoundingBox> parse_kitti_labels(const std::string& text);

/// Window (r,c) covers pixel rows [16r,16r+16) and cols [32c,32c+32); a
/// window is positive iff its intersection area with any box is > 0.
Tensor window_labels(const std::vector<BoundingBox>& boxes);

/// Downsample to 64x256, stack left+right RGB over 3 frames, normalize the
/// whole tensor to zero mean and unit std, and rescale the boxes into the
/// downsampled frame for the label grid.
Example preprocess(const StereoClip& clip, const std::vector<BoundingBox>& boxes);

struct SynthParams {
    int width = 512;             // render resolution; preprocess halves it
    int height = 128;
    int min_objects = 1;
    int max_objects = 3;
    double min_disparity = 2.0;  // pixels at render resolution
    double max_disparity = 12.0;
    std::vector<double> disparity_levels;  // when set, overrides the range
    double velocity_scale = 0.8; // |velocity| = scale * disparity + jitter
    double noise = 6.0;          // additive pixel noise, 8-bit units
};

struct SynthScene {
    StereoClip clip;
    std::vector<BoundingBox> boxes;  // left view, last frame
    Tensor disparity;                // [height,width] per-pixel planted disparity, 0 = background
};

/// Textured rectangles over a textured background. The right view shifts
/// each object left by its disparity, later frames shift it by a velocity
/// whose magnitude grows with disparity. Deterministic per seed.
SynthScene synth_scene(std::uint32_t seed, const SynthParams& params);

/// Reduce a render-resolution disparity map to the 64x256 frame by center
/// sampling; values rescale by the width factor since disparity is
/// horizontal.
Tensor disparity_to_frame(const Tensor& render_map);

/// One manifest line. `input` is a STEN path unless `synth_seed` is set,
/// in which case the example is generated on load.
struct ManifestEntry {
    std::string id;
    std::string split;                    // "train" or "test"
    std::string input_path;               // STEN [3,64,256,6]
    std::vector<int> labels_inline;       // row-major 4x8, or empty
    std::string labels_path;              // STEN [4,8] when not inline
    std::string disparity_path;           // optional STEN, preprocessed scale
    std::optional<std::uint32_t> synth_seed;
    std::optional<SynthParams> synth_params;  // overrides the dataset default
};

class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<ManifestEntry> entries, std::string base_dir, SynthParams synth);

    int count() const { return static_cast<int>(entries_.size()); }
    const ManifestEntry& entry(int i) const { return entries_.at(static_cast<std::size_t>(i)); }
    Dataset split(const std::string& name) const;
    LabeledExample load(int i) const;
    Tensor load_disparity(int i) const;   // [64,256]; ConfigError if absent

    /// Adapter for detector training/evaluation. The Dataset must outlive it.
    LabeledDataset labeled() const;

private:
    std::vector<ManifestEntry> entries_;
    std::string base_dir_;
    SynthParams synth_;
};

/// JSON-lines manifest. Errors carry the line number. Paths inside the
/// manifest are relative to its directory.
Dataset read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

}  // namespace stereosparse
