#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bae/tensor.hpp"

namespace bae {

/// Malformed input file (bad magic, truncation, ragged CSV, ...).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Dataset {
    Tensor samples;           // [n, ...sample shape]
    std::vector<int> labels;  // empty, or one per sample
    std::string name;
    std::size_t num_classes = 0;

    std::size_t size() const { return samples.rank() == 0 ? 0 : samples.dim(0); }
    Shape sample_shape() const { return Shape(samples.shape().begin() + 1, samples.shape().end()); }
    bool has_labels() const { return !labels.empty(); }

    Dataset subset(std::span<const std::size_t> indices) const;
    /// Indices of samples whose label is `label`.
    std::vector<std::size_t> indices_of(int label) const;
};

/// IDX image file (magic 0x00000803, [n, rows, cols] bytes) and optional
/// label file (magic 0x00000801). Pixels are scaled by 1/255; samples are [1, rows, cols].
Dataset load_idx(const std::string& images_path, const std::string& labels_path = {});

/// CIFAR-10 binary batches: 3073-byte records of label byte + 3x32x32 channel-major pixels.
Dataset load_cifar_binary(const std::vector<std::string>& paths);

/// Numeric CSV, one sample per row. `label_column` (0-based) is pulled out as an integer label.
Dataset load_csv(const std::string& path, std::optional<std::size_t> label_column = std::nullopt);

/// Rescales every feature to [0, 1] by its observed min/max (constant features map to 0).
void minmax_normalize(Dataset& dataset);

struct SplitResult {
    Dataset train, val, test;
};

/// Deterministic partition by `fractions` (train, val, test; must sum to 1).
/// With labels, each class is split in proportion, within one sample per class.
SplitResult split(const Dataset& dataset, const std::array<double, 3>& fractions, std::uint64_t seed);

/// k Gaussian blobs in [0,1]^dim with well-separated centers; labels i mod k.
Dataset synth_blobs(std::size_t n, std::size_t k, std::size_t dim, double spread, std::uint64_t seed);

/// 1 x size x size bar images. Classes cycle through horizontal bar, vertical
/// bar, diagonal, anti-diagonal, cross, and box outline (up to 6); bar
/// position and brightness vary per sample; Gaussian noise is clamped to [0,1].
Dataset synth_images(std::size_t n, std::size_t pattern_classes, std::size_t size, double noise, std::uint64_t seed);

}  // namespace bae
