// SPDX-License-Identifier: Apache-2.0
//
// Dataset ingestion, semi-supervised label masking and deterministic batch streams.
// Class indices are zero-based throughout.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "maven/networks.hpp"
#include "maven/random.hpp"
#include "maven/tensor.hpp"

namespace maven {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DatasetSplit {
    Tensor images;  // (N, H, W, C)
    std::vector<std::size_t> labels;
    std::string split = "train";
    std::vector<std::string> class_names;

    std::size_t size() const { return labels.size(); }
    std::size_t n_classes() const { return class_names.size(); }
    ImageShape image_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }
    void validate() const;
};

/// One subdirectory per class under root; classes in sorted order, files in lexicographic
/// order. Pixels are resized to (size x size), converted to the requested channel count
/// (1 = grayscale, 3 = RGB) and mapped affinely from [0, 255] to [-1, 1].
DatasetSplit load_image_folder(const std::filesystem::path& root, std::size_t image_size, std::size_t channels);

/// CIFAR-10 binary batches (cifar-10-batches-bin). split is "train" or "test".
DatasetSplit load_cifar10(const std::filesystem::path& dir, const std::string& split);

/// SVHN cropped digits (train_32x32.mat / test_32x32.mat). Label 10 maps to digit 0.
DatasetSplit load_svhn(const std::filesystem::path& dir, const std::string& split);

inline double pixel_to_unit(std::uint8_t v) { return static_cast<double>(v) / 127.5 - 1.0; }
std::uint8_t unit_to_pixel(double v);

struct SemiSupervisedView {
    std::shared_ptr<const DatasetSplit> data;
    std::vector<bool> labeled_mask;
    double labeled_fraction = 1.0;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;

    std::vector<std::size_t> labeled_indices() const;
    std::vector<std::size_t> unlabeled_indices() const;
    std::size_t labeled_count() const;
};

/// Stratified mask. The total round(fraction * N) is apportioned over classes by largest
/// remainder, so each class is within one item of proportional. A class that would get
/// zero items gets one, with a warning recorded on the view.
SemiSupervisedView mask_labels(std::shared_ptr<const DatasetSplit> split, double fraction, std::uint64_t seed);

enum class StreamKind { labeled, unlabeled, any };

struct ImageBatch {
    Tensor images;
    std::vector<std::size_t> labels;
    std::vector<bool> labeled;
    std::vector<std::size_t> indices;  // positions in the underlying split
};

/// Endless, seed-deterministic stream of minibatches. Each epoch reshuffles the item pool
/// and yields floor(pool / batch_size) batches; the remainder is dropped. A pool smaller
/// than batch_size yields the whole shuffled pool as one batch per epoch.
class BatchStream {
public:
    BatchStream(const SemiSupervisedView& view, std::size_t batch_size, StreamKind kind, std::uint64_t seed);

    ImageBatch next();
    std::size_t batches_per_epoch() const;
    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t pool_size() const noexcept { return pool_.size(); }

private:
    void reshuffle();

    std::shared_ptr<const DatasetSplit> data_;
    std::vector<bool> mask_;
    std::vector<std::size_t> pool_;
    std::vector<std::size_t> order_;
    std::size_t batch_size_;
    StreamKind kind_;
    Rng rng_;
    std::size_t cursor_ = 0;
    std::size_t epoch_ = 0;
};

ImageBatch make_batch(const DatasetSplit& data, std::span<const std::size_t> indices, const std::vector<bool>* mask);

/// 2-D Gaussian mixture with `modes` centers equally spaced on a circle of the given radius,
/// packaged as (N, 1, 1, 2) "images" holding raw coordinates; label = mode index.
DatasetSplit make_toy_ring(std::size_t modes, std::size_t samples_per_mode, double radius, double sigma,
                           std::uint64_t seed);
std::vector<std::array<double, 2>> ring_centers(std::size_t modes, double radius);

/// Synthetic 10-class glyph images (digit bitmaps, randomly shifted, with intensity jitter
/// and pixel noise), side x side x 1, values in [-1, 1].
DatasetSplit make_glyphs(std::size_t count, std::size_t side, double noise, std::uint64_t seed,
                         const std::string& split = "train");

/// Copy of `split` with every pixel value multiplied by factor.
DatasetSplit scale_images(const DatasetSplit& split, double factor);

/// Per-image mean intensity: the scalar projection used for DDD and density histograms.
std::vector<double> per_image_means(const Tensor& images);
std::vector<double> flattened_pixels(const Tensor& images);

}  // namespace maven
