#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msn/tensor.hpp"

namespace msn {

/// Raw spectral cube, band-sequential (BSQ): all of band 0 row-major, then
/// band 1, ... Value count = height*width*bands.
struct HsiCube {
    int height = 0;  // P, pixel rows
    int width = 0;   // Q, pixel columns
    int bands = 0;   // B
    std::vector<float> values;

    float at(int band, int y, int x) const {
        return values[(static_cast<size_t>(band) * height + y) * width + x];
    }
    float& at(int band, int y, int x) {
        return values[(static_cast<size_t>(band) * height + y) * width + x];
    }
    int64_t pixel_count() const { return static_cast<int64_t>(height) * width; }
    void validate() const;
};

/// Per-pixel class ids, 0 = unlabeled, 1..L = classes. Row-major.
struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<uint16_t> ids;
    std::vector<std::string> class_names;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    uint16_t at(int y, int x) const { return ids[static_cast<size_t>(y) * width + x]; }
    int64_t labeled_count() const;
    void validate() const;
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Eigenvalues are
/// returned in descending order; eigenvector k is column k of `vectors`
/// (row-major n x n), sign-fixed so each column's largest-|entry| coordinate
/// is positive (lowest index on ties).
struct SymEig {
    std::vector<double> values;
    std::vector<double> vectors;
    int n = 0;

    double vec(int row, int col) const { return vectors[static_cast<size_t>(row) * n + col]; }
};

SymEig jacobi_eigh(const std::vector<double>& matrix, int n);

/// PCA-reduced cube: T bands, same spatial extents, plus the projection used
/// to produce it.
struct ReducedCube {
    int height = 0;
    int width = 0;
    int bands = 0;  // T
    std::vector<float> values;  // BSQ, like HsiCube

    std::vector<double> components;   // original_bands x T, row-major; column = component
    std::vector<double> band_means;   // original_bands
    std::vector<double> eigenvalues;  // all original_bands, descending
    double retained_variance = 1.0;
    int original_bands = 0;

    float at(int band, int y, int x) const {
        return values[(static_cast<size_t>(band) * height + y) * width + x];
    }
};

/// Projects each pixel's spectrum onto the top-T principal components of the
/// pixelwise covariance (mean-centered, unscaled bands; sample covariance).
ReducedCube pca_reduce(const HsiCube& cube, int t_bands);

enum class PadMode { zero_pad_border, interior_only };

PadMode pad_mode_from_name(const std::string& name);
std::string pad_mode_name(PadMode m);

/// S x S x T neighborhoods around labeled pixels, center pixel's class as the
/// label. zero_pad_border keeps every labeled pixel (windows zero-filled at
/// the borders); interior_only keeps only centers whose window fits.
struct PatchSet {
    int window = 0;  // S
    int bands = 0;   // T
    PadMode mode = PadMode::zero_pad_border;
    Tensor<float> patches;                      // (n, 1, T, S, S)
    std::vector<std::pair<int, int>> centers;   // (y, x), row-major order
    std::vector<int> labels;                    // 1..L
    int num_classes = 0;

    int64_t count() const { return static_cast<int64_t>(labels.size()); }
};

PatchSet extract_patches(const ReducedCube& cube, const LabelMap& labels, int window, PadMode mode);

/// Per-band standardization statistics, computed on training patches only.
struct BandStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // 0 marks a constant band (centered only)
};

/// Standardizes every patch in place using statistics from the training
/// subset (no leakage into test statistics).
BandStats standardize(PatchSet& patches, const std::vector<int64_t>& train_indices);

/// Per-class train/test partition of patch indices.
struct SplitPlan {
    double fraction = 0.0;
    uint64_t seed = 0;
    std::vector<std::vector<int64_t>> train_by_class;  // [class-1]
    std::vector<std::vector<int64_t>> test_by_class;
    std::vector<int64_t> train_indices;  // concatenated by class, then shuffled draw order
    std::vector<int64_t> test_indices;
};

/// Stratified sampling without replacement. The total train budget is
/// floor(fraction * labeled count); it is apportioned to classes by largest
/// remainder (floor of the proportional share, then +1 by descending
/// fractional part; ties prefer the larger class, then the lower id), with a
/// floor of one sample per class. This reproduces the published IP-scene
/// 10%/30% per-class counts exactly.
SplitPlan stratified_split(const std::vector<int>& labels, int num_classes, double fraction,
                           uint64_t seed);

}  // namespace msn
