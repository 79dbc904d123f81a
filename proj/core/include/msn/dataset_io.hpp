#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "msn/preprocess.hpp"

namespace msn {

/// On-disk dataset container: a JSON manifest plus two raw files.
///   manifest: {"magic":"HSC1","width":..,"height":..,"bands":..,
///              "dtype":"f32le","layout":"BSQ","classes":[...],
///              "nodata_label":0}
///   cube:   raw little-endian float32, band-sequential
///   labels: raw little-endian uint16, row-major, 0 = unlabeled
struct HscPaths {
    std::filesystem::path manifest;
    std::filesystem::path cube;
    std::filesystem::path labels;

    /// base.json / base.cube / base.labels
    static HscPaths from_base(const std::filesystem::path& base);
};

void write_hsc(const HsiCube& cube, const LabelMap& labels, const HscPaths& paths);
std::pair<HsiCube, LabelMap> read_hsc(const HscPaths& paths);

/// Synthetic labeled scene: per-class smooth random spectra, Voronoi blob
/// layout, optional spectral mixing at blob borders, Gaussian noise.
struct SyntheticSceneSpec {
    int height = 32;
    int width = 32;
    int bands = 8;
    int classes = 4;
    int blobs_per_class = 2;
    double noise_std = 0.05;
    double border_mix = 0.25;        // mixing fraction at blob borders
    double min_spectra_dist = 1.0;   // floor on pairwise L2 distance of class spectra
};

std::pair<HsiCube, LabelMap> synth_scene(const SyntheticSceneSpec& spec, uint64_t seed);

/// Palette for class maps: 0 -> black; k -> HSV(360*(k-1)/L, 1, 1) via the
/// standard sector formula, channels rounded half-up.
std::array<uint8_t, 3> class_color(int class_id, int num_classes);

/// Binary PPM (P6, maxval 255) of a per-pixel class id grid (row-major,
/// 0 = unlabeled = black).
void write_class_map(const std::vector<int>& class_ids, int height, int width, int num_classes,
                     const std::filesystem::path& path);

}  // namespace msn
