#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "msn/dataset_io.hpp"
#include "msn/network.hpp"
#include "msn/preprocess.hpp"

namespace msn::cli {

// Resolved options shared by the dataset-consuming commands. Every field
// lands in the run manifest.
struct PipelineOpts {
    std::string cube_path;
    std::string labels_path;
    std::string manifest_path;  // defaults to <cube stem>.json
    std::string profile = "ip";
    int bands = -1;             // -1: profile default
    int window = 25;
    double train_frac = 0.10;
    uint64_t seed = 0;
    std::string pad_mode = "border";
    double width_scale = 1.0;
    double dropout = -1.0;      // -1: profile default
    bool deterministic = false;
    std::string out_dir = ".";
};

struct PreparedData {
    HsiCube cube;
    LabelMap labels;
    ReducedCube reduced;
    PatchSet patches;
    SplitPlan split;
    BandStats stats;
    MixedSnConfig net_config;
};

/// Resolves the manifest path, loads the container and runs
/// pca -> patch -> split -> standardize with the resolved options.
PreparedData prepare(const PipelineOpts& opts);

/// Network config from profile + overrides; class count comes from the
/// dataset when `classes_from_data` is positive.
MixedSnConfig resolve_network_config(const PipelineOpts& opts, int classes_from_data);

HscPaths resolve_hsc_paths(const PipelineOpts& opts);

/// FNV-1a 64 digest of a file's bytes, "fnv1a64:<hex>".
std::string file_digest(const std::filesystem::path& path);

nlohmann::json options_json(const PipelineOpts& opts);

/// Writes <out_dir>/<command>_manifest.json with resolved options, tool
/// version and input digests. Contains nothing volatile, so identical
/// invocations produce identical manifests.
void write_run_manifest(const std::string& command, const PipelineOpts& opts,
                        const nlohmann::json& extra_options);

}  // namespace msn::cli
