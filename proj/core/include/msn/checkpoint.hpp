#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>

#include "msn/network.hpp"

namespace msn {

/// Checkpoint container: 4-byte magic "MSNC", a u64 little-endian manifest
/// byte length, the manifest JSON (format version, network config, parameter
/// names/shapes, dtype, rng seed), then the raw little-endian parameter data
/// in manifest order. Round-trips are bit-exact.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const MixedSn<T>& net, uint64_t seed);

template <typename T>
struct LoadedCheckpoint {
    MixedSn<T> net;
    uint64_t seed = 0;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace msn
