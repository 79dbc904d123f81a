#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msn/ops.hpp"
#include "msn/rng.hpp"

namespace msn {

enum class Profile { ip, pu, sa, bw, custom };

Profile profile_from_name(const std::string& name);
std::string profile_name(Profile p);

/// Declarative MixedSN layout. The fixed architecture: a 3x3x7 stem conv,
/// five max-pool layers, two 3D ResNeXt blocks (path kernels 3x3x5 and
/// 3x3x3), a depth fold into 2D, two identical 2D ResNeXt blocks (3x3
/// paths), 1x1 scale layers between stages and three fully connected heads.
/// Channel widths below are the defaults that land the IP profile near the
/// published parameter budget.
struct MixedSnConfig {
    int bands = 30;    // T, spectral depth after PCA
    int window = 25;   // S, odd spatial window
    int classes = 16;  // L

    int cardinality = 4;
    int stem_channels = 8;
    int block3d1_width = 16, block3d1_bottleneck = 4;
    int block3d2_width = 32, block3d2_bottleneck = 8;
    int block2d_width = 64, block2d_bottleneck = 16;
    int pre_flatten_channels = 32;
    int fc1_units = 192, fc2_units = 128;
    double dropout_rate = 0.40;
    std::string profile = "custom";

    /// Dataset presets: ip (T=30, L=16), pu (15, 9), sa (15, 16), bw (13, 14);
    /// dropout 0.40 everywhere except bw's 0.45. Window 25 throughout.
    static MixedSnConfig for_profile(Profile p);

    /// Multiplies every channel/FC width by `s` (floor 1). Used by the tiny
    /// desk-scale configurations and the --width-scale flag.
    MixedSnConfig& scale_widths(double s);

    void validate() const;
};

/// Ordered, uniquely named trainable tensors; iteration order is the
/// construction order and is the order used by checkpoints and Adam state.
template <typename T>
struct ParamStore {
    struct Entry {
        std::string name;
        NodePtr<T> node;
    };
    std::vector<Entry> entries;

    int64_t total_parameters() const {
        int64_t total = 0;
        for (const auto& e : entries) total += e.node->value.numel();
        return total;
    }

    void zero_grads() {
        for (auto& e : entries) e.node->zero_grad();
    }
};

struct ParamCountRow {
    std::string name;
    Shape shape;
    int64_t count = 0;
};

struct LayerShapeRow {
    std::string name;
    std::string kind;
    Shape out_shape;  // without the batch axis
};

/// Static per-layer shape walk for a batch of one. Throws ShapeError naming
/// the layer if any extent would drop below 1.
std::vector<LayerShapeRow> shape_trace(const MixedSnConfig& cfg);

/// The MixedSN classifier: parameters plus a forward pass that assembles the
/// reverse-mode graph.
template <typename T>
class MixedSn {
public:
    MixedSn(MixedSnConfig cfg, Rng init_rng);

    const MixedSnConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }

    int64_t flatten_features() const { return flatten_features_; }
    int64_t folded_channels() const { return folded_channels_; }

    /// batch (B,1,T,S,S) -> logits node (B,L). Train mode applies dropout
    /// after each hidden FC layer, drawing the mask from `dropout_rng`.
    NodePtr<T> forward(const Tensor<T>& batch, RunMode mode, Rng* dropout_rng = nullptr);

    /// Convenience: logits values only, eval mode.
    Tensor<T> logits(const Tensor<T>& batch);

private:
    NodePtr<T> add_param(const std::string& name, Shape shape, double fan_in, Rng& rng);
    NodePtr<T> conv3d_relu(const NodePtr<T>& x, const std::string& name, const Conv3dSpec& spec);
    NodePtr<T> conv2d_relu(const NodePtr<T>& x, const std::string& name, const Conv2dSpec& spec);
    NodePtr<T> resnext3d(const NodePtr<T>& x, const std::string& name, int width, int bottleneck,
                         int kd);
    NodePtr<T> resnext2d(const NodePtr<T>& x, const std::string& name, int width, int bottleneck);
    NodePtr<T> param(const std::string& name);

    MixedSnConfig cfg_;
    ParamStore<T> params_;
    int64_t folded_channels_ = 0;
    int64_t flatten_features_ = 0;
};

template <typename T>
std::vector<ParamCountRow> parameter_table(const ParamStore<T>& store) {
    std::vector<ParamCountRow> rows;
    rows.reserve(store.entries.size());
    for (const auto& e : store.entries)
        rows.push_back({e.name, e.node->value.shape(), e.node->value.numel()});
    return rows;
}

/// Reference parameter budget of the published IP-profile network.
constexpr int64_t kIpReferenceParamTotal = 332864;

}  // namespace msn
