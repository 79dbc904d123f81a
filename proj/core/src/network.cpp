#include "msn/network.hpp"

#include <cmath>

namespace msn {

Profile profile_from_name(const std::string& name) {
    if (name == "ip") return Profile::ip;
    if (name == "pu") return Profile::pu;
    if (name == "sa") return Profile::sa;
    if (name == "bw") return Profile::bw;
    if (name == "custom") return Profile::custom;
    throw ValueError("unknown profile '" + name + "' (expected ip, pu, sa, bw or custom)");
}

std::string profile_name(Profile p) {
    switch (p) {
        case Profile::ip: return "ip";
        case Profile::pu: return "pu";
        case Profile::sa: return "sa";
        case Profile::bw: return "bw";
        case Profile::custom: return "custom";
    }
    return "custom";
}

MixedSnConfig MixedSnConfig::for_profile(Profile p) {
    MixedSnConfig cfg;
    cfg.profile = profile_name(p);
    switch (p) {
        case Profile::ip:
            cfg.bands = 30;
            cfg.classes = 16;
            break;
        case Profile::pu:
            cfg.bands = 15;
            cfg.classes = 9;
            break;
        case Profile::sa:
            cfg.bands = 15;
            cfg.classes = 16;
            break;
        case Profile::bw:
            cfg.bands = 13;
            cfg.classes = 14;
            cfg.dropout_rate = 0.45;  // smallest sample count of the four scenes
            break;
        case Profile::custom: break;
    }
    return cfg;
}

MixedSnConfig& MixedSnConfig::scale_widths(double s) {
    if (s <= 0.0) throw ValueError("width scale must be positive");
    auto scaled = [s](int w) { return std::max<int>(1, static_cast<int>(std::lround(w * s))); };
    stem_channels = scaled(stem_channels);
    block3d1_width = scaled(block3d1_width);
    block3d1_bottleneck = scaled(block3d1_bottleneck);
    block3d2_width = scaled(block3d2_width);
    block3d2_bottleneck = scaled(block3d2_bottleneck);
    block2d_width = scaled(block2d_width);
    block2d_bottleneck = scaled(block2d_bottleneck);
    pre_flatten_channels = scaled(pre_flatten_channels);
    fc1_units = scaled(fc1_units);
    fc2_units = scaled(fc2_units);
    return *this;
}

void MixedSnConfig::validate() const {
    if (window < 1 || window % 2 == 0)
        throw ValueError("window size S must be odd, got " + std::to_string(window));
    if (bands < 7)
        throw ValueError("bands T=" + std::to_string(bands) +
                         " is too small for the 3x3x7 stem kernel (need T >= 7)");
    if (classes < 2) throw ValueError("class count L must be >= 2");
    if (cardinality < 1) throw ValueError("cardinality must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ValueError("dropout rate must be in [0,1)");
    for (int w : {stem_channels, block3d1_width, block3d1_bottleneck, block3d2_width,
                  block3d2_bottleneck, block2d_width, block2d_bottleneck, pre_flatten_channels,
                  fc1_units, fc2_units})
        if (w < 1) throw ValueError("channel/unit widths must be >= 1");
}

namespace {

struct Extents3 {
    int64_t d, h, w;
};

void pool3_shape(const std::string& name, Extents3& e, int kd, int kh, int kw, int sd, int sh,
                 int sw) {
    if (e.d < kd || e.h < kh || e.w < kw)
        throw ShapeError(name + ": pool kernel (" + std::to_string(kd) + "," + std::to_string(kh) +
                         "," + std::to_string(kw) + ") exceeds input extents " +
                         shape_str({e.d, e.h, e.w}));
    e.d = (e.d - kd) / sd + 1;
    e.h = (e.h - kh) / sh + 1;
    e.w = (e.w - kw) / sw + 1;
}

void pool2_shape(const std::string& name, Extents3& e, int kh, int kw, int sh, int sw) {
    if (e.h < kh || e.w < kw)
        throw ShapeError(name + ": pool kernel (" + std::to_string(kh) + "," + std::to_string(kw) +
                         ") exceeds input extents " + shape_str({e.h, e.w}));
    e.h = (e.h - kh) / sh + 1;
    e.w = (e.w - kw) / sw + 1;
}

}  // namespace

std::vector<LayerShapeRow> shape_trace(const MixedSnConfig& cfg) {
    cfg.validate();
    std::vector<LayerShapeRow> rows;
    Extents3 e{cfg.bands, cfg.window, cfg.window};
    int64_t ch = 1;
    auto push3 = [&](const std::string& name, const std::string& kind) {
        rows.push_back({name, kind, {ch, e.d, e.h, e.w}});
    };
    auto push2 = [&](const std::string& name, const std::string& kind) {
        rows.push_back({name, kind, {ch, e.h, e.w}});
    };

    rows.push_back({"input", "input", {ch, e.d, e.h, e.w}});
    ch = cfg.stem_channels;
    push3("stem", "conv3d 3x3x7 same + relu");
    pool3_shape("pool1", e, 2, 2, 2, 1, 1, 1);
    push3("pool1", "maxpool3d 2x2x2 stride (1,1,1)");
    ch = cfg.block3d1_width;
    push3("scale3d1", "conv3d 1x1x1 + relu");
    push3("block3d1", "resnext3d width " + std::to_string(cfg.block3d1_width) + " paths 1x1x1->3x3x5");
    pool3_shape("pool2", e, 2, 2, 2, 2, 1, 1);
    push3("pool2", "maxpool3d 2x2x2 stride (depth 2, spatial 1)");
    ch = cfg.block3d2_width;
    push3("scale3d2", "conv3d 1x1x1 + relu");
    push3("block3d2", "resnext3d width " + std::to_string(cfg.block3d2_width) + " paths 1x1x1->3x3x3");
    pool3_shape("pool3", e, 2, 2, 2, 2, 1, 1);
    push3("pool3", "maxpool3d 2x2x2 stride (depth 2, spatial 1)");
    ch = ch * e.d;
    e.d = 1;
    push2("fold", "depth_fold");
    ch = cfg.block2d_width;
    push2("scale2d1", "conv2d 1x1 + relu");
    push2("block2d1", "resnext2d width " + std::to_string(cfg.block2d_width) + " paths 1x1->3x3");
    pool2_shape("pool4", e, 2, 2, 2, 2);
    push2("pool4", "maxpool2d 2x2 stride 2");
    push2("block2d2", "resnext2d width " + std::to_string(cfg.block2d_width) + " paths 1x1->3x3");
    pool2_shape("pool5", e, 2, 2, 2, 2);
    push2("pool5", "maxpool2d 2x2 stride 2");
    ch = cfg.pre_flatten_channels;
    push2("scale2d2", "conv2d 1x1 + relu");
    ch = cfg.pre_flatten_channels * e.h * e.w;
    rows.push_back({"flatten", "flatten", {ch}});
    rows.push_back({"fc1", "linear + relu + dropout", {cfg.fc1_units}});
    rows.push_back({"fc2", "linear + relu + dropout", {cfg.fc2_units}});
    rows.push_back({"fc3", "linear (logits)", {cfg.classes}});
    return rows;
}

template <typename T>
MixedSn<T>::MixedSn(MixedSnConfig cfg, Rng init_rng) : cfg_(std::move(cfg)) {
    const auto trace = shape_trace(cfg_);
    for (const auto& row : trace) {
        if (row.name == "fold") folded_channels_ = row.out_shape[0];
        if (row.name == "flatten") flatten_features_ = row.out_shape[0];
    }

    Rng rng = init_rng.split(rng_stream::kWeightInit);
    const int C = cfg_.cardinality;

    auto add_conv3 = [&](const std::string& name, const Conv3dSpec& s) {
        add_param(name + ".weight", s.weight_shape(),
                  static_cast<double>(s.in_channels) * s.kd * s.kh * s.kw, rng);
        add_param(name + ".bias", s.bias_shape(), 0.0, rng);
    };
    auto add_conv2 = [&](const std::string& name, const Conv2dSpec& s) {
        add_param(name + ".weight", s.weight_shape(),
                  static_cast<double>(s.in_channels) * s.kh * s.kw, rng);
        add_param(name + ".bias", s.bias_shape(), 0.0, rng);
    };
    auto add_block3 = [&](const std::string& name, int width, int bottleneck, int kd) {
        for (int p = 0; p < C; ++p) {
            const std::string path = name + ".path" + std::to_string(p);
            add_conv3(path + ".reduce", Conv3dSpec::same(width, bottleneck, 1, 1, 1));
            add_conv3(path + ".expand", Conv3dSpec::same(bottleneck, width, kd, 3, 3));
        }
    };
    auto add_block2 = [&](const std::string& name, int width, int bottleneck) {
        for (int p = 0; p < C; ++p) {
            const std::string path = name + ".path" + std::to_string(p);
            add_conv2(path + ".reduce", Conv2dSpec::same(width, bottleneck, 1, 1));
            add_conv2(path + ".expand", Conv2dSpec::same(bottleneck, width, 3, 3));
        }
    };
    auto add_fc = [&](const std::string& name, int in, int out) {
        add_param(name + ".weight", {out, in}, static_cast<double>(in), rng);
        add_param(name + ".bias", {out}, 0.0, rng);
    };

    add_conv3("stem", Conv3dSpec::same(1, cfg_.stem_channels, 7, 3, 3));
    add_conv3("scale3d1", Conv3dSpec::same(cfg_.stem_channels, cfg_.block3d1_width, 1, 1, 1));
    add_block3("block3d1", cfg_.block3d1_width, cfg_.block3d1_bottleneck, 5);
    add_conv3("scale3d2", Conv3dSpec::same(cfg_.block3d1_width, cfg_.block3d2_width, 1, 1, 1));
    add_block3("block3d2", cfg_.block3d2_width, cfg_.block3d2_bottleneck, 3);
    add_conv2("scale2d1", Conv2dSpec::same(static_cast<int>(folded_channels_),
                                           cfg_.block2d_width, 1, 1));
    add_block2("block2d1", cfg_.block2d_width, cfg_.block2d_bottleneck);
    add_block2("block2d2", cfg_.block2d_width, cfg_.block2d_bottleneck);
    add_conv2("scale2d2", Conv2dSpec::same(cfg_.block2d_width, cfg_.pre_flatten_channels, 1, 1));
    add_fc("fc1", static_cast<int>(flatten_features_), cfg_.fc1_units);
    add_fc("fc2", cfg_.fc1_units, cfg_.fc2_units);
    add_fc("fc3", cfg_.fc2_units, cfg_.classes);
}

template <typename T>
NodePtr<T> MixedSn<T>::add_param(const std::string& name, Shape shape, double fan_in, Rng& rng) {
    Tensor<T> value(shape);
    if (fan_in > 0.0) {
        const double stddev = std::sqrt(2.0 / fan_in);
        for (int64_t i = 0; i < value.numel(); ++i)
            value[i] = static_cast<T>(rng.next_gaussian() * stddev);
    }
    auto node = make_leaf(std::move(value), true, name);
    params_.entries.push_back({name, node});
    return node;
}

template <typename T>
NodePtr<T> MixedSn<T>::param(const std::string& name) {
    for (auto& e : params_.entries)
        if (e.name == name) return e.node;
    throw ValueError("unknown parameter '" + name + "'");
}

template <typename T>
NodePtr<T> MixedSn<T>::conv3d_relu(const NodePtr<T>& x, const std::string& name,
                                   const Conv3dSpec& spec) {
    return relu(conv3d(x, param(name + ".weight"), param(name + ".bias"), spec));
}

template <typename T>
NodePtr<T> MixedSn<T>::conv2d_relu(const NodePtr<T>& x, const std::string& name,
                                   const Conv2dSpec& spec) {
    return relu(conv2d(x, param(name + ".weight"), param(name + ".bias"), spec));
}

template <typename T>
NodePtr<T> MixedSn<T>::resnext3d(const NodePtr<T>& x, const std::string& name, int width,
                                 int bottleneck, int kd) {
    std::vector<NodePtr<T>> branches;
    branches.reserve(static_cast<size_t>(cfg_.cardinality));
    for (int p = 0; p < cfg_.cardinality; ++p) {
        const std::string path = name + ".path" + std::to_string(p);
        NodePtr<T> t = conv3d_relu(x, path + ".reduce", Conv3dSpec::same(width, bottleneck, 1, 1, 1));
        t = conv3d_relu(t, path + ".expand", Conv3dSpec::same(bottleneck, width, kd, 3, 3));
        branches.push_back(t);
    }
    return residual_add(x, branches);
}

template <typename T>
NodePtr<T> MixedSn<T>::resnext2d(const NodePtr<T>& x, const std::string& name, int width,
                                 int bottleneck) {
    std::vector<NodePtr<T>> branches;
    branches.reserve(static_cast<size_t>(cfg_.cardinality));
    for (int p = 0; p < cfg_.cardinality; ++p) {
        const std::string path = name + ".path" + std::to_string(p);
        NodePtr<T> t = conv2d_relu(x, path + ".reduce", Conv2dSpec::same(width, bottleneck, 1, 1));
        t = conv2d_relu(t, path + ".expand", Conv2dSpec::same(bottleneck, width, 3, 3));
        branches.push_back(t);
    }
    return residual_add(x, branches);
}

template <typename T>
NodePtr<T> MixedSn<T>::forward(const Tensor<T>& batch, RunMode mode, Rng* dropout_rng) {
    if (batch.ndim() != 5 || batch.extent(1) != 1 || batch.extent(2) != cfg_.bands ||
        batch.extent(3) != cfg_.window || batch.extent(4) != cfg_.window)
        throw ShapeError("forward: batch shape " + shape_str(batch.shape()) +
                         " does not match network input (B,1," + std::to_string(cfg_.bands) + "," +
                         std::to_string(cfg_.window) + "," + std::to_string(cfg_.window) + ")");
    if (mode == RunMode::train && cfg_.dropout_rate > 0.0 && dropout_rng == nullptr)
        throw ValueError("forward: train mode requires a dropout rng");

    Rng unused(0);
    Rng& drng = dropout_rng ? *dropout_rng : unused;

    NodePtr<T> x = make_leaf(batch, false, "input");
    x = conv3d_relu(x, "stem", Conv3dSpec::same(1, cfg_.stem_channels, 7, 3, 3));
    x = maxpool3d(x, Pool3dSpec{2, 2, 2, 1, 1, 1});
    x = conv3d_relu(x, "scale3d1", Conv3dSpec::same(cfg_.stem_channels, cfg_.block3d1_width, 1, 1, 1));
    x = resnext3d(x, "block3d1", cfg_.block3d1_width, cfg_.block3d1_bottleneck, 5);
    x = maxpool3d(x, Pool3dSpec{2, 2, 2, 2, 1, 1});
    x = conv3d_relu(x, "scale3d2", Conv3dSpec::same(cfg_.block3d1_width, cfg_.block3d2_width, 1, 1, 1));
    x = resnext3d(x, "block3d2", cfg_.block3d2_width, cfg_.block3d2_bottleneck, 3);
    x = maxpool3d(x, Pool3dSpec{2, 2, 2, 2, 1, 1});
    x = depth_fold(x);
    x = conv2d_relu(x, "scale2d1",
                    Conv2dSpec::same(static_cast<int>(folded_channels_), cfg_.block2d_width, 1, 1));
    x = resnext2d(x, "block2d1", cfg_.block2d_width, cfg_.block2d_bottleneck);
    x = maxpool2d(x, Pool2dSpec{2, 2, 2, 2});
    x = resnext2d(x, "block2d2", cfg_.block2d_width, cfg_.block2d_bottleneck);
    x = maxpool2d(x, Pool2dSpec{2, 2, 2, 2});
    x = conv2d_relu(x, "scale2d2",
                    Conv2dSpec::same(cfg_.block2d_width, cfg_.pre_flatten_channels, 1, 1));
    x = reshape_node(x, {batch.extent(0), flatten_features_});
    x = relu(linear(x, param("fc1.weight"), param("fc1.bias")));
    x = dropout(x, cfg_.dropout_rate, mode, drng);
    x = relu(linear(x, param("fc2.weight"), param("fc2.bias")));
    x = dropout(x, cfg_.dropout_rate, mode, drng);
    x = linear(x, param("fc3.weight"), param("fc3.bias"));

    for (int64_t i = 0; i < x->value.numel(); ++i)
        if (!std::isfinite(static_cast<double>(x->value[i])))
            throw NumericError("forward: non-finite logit (numeric blow-up)");
    return x;
}

template <typename T>
Tensor<T> MixedSn<T>::logits(const Tensor<T>& batch) {
    return forward(batch, RunMode::eval)->value;
}

template class MixedSn<float>;
template class MixedSn<double>;

}  // namespace msn
