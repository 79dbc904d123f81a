#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "msn/checkpoint.hpp"
#include "msn/network.hpp"

using namespace msn;

namespace {

MixedSnConfig tiny_config() {
    // T=8, S=9, L=3, all widths quartered
    MixedSnConfig cfg;
    cfg.bands = 8;
    cfg.window = 9;
    cfg.classes = 3;
    cfg.scale_widths(0.25);
    return cfg;
}

template <typename T>
void zero_params(MixedSn<T>& net) {
    for (auto& e : net.params().entries)
        for (int64_t i = 0; i < e.node->value.numel(); ++i) e.node->value[i] = T(0);
}

std::vector<char> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("ip profile parameter count sits in the published band") {
    MixedSn<float> net(MixedSnConfig::for_profile(Profile::ip), Rng(1));
    const int64_t total = net.params().total_parameters();
    CHECK(total == 321488);  // achieved total with the default widths
    const double delta = std::abs(static_cast<double>(total - kIpReferenceParamTotal)) /
                         static_cast<double>(kIpReferenceParamTotal);
    CHECK(delta < 0.05);

    // brute-force oracle: independent traversal over shape products
    int64_t oracle = 0;
    for (const auto& row : parameter_table(net.params())) {
        int64_t n = 1;
        for (int64_t e : row.shape) n *= e;
        oracle += n;
    }
    CHECK(oracle == total);
}

TEST_CASE("per-layer counts match the analytic formulas") {
    MixedSn<float> net(MixedSnConfig::for_profile(Profile::ip), Rng(1));
    int64_t stem = 0, fc3 = 0;
    for (const auto& row : parameter_table(net.params())) {
        if (row.name.rfind("stem.", 0) == 0) stem += row.count;
        if (row.name.rfind("fc3.", 0) == 0) fc3 += row.count;
    }
    CHECK(stem == 512);   // 8*(1*7*3*3) + 8
    CHECK(fc3 == 2064);   // 16*128 + 16
}

TEST_CASE("profiles carry the documented presets") {
    auto ip = MixedSnConfig::for_profile(Profile::ip);
    CHECK(ip.bands == 30);
    CHECK(ip.classes == 16);
    CHECK(ip.dropout_rate == 0.40);
    auto pu = MixedSnConfig::for_profile(Profile::pu);
    CHECK(pu.bands == 15);
    CHECK(pu.classes == 9);
    auto sa = MixedSnConfig::for_profile(Profile::sa);
    CHECK(sa.bands == 15);
    CHECK(sa.classes == 16);
    auto bw = MixedSnConfig::for_profile(Profile::bw);
    CHECK(bw.bands == 13);
    CHECK(bw.classes == 14);
    CHECK(bw.dropout_rate == 0.45);
}

TEST_CASE("config validation") {
    auto cfg = MixedSnConfig::for_profile(Profile::ip);
    cfg.window = 24;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg = MixedSnConfig::for_profile(Profile::ip);
    cfg.bands = 5;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg = MixedSnConfig::for_profile(Profile::ip);
    cfg.classes = 1;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
}

TEST_CASE("width scaling shrinks the parameter table monotonically") {
    auto full = MixedSnConfig::for_profile(Profile::ip);
    auto halved = MixedSnConfig::for_profile(Profile::ip).scale_widths(0.5);
    MixedSn<float> a(full, Rng(1)), b(halved, Rng(1));
    CHECK(b.params().total_parameters() < a.params().total_parameters());
}

TEST_CASE("shape trace for the ip window") {
    auto rows = shape_trace(MixedSnConfig::for_profile(Profile::ip));
    auto find = [&](const std::string& name) {
        for (const auto& r : rows)
            if (r.name == name) return r.out_shape;
        FAIL("missing row ", name);
        return Shape{};
    };
    CHECK(find("stem") == Shape{8, 30, 25, 25});
    CHECK(find("pool1") == Shape{8, 29, 24, 24});
    CHECK(find("block3d1") == Shape{16, 29, 24, 24});
    CHECK(find("pool2") == Shape{16, 14, 23, 23});
    CHECK(find("pool3") == Shape{32, 7, 22, 22});
    CHECK(find("fold") == Shape{224, 22, 22});
    CHECK(find("pool4") == Shape{64, 11, 11});
    CHECK(find("pool5") == Shape{64, 5, 5});
    CHECK(find("flatten") == Shape{800});
    CHECK(find("fc3") == Shape{16});
    for (const auto& r : rows)
        for (int64_t e : r.out_shape) CHECK(e >= 1);
}

TEST_CASE("shape trace rejects windows the pooling schedule exhausts") {
    auto cfg = MixedSnConfig::for_profile(Profile::ip);
    cfg.window = 5;
    CHECK_THROWS_WITH_AS((void)shape_trace(cfg),
                         doctest::Contains("pool5"), ShapeError);
}

TEST_CASE("exactly five pooling layers with the documented schedule") {
    auto rows = shape_trace(MixedSnConfig::for_profile(Profile::ip));
    std::vector<std::string> pools;
    for (const auto& r : rows)
        if (r.kind.rfind("maxpool", 0) == 0) pools.push_back(r.name + " " + r.kind);
    REQUIRE(pools.size() == 5);
    CHECK(pools[0] == "pool1 maxpool3d 2x2x2 stride (1,1,1)");
    CHECK(pools[1] == "pool2 maxpool3d 2x2x2 stride (depth 2, spatial 1)");
    CHECK(pools[2] == "pool3 maxpool3d 2x2x2 stride (depth 2, spatial 1)");
    CHECK(pools[3] == "pool4 maxpool2d 2x2 stride 2");
    CHECK(pools[4] == "pool5 maxpool2d 2x2 stride 2");
}

TEST_CASE("same-padded conv stages preserve extents in the trace") {
    auto rows = shape_trace(MixedSnConfig::for_profile(Profile::ip));
    // conv/resnext stages keep (D,H,W); only pools and the fold change them
    for (size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.kind.rfind("conv", 0) == 0 || r.kind.rfind("resnext", 0) == 0) {
            const auto& prev = rows[i - 1].out_shape;
            const auto& cur = r.out_shape;
            REQUIRE(prev.size() == cur.size());
            for (size_t a = 1; a < cur.size(); ++a) CHECK(cur[a] == prev[a]);
        }
    }
}

TEST_CASE("smallest sensible custom profile builds") {
    MixedSnConfig cfg;
    cfg.bands = 8;
    cfg.window = 9;
    cfg.classes = 2;
    MixedSn<float> net(cfg, Rng(3));
    Tensor<float> batch = Tensor<float>::zeros({1, 1, 8, 9, 9});
    auto logits = net.logits(batch);
    CHECK(logits.shape() == Shape{1, 2});
}

TEST_CASE("zero weights give uniform class probabilities") {
    MixedSn<float> net(tiny_config(), Rng(5));
    zero_params(net);
    Tensor<float> batch = Tensor<float>::zeros({2, 1, 8, 9, 9});
    auto logits = net.logits(batch);
    for (int64_t i = 0; i < logits.numel(); ++i) CHECK(logits[i] == 0.0f);
}

TEST_CASE("ip profile forward yields (B,16) logits with unit softmax rows") {
    MixedSn<float> net(MixedSnConfig::for_profile(Profile::ip), Rng(7));
    Rng rng(8);
    Tensor<float> batch({2, 1, 30, 25, 25});
    for (int64_t i = 0; i < batch.numel(); ++i)
        batch[i] = static_cast<float>(rng.next_gaussian());
    auto logits = net.logits(batch);
    REQUIRE(logits.shape() == Shape{2, 16});
    for (int64_t b = 0; b < 2; ++b) {
        double m = logits[b * 16];
        for (int64_t j = 1; j < 16; ++j) m = std::max(m, static_cast<double>(logits[b * 16 + j]));
        double denom = 0.0;
        for (int64_t j = 0; j < 16; ++j) denom += std::exp(static_cast<double>(logits[b * 16 + j]) - m);
        double row = 0.0;
        for (int64_t j = 0; j < 16; ++j)
            row += std::exp(static_cast<double>(logits[b * 16 + j]) - m) / denom;
        CHECK(row == doctest::Approx(1.0).epsilon(1e-5));
    }
    CHECK_THROWS_AS((void)net.logits(Tensor<float>::zeros({1, 1, 15, 25, 25})), ShapeError);
}

TEST_CASE("eval forward is bitwise deterministic") {
    MixedSn<float> net(tiny_config(), Rng(11));
    Rng rng(12);
    Tensor<float> batch({3, 1, 8, 9, 9});
    for (int64_t i = 0; i < batch.numel(); ++i)
        batch[i] = static_cast<float>(rng.next_gaussian());
    auto a = net.logits(batch);
    auto b = net.logits(batch);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("forward is permutation-equivariant over the batch") {
    MixedSn<float> net(tiny_config(), Rng(13));
    Rng rng(14);
    Tensor<float> batch({3, 1, 8, 9, 9});
    for (int64_t i = 0; i < batch.numel(); ++i)
        batch[i] = static_cast<float>(rng.next_gaussian());
    auto base = net.logits(batch);

    const int64_t stride = batch.numel() / 3;
    Tensor<float> shuffled(batch.shape());
    const int perm[3] = {2, 0, 1};
    for (int64_t b = 0; b < 3; ++b)
        std::copy(batch.data() + perm[b] * stride, batch.data() + (perm[b] + 1) * stride,
                  shuffled.data() + b * stride);
    auto moved = net.logits(shuffled);
    const int L = 3;
    for (int64_t b = 0; b < 3; ++b)
        for (int64_t j = 0; j < L; ++j)
            CHECK(moved[b * L + j] == base[perm[b] * L + j]);
}

TEST_CASE("same seed rebuilds identical parameters") {
    MixedSn<float> a(tiny_config(), Rng(21));
    MixedSn<float> b(tiny_config(), Rng(21));
    REQUIRE(a.params().entries.size() == b.params().entries.size());
    for (size_t i = 0; i < a.params().entries.size(); ++i) {
        const auto& x = a.params().entries[i].node->value;
        const auto& y = b.params().entries[i].node->value;
        for (int64_t j = 0; j < x.numel(); ++j) CHECK(x[j] == y[j]);
    }
}

TEST_CASE("parameter names are unique and ordered deterministically") {
    MixedSn<float> net(tiny_config(), Rng(22));
    const auto& entries = net.params().entries;
    for (size_t i = 0; i < entries.size(); ++i)
        for (size_t j = i + 1; j < entries.size(); ++j)
            CHECK(entries[i].name != entries[j].name);
    CHECK(entries.front().name == "stem.weight");
    CHECK(entries.back().name == "fc3.bias");
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "msn_ckpt_test";
    fs::create_directories(dir);
    const fs::path first = dir / "a.msnc";
    const fs::path second = dir / "b.msnc";

    MixedSn<float> net(tiny_config(), Rng(31));
    save_checkpoint(first, net, 31);
    auto loaded = load_checkpoint<float>(first);
    CHECK(loaded.seed == 31);
    save_checkpoint(second, loaded.net, loaded.seed);

    CHECK(slurp(first) == slurp(second));

    Rng rng(32);
    Tensor<float> batch({1, 1, 8, 9, 9});
    for (int64_t i = 0; i < batch.numel(); ++i)
        batch[i] = static_cast<float>(rng.next_gaussian());
    auto a = net.logits(batch);
    auto b = loaded.net.logits(batch);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);

    fs::remove_all(dir);
}

TEST_CASE("zeroed block paths make every block an exact identity") {
    // With all path weights/biases zero each branch is relu(0) = 0, so the
    // residual sum must return its input untouched and the whole network
    // must equal the block-free pipeline composed from the same parameters.
    MixedSnConfig cfg = tiny_config();
    MixedSn<float> net(cfg, Rng(51));
    for (auto& e : net.params().entries)
        if (e.name.find("block") != std::string::npos)
            for (int64_t i = 0; i < e.node->value.numel(); ++i) e.node->value[i] = 0.0f;

    Rng rng(52);
    Tensor<float> batch({2, 1, 8, 9, 9});
    for (int64_t i = 0; i < batch.numel(); ++i)
        batch[i] = static_cast<float>(rng.next_gaussian());
    auto got = net.logits(batch);

    auto p = [&](const std::string& name) {
        for (auto& e : net.params().entries)
            if (e.name == name) return e.node;
        FAIL("missing param ", name);
        return NodePtr<float>{};
    };
    auto cr3 = [&](NodePtr<float> x, const std::string& name, const Conv3dSpec& s) {
        return relu(conv3d(x, p(name + ".weight"), p(name + ".bias"), s));
    };
    auto cr2 = [&](NodePtr<float> x, const std::string& name, const Conv2dSpec& s) {
        return relu(conv2d(x, p(name + ".weight"), p(name + ".bias"), s));
    };

    NodePtr<float> x = make_leaf(batch, false);
    x = cr3(x, "stem", Conv3dSpec::same(1, cfg.stem_channels, 7, 3, 3));
    x = maxpool3d(x, Pool3dSpec{2, 2, 2, 1, 1, 1});
    x = cr3(x, "scale3d1", Conv3dSpec::same(cfg.stem_channels, cfg.block3d1_width, 1, 1, 1));
    x = maxpool3d(x, Pool3dSpec{2, 2, 2, 2, 1, 1});
    x = cr3(x, "scale3d2", Conv3dSpec::same(cfg.block3d1_width, cfg.block3d2_width, 1, 1, 1));
    x = maxpool3d(x, Pool3dSpec{2, 2, 2, 2, 1, 1});
    x = depth_fold(x);
    x = cr2(x, "scale2d1",
            Conv2dSpec::same(static_cast<int>(net.folded_channels()), cfg.block2d_width, 1, 1));
    x = maxpool2d(x, Pool2dSpec{2, 2, 2, 2});
    x = maxpool2d(x, Pool2dSpec{2, 2, 2, 2});
    x = cr2(x, "scale2d2", Conv2dSpec::same(cfg.block2d_width, cfg.pre_flatten_channels, 1, 1));
    x = reshape_node(x, {2, net.flatten_features()});
    x = relu(linear(x, p("fc1.weight"), p("fc1.bias")));
    x = relu(linear(x, p("fc2.weight"), p("fc2.bias")));
    x = linear(x, p("fc3.weight"), p("fc3.bias"));

    REQUIRE(got.shape() == x->value.shape());
    for (int64_t i = 0; i < got.numel(); ++i) CHECK(got[i] == x->value[i]);
}

TEST_CASE("doubling path output weights doubles the block residual") {
    // Pre-ReLU block form: paths are conv -> relu -> conv, summed onto the
    // skip connection. The residual (y - x) is linear in the final conv
    // weights.
    Rng rng(61);
    const int width = 6, bottleneck = 2, cardinality = 4;
    Tensor<double> xv({1, width, 5, 5});
    for (int64_t i = 0; i < xv.numel(); ++i) xv[i] = rng.next_gaussian();

    auto reduce_spec = Conv2dSpec::same(width, bottleneck, 1, 1);
    auto expand_spec = Conv2dSpec::same(bottleneck, width, 3, 3);
    std::vector<Tensor<double>> rw, rb, ew, eb;
    for (int c = 0; c < cardinality; ++c) {
        Tensor<double> w1(reduce_spec.weight_shape()), b1(reduce_spec.bias_shape());
        Tensor<double> w2(expand_spec.weight_shape()), b2(expand_spec.bias_shape());
        for (int64_t i = 0; i < w1.numel(); ++i) w1[i] = rng.next_gaussian();
        for (int64_t i = 0; i < b1.numel(); ++i) b1[i] = rng.next_gaussian();
        for (int64_t i = 0; i < w2.numel(); ++i) w2[i] = rng.next_gaussian();
        rw.push_back(w1);
        rb.push_back(b1);
        ew.push_back(w2);
        eb.push_back(b2);  // zero expand bias keeps the residual homogeneous
    }

    auto block = [&](double weight_factor) {
        auto x = make_leaf(xv, false);
        std::vector<NodePtr<double>> branches;
        for (int c = 0; c < cardinality; ++c) {
            auto h = relu(conv2d(x, make_leaf(rw[static_cast<size_t>(c)], false),
                                 make_leaf(rb[static_cast<size_t>(c)], false), reduce_spec));
            branches.push_back(conv2d(h,
                                      make_leaf(scale(ew[static_cast<size_t>(c)], weight_factor),
                                                false),
                                      make_leaf(eb[static_cast<size_t>(c)], false), expand_spec));
        }
        return residual_add(x, branches)->value;
    };

    auto y1 = block(1.0);
    auto y2 = block(2.0);
    for (int64_t i = 0; i < xv.numel(); ++i) {
        const double r1 = y1[i] - xv[i];
        const double r2 = y2[i] - xv[i];
        CHECK(r2 == doctest::Approx(2.0 * r1).epsilon(1e-6));
    }
}

TEST_CASE("end-to-end gradients match central differences on the tiny profile") {
    MixedSn<double> net(tiny_config(), Rng(41));
    Rng rng(42);
    Tensor<double> batch({1, 1, 8, 9, 9});
    for (int64_t i = 0; i < batch.numel(); ++i) batch[i] = rng.next_gaussian();
    Tensor<double> truth = Tensor<double>::zeros({1, 3});
    truth[1] = 1.0;

    auto loss_value = [&]() {
        auto logits = net.forward(batch, RunMode::eval);
        return softmax_xent(logits, truth).loss->value[0];
    };

    net.params().zero_grads();
    auto logits = net.forward(batch, RunMode::eval);
    auto loss = softmax_xent(logits, truth);
    backward(loss.loss);

    const double h = 1e-5;
    double max_rel = 0.0;
    for (auto& e : net.params().entries) {
        auto& value = e.node->value;
        const Tensor<double>& analytic =
            e.node->grad_ready ? e.node->grad : Tensor<double>::zeros(value.shape());
        for (int64_t j = 0; j < value.numel(); ++j) {
            const double saved = value[j];
            value[j] = saved + h;
            const double up = loss_value();
            value[j] = saved - h;
            const double down = loss_value();
            value[j] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[j];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    }
    INFO("max rel err = ", max_rel);
    CHECK(max_rel < 1e-3);
}
