// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Runs everything at desk scale against the synthetic scene generator.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msn/checkpoint.hpp"
#include "msn/dataset_io.hpp"
#include "msn/gradcheck.hpp"
#include "msn/trainer.hpp"

namespace fs = std::filesystem;
using namespace msn;
using Clock = std::chrono::steady_clock;

namespace {

struct Criterion {
    int number;
    std::string title;
    std::function<std::string()> run;  // returns detail text; throws on failure
};

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw Failure(what);
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

Tensor<double> randn(Shape shape, Rng& rng, double kink_shift = 0.0, double ramp = 0.0) {
    Tensor<double> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) {
        t[i] = rng.next_gaussian();
        if (kink_shift > 0.0) t[i] += t[i] >= 0.0 ? kink_shift : -kink_shift;
        t[i] += static_cast<double>(i) * ramp;
    }
    return t;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args, const fs::path& out_file) {
    const std::string cmd =
        std::string(MSN_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

MixedSnConfig tiny_config(double dropout = 0.0) {
    MixedSnConfig cfg;
    cfg.bands = 8;
    cfg.window = 7;
    cfg.classes = 4;
    cfg.scale_widths(0.25);
    cfg.dropout_rate = dropout;
    return cfg;
}

// ---- criterion 1: per-op gradient correctness under 60 s ----

std::string criterion_gradients() {
    const auto start = Clock::now();
    double worst = 0.0;
    auto check = [&](const std::string& name, std::vector<Tensor<double>> inputs,
                     const GraphFn& fn, double tol) {
        auto report = grad_check(name, std::move(inputs), fn, 1e-5, tol);
        require(report.pass, name + " max rel err " + std::to_string(report.max_rel_err));
        worst = std::max(worst, report.max_rel_err);
    };
    auto weights_for = [](Shape shape, uint64_t seed) {
        Rng rng(seed);
        Tensor<double> w(std::move(shape));
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.next_gaussian();
        return w;
    };

    {
        Rng rng(1);
        auto spec = Conv3dSpec::same(2, 3, 3, 3, 3);
        auto w = weights_for({1, 3, 3, 4, 4}, 7);
        check("conv3d",
              {randn({1, 2, 3, 4, 4}, rng), randn(spec.weight_shape(), rng),
               randn(spec.bias_shape(), rng)},
              [&, spec, w](const auto& l) {
                  return weighted_sum(conv3d(l[0], l[1], l[2], spec), w);
              },
              1e-4);
    }
    {
        Rng rng(2);
        auto spec = Conv2dSpec::same(2, 3, 3, 3);
        auto w = weights_for({2, 3, 5, 4}, 8);
        check("conv2d",
              {randn({2, 2, 5, 4}, rng), randn(spec.weight_shape(), rng),
               randn(spec.bias_shape(), rng)},
              [&, spec, w](const auto& l) {
                  return weighted_sum(conv2d(l[0], l[1], l[2], spec), w);
              },
              1e-4);
    }
    {
        Rng rng(3);
        auto w = weights_for({4, 6}, 9);
        check("relu", {randn({4, 6}, rng, 0.1)},
              [w](const auto& l) { return weighted_sum(relu(l[0]), w); }, 1e-4);
    }
    {
        Rng rng(4);
        auto w = weights_for({1, 2, 2, 3, 3}, 10);
        check("maxpool3d", {randn({1, 2, 4, 4, 4}, rng, 0.0, 0.01)},
              [w](const auto& l) {
                  return weighted_sum(maxpool3d(l[0], Pool3dSpec{2, 2, 2, 2, 1, 1}), w);
              },
              1e-4);
    }
    {
        Rng rng(5);
        auto w = weights_for({2, 2, 2, 2}, 11);
        check("maxpool2d", {randn({2, 2, 5, 5}, rng, 0.0, 0.01)},
              [w](const auto& l) {
                  return weighted_sum(maxpool2d(l[0], Pool2dSpec{2, 2, 2, 2}), w);
              },
              1e-4);
    }
    {
        Rng rng(6);
        auto w = weights_for({3, 4}, 12);
        check("linear", {randn({3, 5}, rng), randn({4, 5}, rng), randn({4}, rng)},
              [w](const auto& l) { return weighted_sum(linear(l[0], l[1], l[2]), w); }, 1e-4);
    }
    {
        Rng rng(7);
        auto w = weights_for({2, 3}, 13);
        check("residual_add", {randn({2, 3}, rng), randn({2, 3}, rng), randn({2, 3}, rng)},
              [w](const auto& l) {
                  return weighted_sum(residual_add(l[0], {l[1], l[2]}), w);
              },
              1e-4);
    }
    {
        Rng rng(8);
        auto w = weights_for({1, 6, 2, 2}, 14);
        check("depth_fold", {randn({1, 2, 3, 2, 2}, rng)},
              [w](const auto& l) { return weighted_sum(depth_fold(l[0]), w); }, 1e-4);
    }
    {
        Rng rng(9);
        Tensor<double> truth = Tensor<double>::zeros({3, 4});
        truth[1] = 1.0;
        truth[4 + 2] = 1.0;
        truth[8 + 0] = 1.0;
        check("softmax_xent", {randn({3, 4}, rng)},
              [truth](const auto& l) { return softmax_xent(l[0], truth).loss; }, 1e-4);
    }

    const double elapsed = seconds_since(start);
    require(elapsed < 60.0, "suite took " + std::to_string(elapsed) + " s");
    char buf[128];
    std::snprintf(buf, sizeof(buf), "worst rel err %.2e, %.2f s", worst, elapsed);
    return buf;
}

// ---- criterion 2: parameter count ----

std::string criterion_paramcount(const fs::path& work) {
    MixedSn<float> net(MixedSnConfig::for_profile(Profile::ip), Rng(1));
    const int64_t total = net.params().total_parameters();

    int64_t oracle = 0;
    for (const auto& e : net.params().entries) {
        int64_t n = 1;
        for (int64_t ext : e.node->value.shape()) n *= ext;
        oracle += n;
    }
    require(total == oracle, "store total differs from brute-force shape-product sum");

    const double band = std::abs(static_cast<double>(total) - 332864.0) / 332864.0;
    require(band < 0.05, "total " + std::to_string(total) + " outside +/-5% of 332864");

    const fs::path out = work / "paramcount.txt";
    require(run_cli("paramcount --profile ip", out) == 0, "paramcount command failed");
    const std::string text = slurp(out);
    require(text.find(std::to_string(total)) != std::string::npos,
            "CLI total differs from library total");

    char buf[128];
    std::snprintf(buf, sizeof(buf), "total %lld vs 332864 (%+.2f%%)",
                  static_cast<long long>(total), 100.0 * (total - 332864.0) / 332864.0);
    return buf;
}

// ---- criterion 3: split arithmetic ----

std::string criterion_split() {
    struct Row {
        int size, train10, train30;
    };
    const Row rows[16] = {{46, 5, 14},     {1428, 143, 428}, {830, 83, 249},  {237, 24, 71},
                          {483, 48, 145},  {730, 73, 219},   {28, 3, 8},      {478, 48, 143},
                          {20, 2, 6},      {972, 97, 292},   {2455, 245, 736}, {593, 59, 178},
                          {205, 20, 62},   {1265, 126, 379}, {386, 39, 116},  {93, 9, 28}};
    std::vector<int> labels;
    for (int c = 0; c < 16; ++c)
        labels.insert(labels.end(), static_cast<size_t>(rows[c].size), c + 1);

    for (const double fraction : {0.10, 0.30}) {
        auto plan = stratified_split(labels, 16, fraction, 42);
        for (int c = 0; c < 16; ++c) {
            const int expected = fraction == 0.10 ? rows[c].train10 : rows[c].train30;
            const int got = static_cast<int>(plan.train_by_class[static_cast<size_t>(c)].size());
            require(got == expected, "class " + std::to_string(c + 1) + " at " +
                                         std::to_string(fraction) + ": got " +
                                         std::to_string(got) + ", expected " +
                                         std::to_string(expected));
            const int test_got =
                static_cast<int>(plan.test_by_class[static_cast<size_t>(c)].size());
            require(test_got == rows[c].size - expected, "test count mismatch");
        }
    }
    return "all 16 classes exact at 10% and 30%";
}

// ---- criterion 4: patch algebra ----

std::string criterion_patches() {
    Rng rng(900);
    for (int trial = 0; trial < 50; ++trial) {
        const int P = 3 + static_cast<int>(rng.next_below(14));
        const int Q = 3 + static_cast<int>(rng.next_below(14));
        int S = 1 + 2 * static_cast<int>(rng.next_below(4));
        S = std::min(S, std::min(P, Q));
        if (S % 2 == 0) --S;

        ReducedCube rc;
        rc.height = P;
        rc.width = Q;
        rc.bands = 2;
        rc.values.assign(static_cast<size_t>(P) * Q * 2, 1.0f);
        LabelMap labels;
        labels.height = P;
        labels.width = Q;
        labels.ids.assign(static_cast<size_t>(P) * Q, 1);
        labels.class_names = {"c1"};

        auto set = extract_patches(rc, labels, S, PadMode::interior_only);
        require(set.count() == static_cast<int64_t>(P - S + 1) * (Q - S + 1),
                "formula mismatch at P=" + std::to_string(P) + " Q=" + std::to_string(Q) +
                    " S=" + std::to_string(S));

        int64_t brute = 0;
        const int half = S / 2;
        for (int y = 0; y < P; ++y)
            for (int x = 0; x < Q; ++x)
                if (y >= half && y < P - half && x >= half && x < Q - half) ++brute;
        require(set.count() == brute, "brute-force enumeration mismatch");
    }

    // the 145x145, S=25 case
    ReducedCube rc;
    rc.height = 145;
    rc.width = 145;
    rc.bands = 1;
    rc.values.assign(145u * 145u, 0.5f);
    LabelMap labels;
    labels.height = 145;
    labels.width = 145;
    labels.ids.assign(145u * 145u, 1);
    labels.class_names = {"c1"};
    auto set = extract_patches(rc, labels, 25, PadMode::interior_only);
    require(set.count() == 14641, "145/25 case: got " + std::to_string(set.count()));
    return "50 random triples + 145/25 -> 14641";
}

// ---- criterion 5: PCA oracle ----

std::string criterion_pca() {
    Rng meta(404);
    for (int trial = 0; trial < 200; ++trial) {
        const int B = 2 + static_cast<int>(meta.next_below(7));
        const int H = 3 + static_cast<int>(meta.next_below(4));
        const int W = 3 + static_cast<int>(meta.next_below(4));
        HsiCube cube;
        cube.height = H;
        cube.width = W;
        cube.bands = B;
        cube.values.resize(static_cast<size_t>(H) * W * B);
        Rng rng(5000 + static_cast<uint64_t>(trial));
        for (auto& v : cube.values) v = static_cast<float>(rng.next_gaussian());
        const int T = 1 + static_cast<int>(meta.next_below(static_cast<uint64_t>(B)));
        auto rc = pca_reduce(cube, T);

        const int64_t N = cube.pixel_count();
        Eigen::MatrixXd X(N, B);
        for (int64_t i = 0; i < N; ++i)
            for (int b = 0; b < B; ++b) X(i, b) = cube.values[static_cast<size_t>(b) * N + i];
        Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
        Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(N - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
        require(solver.info() == Eigen::Success, "oracle eigensolver failed");
        Eigen::VectorXd evals = solver.eigenvalues().reverse();

        double total = 0.0, kept = 0.0;
        for (int k = 0; k < B; ++k) {
            require(std::abs(rc.eigenvalues[static_cast<size_t>(k)] - evals(k)) < 1e-8,
                    "eigenvalue mismatch at trial " + std::to_string(trial));
            total += evals(k);
            if (k < T) kept += evals(k);
        }
        require(std::abs(rc.retained_variance - kept / total) < 1e-8,
                "retained variance mismatch");
        for (int a = 0; a < T; ++a)
            for (int b = a; b < T; ++b) {
                double dot = 0.0;
                for (int r = 0; r < B; ++r)
                    dot += rc.components[static_cast<size_t>(r) * T + a] *
                           rc.components[static_cast<size_t>(r) * T + b];
                require(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-8, "columns not orthonormal");
            }
    }

    require(MixedSnConfig::for_profile(Profile::ip).bands == 30, "ip preset T != 30");
    require(MixedSnConfig::for_profile(Profile::pu).bands == 15, "pu preset T != 15");
    require(MixedSnConfig::for_profile(Profile::sa).bands == 15, "sa preset T != 15");
    require(MixedSnConfig::for_profile(Profile::bw).bands == 13, "bw preset T != 13");
    return "200 random datasets vs brute-force eigendecomposition; presets 30/15/15/13";
}

// ---- criterion 6: metrics oracle ----

std::string criterion_metrics() {
    ConfusionMatrix cm(2);
    cm.at(1, 1) = 40;
    cm.at(1, 2) = 10;
    cm.at(2, 1) = 5;
    cm.at(2, 2) = 45;
    require(std::abs(overall_accuracy(cm) - 0.85) < 1e-12, "OA != 0.85");
    require(std::abs(average_accuracy(cm) - 0.85) < 1e-12, "AA != 0.85");
    require(std::abs(*kappa(cm) - 0.70) < 1e-12, "Kappa != 0.70");

    ConfusionMatrix perfect(3);
    perfect.at(1, 1) = 7;
    perfect.at(2, 2) = 9;
    perfect.at(3, 3) = 4;
    require(std::abs(*kappa(perfect) - 1.0) < 1e-12, "perfect diagonal Kappa != 1");
    return "OA/AA/Kappa 0.85/0.85/0.70 exact; perfect diagonal -> 1";
}

// ---- criterion 7: desk-scale learning ----

std::string criterion_learning() {
    const auto start = Clock::now();

    SyntheticSceneSpec spec;  // 32x32x8, 4 classes
    spec.blobs_per_class = 1;
    auto [cube, labels] = synth_scene(spec, 11);

    auto reduced = pca_reduce(cube, 8);
    auto patches = extract_patches(reduced, labels, 7, PadMode::zero_pad_border);
    auto split = stratified_split(patches.labels, 4, 0.30, 11);
    standardize(patches, split.train_indices);

    MixedSn<float> net(tiny_config(), Rng(11));
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 8;
    cfg.seed = 11;
    cfg.adam.lr = 3e-3;
    (void)train(net, patches, split, cfg);

    auto result = evaluate(net, patches, split.test_indices);
    const double oa = overall_accuracy(result.confusion);
    require(oa >= 0.95, "test OA " + std::to_string(oa) + " < 0.95");

    // single-batch overfit: 8 patches, loss < 0.01 within 200 steps
    PatchSet eight;
    eight.window = 7;
    eight.bands = 8;
    eight.num_classes = 4;
    const int64_t per_patch = 8 * 7 * 7;
    eight.patches = Tensor<float>({8, 1, 8, 7, 7});
    SplitPlan plan;
    plan.train_by_class.resize(4);
    plan.test_by_class.resize(4);
    for (int64_t k = 0; k < 8; ++k) {
        const int64_t src = split.train_indices[static_cast<size_t>(k)];
        std::copy(patches.patches.data() + src * per_patch,
                  patches.patches.data() + (src + 1) * per_patch,
                  eight.patches.data() + k * per_patch);
        eight.labels.push_back(patches.labels[static_cast<size_t>(src)]);
        eight.centers.push_back({0, 0});
        plan.train_indices.push_back(k);
    }
    MixedSn<float> overfit_net(tiny_config(), Rng(21));
    TrainConfig ocfg;
    ocfg.epochs = 200;
    ocfg.batch_size = 8;
    ocfg.seed = 21;
    auto history = train(overfit_net, eight, plan, ocfg);
    double best = 1e300;
    for (const auto& e : history) best = std::min(best, e.train_loss);
    require(best < 0.01, "overfit loss " + std::to_string(best) + " >= 0.01");

    const double elapsed = seconds_since(start);
    require(elapsed < 300.0, "took " + std::to_string(elapsed) + " s (>5 min)");
    char buf[160];
    std::snprintf(buf, sizeof(buf), "test OA %.4f, overfit loss %.5f, %.1f s", oa, best, elapsed);
    return buf;
}

// ---- criterion 8: deterministic training through the CLI ----

std::string criterion_determinism(const fs::path& work) {
    const fs::path scene = work / "scene";
    fs::create_directories(scene);
    require(run_cli("synth --height 24 --width 24 --bands 8 --classes 3 --blobs 1 --seed 5 "
                    "--out-dir " + scene.string(),
                    work / "synth.log") == 0,
            "synth failed");

    const std::string common =
        "train --cube " + (scene / "scene.cube").string() + " --labels " +
        (scene / "scene.labels").string() +
        " --profile custom --bands 8 --window 7 --width-scale 0.25 --train-frac 0.3 --seed 5 "
        "--epochs 2 --batch 16 --deterministic --out-dir ";
    require(run_cli(common + (work / "run_a").string(), work / "a.log") == 0, "run A failed");
    require(run_cli(common + (work / "run_b").string(), work / "b.log") == 0, "run B failed");

    require(slurp(work / "run_a" / "checkpoint.msnc") == slurp(work / "run_b" / "checkpoint.msnc"),
            "checkpoints differ");
    require(slurp(work / "run_a" / "history.csv") == slurp(work / "run_b" / "history.csv"),
            "history CSVs differ");
    return "checkpoints and histories bitwise identical";
}

// ---- criterion 9: shape contract ----

std::string criterion_shapes() {
    MixedSn<float> net(MixedSnConfig::for_profile(Profile::ip), Rng(3));
    Rng rng(4);
    Tensor<float> batch({2, 1, 30, 25, 25});
    for (int64_t i = 0; i < batch.numel(); ++i)
        batch[i] = static_cast<float>(rng.next_gaussian());
    auto logits = net.logits(batch);
    require(logits.shape() == Shape{2, 16}, "logits shape != (2,16)");
    for (int64_t b = 0; b < 2; ++b) {
        double m = logits[b * 16];
        for (int64_t j = 1; j < 16; ++j) m = std::max(m, static_cast<double>(logits[b * 16 + j]));
        double denom = 0.0;
        for (int64_t j = 0; j < 16; ++j)
            denom += std::exp(static_cast<double>(logits[b * 16 + j]) - m);
        double row = 0.0;
        for (int64_t j = 0; j < 16; ++j)
            row += std::exp(static_cast<double>(logits[b * 16 + j]) - m) / denom;
        require(std::abs(row - 1.0) < 1e-5, "softmax row does not sum to 1");
    }

    for (const auto& r : shape_trace(MixedSnConfig::for_profile(Profile::ip)))
        for (int64_t e : r.out_shape) require(e >= 1, "extent < 1 at " + r.name);

    auto bad = MixedSnConfig::for_profile(Profile::ip);
    bad.window = 5;
    try {
        (void)shape_trace(bad);
        throw Failure("S=5 did not fail");
    } catch (const ShapeError& e) {
        require(std::string(e.what()).find("pool") != std::string::npos,
                "error does not name the pooling layer");
    }
    return "(B,16) logits, unit softmax rows, S=5 rejected at the pool";
}

// ---- criterion 10: format round-trips ----

std::string criterion_formats(const fs::path& work) {
    const fs::path dir = work / "formats";
    fs::create_directories(dir);
    Rng rng(8);

    HsiCube cube;
    cube.height = 6;
    cube.width = 5;
    cube.bands = 4;
    cube.values.resize(120);
    for (auto& v : cube.values) v = static_cast<float>(rng.next_gaussian());
    LabelMap labels;
    labels.height = 6;
    labels.width = 5;
    labels.class_names = {"a", "b", "c"};
    labels.ids.resize(30);
    for (auto& id : labels.ids) id = static_cast<uint16_t>(rng.next_below(4));

    auto p1 = HscPaths::from_base(dir / "one");
    write_hsc(cube, labels, p1);
    auto [cube2, labels2] = read_hsc(p1);
    auto p2 = HscPaths::from_base(dir / "two");
    write_hsc(cube2, labels2, p2);
    require(slurp(p1.cube) == slurp(p2.cube), "cube bytes differ after round-trip");
    require(slurp(p1.labels) == slurp(p2.labels), "label bytes differ after round-trip");

    MixedSn<float> net(tiny_config(0.4), Rng(9));
    const fs::path ck1 = dir / "a.msnc";
    const fs::path ck2 = dir / "b.msnc";
    save_checkpoint(ck1, net, 9);
    auto loaded = load_checkpoint<float>(ck1);
    save_checkpoint(ck2, loaded.net, loaded.seed);
    require(slurp(ck1) == slurp(ck2), "checkpoint bytes differ after round-trip");

    const int H = 9, W = 11, L = 5;
    std::vector<int> ids(static_cast<size_t>(H) * W, 0);
    ids[3] = 2;
    const fs::path ppm = dir / "map.ppm";
    write_class_map(ids, H, W, L, ppm);
    const std::string bytes = slurp(ppm);
    const std::string header = "P6\n11 9\n255\n";
    require(bytes.size() == header.size() + 3u * H * W, "ppm size != header + 3*P*Q");
    require(bytes.rfind(header, 0) == 0, "ppm header mismatch");
    return "HSC bitwise, checkpoint bitwise, PPM sized exactly";
}

}  // namespace

int main() {
    const fs::path work = fs::temp_directory_path() / "msn_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    std::vector<Criterion> criteria = {
        {1, "gradient correctness", criterion_gradients},
        {2, "parameter count", [&] { return criterion_paramcount(work); }},
        {3, "split arithmetic", criterion_split},
        {4, "patch algebra", criterion_patches},
        {5, "pca oracle", criterion_pca},
        {6, "metrics oracle", criterion_metrics},
        {7, "desk-scale learning", criterion_learning},
        {8, "determinism", [&] { return criterion_determinism(work); }},
        {9, "shape contract", criterion_shapes},
        {10, "format round-trips", [&] { return criterion_formats(work); }},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        try {
            const std::string detail = c.run();
            std::printf("[PASS] criterion %2d (%s): %s\n", c.number, c.title.c_str(),
                        detail.c_str());
        } catch (const std::exception& e) {
            std::printf("[FAIL] criterion %2d (%s): %s\n", c.number, c.title.c_str(), e.what());
            ++failures;
        }
        std::fflush(stdout);
    }

    if (failures == 0) {
        std::printf("acceptance: all %zu criteria passed\n", criteria.size());
        return 0;
    }
    std::printf("acceptance: %d criteria FAILED\n", failures);
    return 1;
}
