#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "msn/checkpoint.hpp"
#include "msn/dataset_io.hpp"
#include "msn/gradcheck.hpp"
#include "msn/trainer.hpp"
#include "msn/version.hpp"
#include "pipeline.hpp"

namespace fs = std::filesystem;
using namespace msn;
using msn::cli::PipelineOpts;

namespace {

void ensure_out_dir(const PipelineOpts& opts) {
    fs::create_directories(opts.out_dir);
}

// --- synth ---

struct SynthOpts {
    SyntheticSceneSpec spec;
    uint64_t seed = 0;
    std::string out_dir = ".";
    std::string name = "scene";
};

void run_synth(const SynthOpts& o) {
    fs::create_directories(o.out_dir);
    auto [cube, labels] = synth_scene(o.spec, o.seed);
    auto paths = HscPaths::from_base(fs::path(o.out_dir) / o.name);
    write_hsc(cube, labels, paths);

    PipelineOpts manifest_opts;
    manifest_opts.cube_path = paths.cube.string();
    manifest_opts.labels_path = paths.labels.string();
    manifest_opts.manifest_path = paths.manifest.string();
    manifest_opts.seed = o.seed;
    manifest_opts.out_dir = o.out_dir;
    nlohmann::json extra;
    extra["height"] = o.spec.height;
    extra["width"] = o.spec.width;
    extra["scene_bands"] = o.spec.bands;
    extra["classes"] = o.spec.classes;
    extra["blobs_per_class"] = o.spec.blobs_per_class;
    extra["noise_std"] = o.spec.noise_std;
    extra["border_mix"] = o.spec.border_mix;
    extra["name"] = o.name;
    msn::cli::write_run_manifest("synth", manifest_opts, extra);

    std::printf("synth: wrote %dx%dx%d scene with %d classes to %s\n", o.spec.height,
                o.spec.width, o.spec.bands, o.spec.classes, o.out_dir.c_str());
}

// --- pca ---

void run_pca(const PipelineOpts& opts) {
    ensure_out_dir(opts);
    auto paths = msn::cli::resolve_hsc_paths(opts);
    auto [cube, labels] = read_hsc(paths);
    const MixedSnConfig cfg = msn::cli::resolve_network_config(opts, labels.num_classes());
    auto reduced = pca_reduce(cube, cfg.bands);

    HsiCube out_cube;
    out_cube.height = reduced.height;
    out_cube.width = reduced.width;
    out_cube.bands = reduced.bands;
    out_cube.values = reduced.values;
    write_hsc(out_cube, labels, HscPaths::from_base(fs::path(opts.out_dir) / "reduced"));

    nlohmann::json summary;
    summary["bands"] = reduced.bands;
    summary["original_bands"] = reduced.original_bands;
    summary["retained_variance"] = reduced.retained_variance;
    summary["eigenvalues"] = reduced.eigenvalues;
    std::ofstream sf(fs::path(opts.out_dir) / "pca_summary.json");
    sf << summary.dump(2) << "\n";

    msn::cli::write_run_manifest("pca", opts, {});
    std::printf("pca: %d -> %d bands, retained variance %.6f\n", reduced.original_bands,
                reduced.bands, reduced.retained_variance);
}

// --- patch ---

void run_patch(const PipelineOpts& opts) {
    ensure_out_dir(opts);
    auto paths = msn::cli::resolve_hsc_paths(opts);
    auto [cube, labels] = read_hsc(paths);
    const MixedSnConfig cfg = msn::cli::resolve_network_config(opts, labels.num_classes());
    auto reduced = pca_reduce(cube, cfg.bands);
    auto patches = extract_patches(reduced, labels, cfg.window,
                                   pad_mode_from_name(opts.pad_mode));

    std::vector<int64_t> per_class(static_cast<size_t>(labels.num_classes()), 0);
    for (int label : patches.labels) per_class[static_cast<size_t>(label - 1)]++;

    nlohmann::json summary;
    summary["count"] = patches.count();
    summary["window"] = patches.window;
    summary["bands"] = patches.bands;
    summary["pad_mode"] = pad_mode_name(patches.mode);
    summary["per_class"] = per_class;
    std::ofstream sf(fs::path(opts.out_dir) / "patch_summary.json");
    sf << summary.dump(2) << "\n";

    msn::cli::write_run_manifest("patch", opts, {});
    std::printf("patch: %" PRId64 " patches of %dx%dx%d (%s mode)\n", patches.count(),
                patches.bands, patches.window, patches.window,
                pad_mode_name(patches.mode).c_str());
}

// --- split ---

void run_split(const PipelineOpts& opts) {
    ensure_out_dir(opts);
    auto paths = msn::cli::resolve_hsc_paths(opts);
    auto [cube, labels] = read_hsc(paths);
    const MixedSnConfig cfg = msn::cli::resolve_network_config(opts, labels.num_classes());
    auto reduced = pca_reduce(cube, cfg.bands);
    auto patches = extract_patches(reduced, labels, cfg.window,
                                   pad_mode_from_name(opts.pad_mode));
    auto plan = stratified_split(patches.labels, labels.num_classes(), opts.train_frac, opts.seed);

    nlohmann::json j;
    j["fraction"] = plan.fraction;
    j["seed"] = plan.seed;
    nlohmann::json per_class = nlohmann::json::array();
    for (int c = 0; c < labels.num_classes(); ++c) {
        nlohmann::json row;
        row["class"] = c + 1;
        row["name"] = labels.class_names[static_cast<size_t>(c)];
        row["train"] = plan.train_by_class[static_cast<size_t>(c)].size();
        row["test"] = plan.test_by_class[static_cast<size_t>(c)].size();
        per_class.push_back(row);
    }
    j["per_class"] = per_class;
    j["train_total"] = plan.train_indices.size();
    j["test_total"] = plan.test_indices.size();
    j["train_indices"] = plan.train_indices;
    j["test_indices"] = plan.test_indices;
    std::ofstream sf(fs::path(opts.out_dir) / "split.json");
    sf << j.dump(2) << "\n";

    msn::cli::write_run_manifest("split", opts, {});
    std::printf("split: %zu train / %zu test at fraction %.2f\n", plan.train_indices.size(),
                plan.test_indices.size(), plan.fraction);
}

// --- train ---

struct TrainOpts {
    PipelineOpts pipe;
    int epochs = 100;
    int batch = 64;
    double lr = 1e-3;
    double weight_decay = 1e-6;
    bool track_test = false;
};

nlohmann::json train_extra(const TrainOpts& o) {
    nlohmann::json extra;
    extra["epochs"] = o.epochs;
    extra["batch"] = o.batch;
    extra["lr"] = o.lr;
    extra["weight_decay"] = o.weight_decay;
    extra["track_test"] = o.track_test;
    return extra;
}

void run_train(const TrainOpts& o) {
    ensure_out_dir(o.pipe);
    auto data = msn::cli::prepare(o.pipe);
    MixedSn<float> net(data.net_config, Rng(o.pipe.seed));

    TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch;
    cfg.seed = o.pipe.seed;
    cfg.track_test = o.track_test;
    cfg.adam.lr = o.lr;
    cfg.adam.weight_decay = o.weight_decay;

    auto history = train(net, data.patches, data.split, cfg);

    save_checkpoint(fs::path(o.pipe.out_dir) / "checkpoint.msnc", net, o.pipe.seed);
    write_history_csv(fs::path(o.pipe.out_dir) / "history.csv", history);
    msn::cli::write_run_manifest("train", o.pipe, train_extra(o));

    const auto& last = history.back();
    std::printf("train: %d epochs, final loss %.6f, train acc %.4f", o.epochs, last.train_loss,
                last.train_acc);
    if (last.test_acc) std::printf(", test acc %.4f", *last.test_acc);
    std::printf("\n");
}

// --- eval / predict-map ---

struct EvalOpts {
    PipelineOpts pipe;
    std::string checkpoint;
    std::string subset = "test";  // train | test | all
};

std::vector<int64_t> subset_indices(const msn::cli::PreparedData& data,
                                    const std::string& subset) {
    if (subset == "train") return data.split.train_indices;
    if (subset == "test") return data.split.test_indices;
    if (subset == "all") {
        std::vector<int64_t> all(static_cast<size_t>(data.patches.count()));
        for (int64_t i = 0; i < data.patches.count(); ++i) all[static_cast<size_t>(i)] = i;
        return all;
    }
    throw ValueError("unknown subset '" + subset + "' (expected train, test or all)");
}

msn::cli::PreparedData prepare_for_checkpoint(PipelineOpts& pipe, const MixedSn<float>& net) {
    pipe.bands = net.config().bands;
    pipe.window = net.config().window;
    auto data = msn::cli::prepare(pipe);
    if (data.labels.num_classes() != net.config().classes)
        throw ValueError("checkpoint/network shape mismatch: checkpoint has " +
                         std::to_string(net.config().classes) + " classes, dataset has " +
                         std::to_string(data.labels.num_classes()));
    return data;
}

void run_eval(EvalOpts o) {
    ensure_out_dir(o.pipe);
    auto loaded = load_checkpoint<float>(o.checkpoint);
    auto data = prepare_for_checkpoint(o.pipe, loaded.net);
    auto indices = subset_indices(data, o.subset);
    if (indices.empty()) throw ValueError("eval: subset '" + o.subset + "' is empty");

    auto result = evaluate(loaded.net, data.patches, indices);
    auto report = compute_metrics(result.confusion);
    write_metrics_json(fs::path(o.pipe.out_dir) / "metrics.json", report);
    write_confusion_csv(fs::path(o.pipe.out_dir) / "confusion.csv", result.confusion,
                        data.labels.class_names);

    nlohmann::json extra;
    extra["checkpoint"] = o.checkpoint;
    extra["subset"] = o.subset;
    msn::cli::write_run_manifest("eval", o.pipe, extra);

    std::printf("eval (%s): OA %.4f  AA %.4f  Kappa %s  n=%" PRId64 "\n", o.subset.c_str(),
                report.oa, report.aa,
                report.kappa ? std::to_string(*report.kappa).c_str() : "undefined",
                report.n_samples);
}

void run_predict_map(EvalOpts o) {
    ensure_out_dir(o.pipe);
    auto loaded = load_checkpoint<float>(o.checkpoint);
    auto data = prepare_for_checkpoint(o.pipe, loaded.net);

    std::vector<int64_t> all(static_cast<size_t>(data.patches.count()));
    for (int64_t i = 0; i < data.patches.count(); ++i) all[static_cast<size_t>(i)] = i;
    auto preds = predict(loaded.net, data.patches, all);

    // unlabeled pixels (and interior-mode borders) stay class 0 = black
    std::vector<int> grid(static_cast<size_t>(data.labels.height) * data.labels.width, 0);
    for (size_t k = 0; k < preds.size(); ++k) {
        const auto [y, x] = data.patches.centers[k];
        grid[static_cast<size_t>(y) * data.labels.width + x] = preds[k];
    }
    const fs::path map = fs::path(o.pipe.out_dir) / "map.ppm";
    write_class_map(grid, data.labels.height, data.labels.width, data.labels.num_classes(), map);

    nlohmann::json extra;
    extra["checkpoint"] = o.checkpoint;
    msn::cli::write_run_manifest("predict-map", o.pipe, extra);
    std::printf("predict-map: wrote %s (%dx%d)\n", map.string().c_str(), data.labels.width,
                data.labels.height);
}

// --- paramcount ---

struct ParamCountOpts {
    std::string profile = "ip";
    int bands = -1;
    int window = 25;
    int classes = -1;
    double width_scale = 1.0;
};

void run_paramcount(const ParamCountOpts& o) {
    MixedSnConfig cfg = MixedSnConfig::for_profile(profile_from_name(o.profile));
    if (o.bands > 0) cfg.bands = o.bands;
    cfg.window = o.window;
    if (o.classes > 0) cfg.classes = o.classes;
    if (o.width_scale != 1.0) cfg.scale_widths(o.width_scale);

    MixedSn<float> net(cfg, Rng(0));
    const auto table = parameter_table(net.params());
    std::printf("%-28s %-20s %12s\n", "parameter", "shape", "count");
    for (const auto& row : table)
        std::printf("%-28s %-20s %12" PRId64 "\n", row.name.c_str(),
                    shape_str(row.shape).c_str(), row.count);
    const int64_t total = net.params().total_parameters();
    std::printf("%-28s %-20s %12" PRId64 "\n", "total", "", total);

    if (o.profile == "ip" && o.width_scale == 1.0 && o.bands <= 0 && o.classes <= 0 &&
        o.window == 25) {
        const double delta = 100.0 * static_cast<double>(total - kIpReferenceParamTotal) /
                             static_cast<double>(kIpReferenceParamTotal);
        std::printf("reference total (ip): %" PRId64 ", delta %+.2f%%\n", kIpReferenceParamTotal,
                    delta);
    }
}

// --- gradcheck ---

struct GradCheckOpts {
    std::vector<std::string> ops = {"all"};
    std::string dtype = "f64";
    double tol = 1e-4;
    double step = 1e-5;
};

Tensor<double> gc_randn(Shape shape, Rng& rng, double kink_shift = 0.0, double ramp = 0.0) {
    Tensor<double> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) {
        t[i] = rng.next_gaussian();
        if (kink_shift > 0.0) t[i] += t[i] >= 0.0 ? kink_shift : -kink_shift;
        t[i] += static_cast<double>(i) * ramp;
    }
    return t;
}

int run_gradcheck(const GradCheckOpts& o) {
    if (o.dtype != "f64")
        throw ValueError("gradcheck requires --dtype f64 (float32 probes are too noisy)");

    std::map<std::string, std::function<GradCheckReport()>> checks;
    auto weights_for = [](Shape shape, uint64_t seed) {
        Rng rng(seed);
        Tensor<double> w(std::move(shape));
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.next_gaussian();
        return w;
    };

    checks["conv3d"] = [&] {
        Rng rng(1);
        auto spec = Conv3dSpec::same(2, 3, 3, 3, 3);
        std::vector<Tensor<double>> inputs = {gc_randn({1, 2, 3, 4, 4}, rng),
                                              gc_randn(spec.weight_shape(), rng),
                                              gc_randn(spec.bias_shape(), rng)};
        auto w = weights_for({1, 3, 3, 4, 4}, 7);
        return grad_check("conv3d", inputs, [&](const auto& l) {
            return weighted_sum(conv3d(l[0], l[1], l[2], spec), w);
        }, o.step, o.tol);
    };
    checks["conv2d"] = [&] {
        Rng rng(2);
        auto spec = Conv2dSpec::same(2, 3, 3, 3);
        std::vector<Tensor<double>> inputs = {gc_randn({2, 2, 5, 4}, rng),
                                              gc_randn(spec.weight_shape(), rng),
                                              gc_randn(spec.bias_shape(), rng)};
        auto w = weights_for({2, 3, 5, 4}, 8);
        return grad_check("conv2d", inputs, [&](const auto& l) {
            return weighted_sum(conv2d(l[0], l[1], l[2], spec), w);
        }, o.step, o.tol);
    };
    checks["relu"] = [&] {
        Rng rng(3);
        std::vector<Tensor<double>> inputs = {gc_randn({4, 6}, rng, 0.1)};
        auto w = weights_for({4, 6}, 9);
        return grad_check("relu", inputs, [&](const auto& l) {
            return weighted_sum(relu(l[0]), w);
        }, o.step, o.tol);
    };
    checks["maxpool3d"] = [&] {
        Rng rng(4);
        std::vector<Tensor<double>> inputs = {gc_randn({1, 2, 4, 4, 4}, rng, 0.0, 0.01)};
        auto w = weights_for({1, 2, 2, 3, 3}, 10);
        return grad_check("maxpool3d", inputs, [&](const auto& l) {
            return weighted_sum(maxpool3d(l[0], Pool3dSpec{2, 2, 2, 2, 1, 1}), w);
        }, o.step, o.tol);
    };
    checks["maxpool2d"] = [&] {
        Rng rng(5);
        std::vector<Tensor<double>> inputs = {gc_randn({2, 2, 5, 5}, rng, 0.0, 0.01)};
        auto w = weights_for({2, 2, 2, 2}, 11);
        return grad_check("maxpool2d", inputs, [&](const auto& l) {
            return weighted_sum(maxpool2d(l[0], Pool2dSpec{2, 2, 2, 2}), w);
        }, o.step, o.tol);
    };
    checks["linear"] = [&] {
        Rng rng(6);
        std::vector<Tensor<double>> inputs = {gc_randn({3, 5}, rng), gc_randn({4, 5}, rng),
                                              gc_randn({4}, rng)};
        auto w = weights_for({3, 4}, 12);
        return grad_check("linear", inputs, [&](const auto& l) {
            return weighted_sum(linear(l[0], l[1], l[2]), w);
        }, o.step, o.tol);
    };
    checks["residual_add"] = [&] {
        Rng rng(7);
        std::vector<Tensor<double>> inputs = {gc_randn({2, 3}, rng), gc_randn({2, 3}, rng),
                                              gc_randn({2, 3}, rng)};
        auto w = weights_for({2, 3}, 13);
        return grad_check("residual_add", inputs, [&](const auto& l) {
            return weighted_sum(residual_add(l[0], {l[1], l[2]}), w);
        }, o.step, o.tol);
    };
    checks["depth_fold"] = [&] {
        Rng rng(8);
        std::vector<Tensor<double>> inputs = {gc_randn({1, 2, 3, 2, 2}, rng)};
        auto w = weights_for({1, 6, 2, 2}, 14);
        return grad_check("depth_fold", inputs, [&](const auto& l) {
            return weighted_sum(depth_fold(l[0]), w);
        }, o.step, o.tol);
    };
    checks["softmax_xent"] = [&] {
        Rng rng(9);
        Tensor<double> truth = Tensor<double>::zeros({3, 4});
        truth[1] = 1.0;
        truth[4 + 2] = 1.0;
        truth[8 + 0] = 1.0;
        std::vector<Tensor<double>> inputs = {gc_randn({3, 4}, rng)};
        return grad_check("softmax_xent", inputs, [&](const auto& l) {
            return softmax_xent(l[0], truth).loss;
        }, o.step, o.tol);
    };
    checks["dropout"] = [&] {
        Rng rng(10);
        std::vector<Tensor<double>> inputs = {gc_randn({4, 4}, rng)};
        auto w = weights_for({4, 4}, 15);
        return grad_check("dropout", inputs, [&](const auto& l) {
            Rng mask_rng(77);
            return weighted_sum(dropout(l[0], 0.4, RunMode::train, mask_rng), w);
        }, o.step, o.tol);
    };

    std::vector<std::string> selected;
    for (const auto& name : o.ops) {
        if (name == "all") {
            for (const auto& [k, fn] : checks) selected.push_back(k);
        } else if (checks.count(name)) {
            selected.push_back(name);
        } else {
            throw ValueError("unknown op '" + name + "' for gradcheck");
        }
    }

    bool all_pass = true;
    for (const auto& name : selected) {
        auto report = checks[name]();
        std::printf("%-14s max_rel_err %.3e  tol %.1e  %s\n", name.c_str(), report.max_rel_err,
                    report.tolerance, report.pass ? "PASS" : "FAIL");
        all_pass = all_pass && report.pass;
    }
    if (!all_pass) throw NumericError("gradcheck: at least one op failed its tolerance");
    return 0;
}

// --- sweep ---

struct SweepOpts {
    TrainOpts train;
    std::vector<double> fractions;
    int num_seeds = 1;
};

void run_sweep(const SweepOpts& o) {
    if (o.fractions.size() < 2) throw ValueError("sweep: need at least two fractions");
    std::set<double> unique(o.fractions.begin(), o.fractions.end());
    if (unique.size() != o.fractions.size())
        throw ValueError("sweep: duplicate fractions rejected");
    for (double f : o.fractions)
        if (f <= 0.0 || f >= 1.0)
            throw ValueError("sweep: fraction " + std::to_string(f) + " outside (0,1)");
    if (o.num_seeds < 1) throw ValueError("sweep: need at least one seed");

    ensure_out_dir(o.train.pipe);
    const fs::path csv_path = fs::path(o.train.pipe.out_dir) / "sweep.csv";
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write " + csv_path.string());
    csv << "fraction,oa_mean,oa_std,aa_mean,aa_std,kappa_mean,kappa_std\n";
    csv << std::fixed << std::setprecision(6);

    for (double fraction : o.fractions) {
        std::vector<MetricsReport> runs;
        for (int s = 0; s < o.num_seeds; ++s) {
            PipelineOpts pipe = o.train.pipe;
            pipe.train_frac = fraction;
            pipe.seed = o.train.pipe.seed + static_cast<uint64_t>(s);
            auto data = msn::cli::prepare(pipe);
            MixedSn<float> net(data.net_config, Rng(pipe.seed));
            TrainConfig cfg;
            cfg.epochs = o.train.epochs;
            cfg.batch_size = o.train.batch;
            cfg.seed = pipe.seed;
            cfg.adam.lr = o.train.lr;
            cfg.adam.weight_decay = o.train.weight_decay;
            (void)train(net, data.patches, data.split, cfg);
            auto result = evaluate(net, data.patches, data.split.test_indices);
            runs.push_back(compute_metrics(result.confusion));
        }
        auto agg = aggregate_runs(runs);
        csv << fraction << "," << agg.oa.mean << "," << agg.oa.stddev << "," << agg.aa.mean << ","
            << agg.aa.stddev << "," << agg.kappa.mean << "," << agg.kappa.stddev << "\n";
        std::printf("sweep: fraction %.2f  OA %.4f +/- %.4f\n", fraction, agg.oa.mean,
                    agg.oa.stddev);
    }

    nlohmann::json extra = train_extra(o.train);
    extra["fractions"] = o.fractions;
    extra["num_seeds"] = o.num_seeds;
    msn::cli::write_run_manifest("sweep", o.train.pipe, extra);
}

// --- wiring ---

void add_data_options(CLI::App* cmd, PipelineOpts& o) {
    cmd->add_option("--cube", o.cube_path, "raw cube file (f32le, BSQ)")->required();
    cmd->add_option("--labels", o.labels_path, "raw label file (u16le)")->required();
    cmd->add_option("--manifest", o.manifest_path,
                    "container manifest (default: cube path with .json)");
    cmd->add_option("--profile", o.profile, "dataset profile: ip, pu, sa, bw, custom")
        ->check(CLI::IsMember({"ip", "pu", "sa", "bw", "custom"}));
    cmd->add_option("--bands,-T", o.bands, "spectral bands after reduction (profile default)");
    cmd->add_option("--window,-S", o.window, "spatial window size, odd")->capture_default_str();
    cmd->add_option("--train-frac", o.train_frac, "training fraction of labeled samples")->capture_default_str();
    cmd->add_option("--seed", o.seed, "rng seed for split/init/shuffle/dropout")->capture_default_str();
    cmd->add_option("--pad-mode", o.pad_mode, "patch border handling: border | interior")->capture_default_str()
        ->check(CLI::IsMember({"border", "interior"}));
    cmd->add_option("--width-scale", o.width_scale, "scale every channel/FC width")->capture_default_str();
    cmd->add_option("--dropout", o.dropout, "dropout rate override (profile default)");
    cmd->add_flag("--deterministic", o.deterministic,
                  "single-threaded deterministic reductions (always on in this build)");
    cmd->add_option("--out-dir", o.out_dir, "output directory")->capture_default_str();
}

void add_train_options(CLI::App* cmd, TrainOpts& o) {
    add_data_options(cmd, o.pipe);
    cmd->add_option("--epochs", o.epochs, "training epochs")->capture_default_str();
    cmd->add_option("--batch", o.batch, "minibatch size")->capture_default_str();
    cmd->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--weight-decay", o.weight_decay, "L2 weight decay")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MixedSN hyperspectral image classifier"};
    app.set_version_flag("--version", std::string("mixedsn ") + kVersion);
    app.require_subcommand(1);

    SynthOpts synth_opts;
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled scene");
    synth->add_option("--height", synth_opts.spec.height, "")->capture_default_str();
    synth->add_option("--width", synth_opts.spec.width, "")->capture_default_str();
    synth->add_option("--bands", synth_opts.spec.bands, "")->capture_default_str();
    synth->add_option("--classes", synth_opts.spec.classes, "")->capture_default_str();
    synth->add_option("--blobs", synth_opts.spec.blobs_per_class, "blobs per class")->capture_default_str();
    synth->add_option("--noise-std", synth_opts.spec.noise_std, "")->capture_default_str();
    synth->add_option("--border-mix", synth_opts.spec.border_mix, "")->capture_default_str();
    synth->add_option("--seed", synth_opts.seed, "")->capture_default_str();
    synth->add_option("--out-dir", synth_opts.out_dir, "")->capture_default_str();
    synth->add_option("--name", synth_opts.name, "output base name")->capture_default_str();
    synth->callback([&] { run_synth(synth_opts); });

    PipelineOpts pca_opts;
    auto* pca = app.add_subcommand("pca", "spectral reduction to T bands");
    add_data_options(pca, pca_opts);
    pca->callback([&] { run_pca(pca_opts); });

    PipelineOpts patch_opts;
    auto* patch = app.add_subcommand("patch", "neighborhood patch extraction summary");
    add_data_options(patch, patch_opts);
    patch->callback([&] { run_patch(patch_opts); });

    PipelineOpts split_opts;
    auto* split = app.add_subcommand("split", "stratified train/test split plan");
    add_data_options(split, split_opts);
    split->callback([&] { run_split(split_opts); });

    TrainOpts train_opts;
    auto* train_cmd = app.add_subcommand("train", "train MixedSN on a dataset");
    add_train_options(train_cmd, train_opts);
    train_cmd->add_flag("--track-test", train_opts.track_test,
                        "record per-epoch test accuracy in the history");
    train_cmd->callback([&] { run_train(train_opts); });

    EvalOpts eval_opts;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint: metrics + confusion");
    add_data_options(eval_cmd, eval_opts.pipe);
    eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--split", eval_opts.subset, "subset: train | test | all")->capture_default_str()
        ->check(CLI::IsMember({"train", "test", "all"}));
    eval_cmd->callback([&] { run_eval(eval_opts); });

    EvalOpts map_opts;
    auto* map_cmd = app.add_subcommand("predict-map", "write a classification map (PPM)");
    add_data_options(map_cmd, map_opts.pipe);
    map_cmd->add_option("--checkpoint", map_opts.checkpoint, "checkpoint file")->required();
    map_cmd->callback([&] { run_predict_map(map_opts); });

    ParamCountOpts pc_opts;
    auto* pc = app.add_subcommand("paramcount", "per-layer parameter table");
    pc->add_option("--profile", pc_opts.profile, "")->capture_default_str()
        ->check(CLI::IsMember({"ip", "pu", "sa", "bw", "custom"}));
    pc->add_option("--bands,-T", pc_opts.bands, "");
    pc->add_option("--window,-S", pc_opts.window, "")->capture_default_str();
    pc->add_option("--classes,-L", pc_opts.classes, "");
    pc->add_option("--width-scale", pc_opts.width_scale, "")->capture_default_str();
    pc->callback([&] { run_paramcount(pc_opts); });

    GradCheckOpts gc_opts;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference checks for every op");
    gc->add_option("--ops", gc_opts.ops, "op names or 'all'")->capture_default_str()->delimiter(',');
    gc->add_option("--dtype", gc_opts.dtype, "probe precision (f64)")->capture_default_str();
    gc->add_option("--tol", gc_opts.tol, "relative error tolerance")->capture_default_str();
    gc->add_option("--step", gc_opts.step, "central difference step")->capture_default_str();
    gc->callback([&] { run_gradcheck(gc_opts); });

    SweepOpts sweep_opts;
    auto* sweep = app.add_subcommand("sweep", "OA/AA/Kappa against training fraction");
    add_train_options(sweep, sweep_opts.train);
    sweep->add_option("--fractions", sweep_opts.fractions, "training fractions")
        ->delimiter(',')
        ->required();
    sweep->add_option("--seeds", sweep_opts.num_seeds, "seeds per fraction")->capture_default_str();
    sweep->callback([&] { run_sweep(sweep_opts); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
