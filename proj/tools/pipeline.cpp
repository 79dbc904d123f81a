#include "pipeline.hpp"

#include <fstream>

#include "msn/version.hpp"

namespace msn::cli {

namespace fs = std::filesystem;

HscPaths resolve_hsc_paths(const PipelineOpts& opts) {
    HscPaths paths;
    paths.cube = opts.cube_path;
    paths.labels = opts.labels_path;
    if (!opts.manifest_path.empty()) {
        paths.manifest = opts.manifest_path;
    } else {
        paths.manifest = fs::path(opts.cube_path);
        paths.manifest.replace_extension(".json");
    }
    return paths;
}

MixedSnConfig resolve_network_config(const PipelineOpts& opts, int classes_from_data) {
    MixedSnConfig cfg = MixedSnConfig::for_profile(profile_from_name(opts.profile));
    if (opts.bands > 0) cfg.bands = opts.bands;
    cfg.window = opts.window;
    if (classes_from_data > 0) cfg.classes = classes_from_data;
    if (opts.dropout >= 0.0) cfg.dropout_rate = opts.dropout;
    if (opts.width_scale != 1.0) cfg.scale_widths(opts.width_scale);
    return cfg;
}

PreparedData prepare(const PipelineOpts& opts) {
    PreparedData data;
    auto paths = resolve_hsc_paths(opts);
    std::tie(data.cube, data.labels) = read_hsc(paths);

    data.net_config = resolve_network_config(opts, data.labels.num_classes());
    data.reduced = pca_reduce(data.cube, data.net_config.bands);
    data.patches = extract_patches(data.reduced, data.labels, data.net_config.window,
                                   pad_mode_from_name(opts.pad_mode));
    data.split = stratified_split(data.patches.labels, data.labels.num_classes(),
                                  opts.train_frac, opts.seed);
    data.stats = standardize(data.patches, data.split.train_indices);
    return data;
}

std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file " + path.string());
    uint64_t hash = 0xCBF29CE484222325ULL;
    char buf[65536];
    while (in) {
        in.read(buf, sizeof(buf));
        const auto got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 0x100000001B3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
    return std::string("fnv1a64:") + hex;
}

nlohmann::json options_json(const PipelineOpts& opts) {
    nlohmann::json j;
    j["cube"] = opts.cube_path;
    j["labels"] = opts.labels_path;
    j["manifest"] = opts.manifest_path;
    j["profile"] = opts.profile;
    j["bands"] = opts.bands;
    j["window"] = opts.window;
    j["train_frac"] = opts.train_frac;
    j["seed"] = opts.seed;
    j["pad_mode"] = opts.pad_mode;
    j["width_scale"] = opts.width_scale;
    j["dropout"] = opts.dropout;
    j["deterministic"] = opts.deterministic;
    j["out_dir"] = opts.out_dir;
    return j;
}

void write_run_manifest(const std::string& command, const PipelineOpts& opts,
                        const nlohmann::json& extra_options) {
    nlohmann::json j;
    j["tool"] = "mixedsn";
    j["version"] = kVersion;
    j["command"] = command;
    nlohmann::json options = options_json(opts);
    for (auto it = extra_options.begin(); it != extra_options.end(); ++it)
        options[it.key()] = it.value();
    j["options"] = options;

    nlohmann::json inputs;
    if (!opts.cube_path.empty()) {
        auto paths = resolve_hsc_paths(opts);
        inputs["cube_digest"] = file_digest(paths.cube);
        inputs["labels_digest"] = file_digest(paths.labels);
        inputs["manifest_digest"] = file_digest(paths.manifest);
    }
    j["inputs"] = inputs;

    const fs::path out = fs::path(opts.out_dir) / (command + "_manifest.json");
    std::ofstream f(out);
    if (!f) throw IoError("cannot write run manifest " + out.string());
    f << j.dump(2) << "\n";
}

}  // namespace msn::cli
