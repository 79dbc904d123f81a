#include "msn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace msn {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'N', 'C'};

template <typename T>
const char* dtype_name() {
    if constexpr (sizeof(T) == 4)
        return "f32le";
    else
        return "f64le";
}

nlohmann::json config_to_json(const MixedSnConfig& c) {
    nlohmann::json j;
    j["bands"] = c.bands;
    j["window"] = c.window;
    j["classes"] = c.classes;
    j["cardinality"] = c.cardinality;
    j["stem_channels"] = c.stem_channels;
    j["block3d1_width"] = c.block3d1_width;
    j["block3d1_bottleneck"] = c.block3d1_bottleneck;
    j["block3d2_width"] = c.block3d2_width;
    j["block3d2_bottleneck"] = c.block3d2_bottleneck;
    j["block2d_width"] = c.block2d_width;
    j["block2d_bottleneck"] = c.block2d_bottleneck;
    j["pre_flatten_channels"] = c.pre_flatten_channels;
    j["fc1_units"] = c.fc1_units;
    j["fc2_units"] = c.fc2_units;
    j["dropout_rate"] = c.dropout_rate;
    j["profile"] = c.profile;
    return j;
}

MixedSnConfig config_from_json(const nlohmann::json& j) {
    MixedSnConfig c;
    c.bands = j.at("bands").get<int>();
    c.window = j.at("window").get<int>();
    c.classes = j.at("classes").get<int>();
    c.cardinality = j.at("cardinality").get<int>();
    c.stem_channels = j.at("stem_channels").get<int>();
    c.block3d1_width = j.at("block3d1_width").get<int>();
    c.block3d1_bottleneck = j.at("block3d1_bottleneck").get<int>();
    c.block3d2_width = j.at("block3d2_width").get<int>();
    c.block3d2_bottleneck = j.at("block3d2_bottleneck").get<int>();
    c.block2d_width = j.at("block2d_width").get<int>();
    c.block2d_bottleneck = j.at("block2d_bottleneck").get<int>();
    c.pre_flatten_channels = j.at("pre_flatten_channels").get<int>();
    c.fc1_units = j.at("fc1_units").get<int>();
    c.fc2_units = j.at("fc2_units").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.profile = j.value("profile", "custom");
    return c;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const MixedSn<T>& net, uint64_t seed) {
    nlohmann::json j;
    j["format"] = "MSNC";
    j["version"] = 1;
    j["dtype"] = dtype_name<T>();
    j["seed"] = seed;
    j["network"] = config_to_json(net.config());
    nlohmann::json params = nlohmann::json::array();
    for (const auto& e : net.params().entries) {
        nlohmann::json p;
        p["name"] = e.name;
        p["shape"] = e.node->value.shape();
        params.push_back(p);
    }
    j["params"] = params;
    const std::string manifest = j.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    const uint64_t len = manifest.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    for (const auto& e : net.params().entries)
        out.write(reinterpret_cast<const char*>(e.node->value.data()),
                  static_cast<std::streamsize>(e.node->value.numel() * sizeof(T)));
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("checkpoint magic mismatch in " + path.string());
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string manifest(len, '\0');
    in.read(manifest.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("truncated checkpoint manifest in " + path.string());

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(manifest);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("invalid checkpoint manifest: " + std::string(e.what()));
    }
    if (j.value("dtype", "") != dtype_name<T>())
        throw IoError("checkpoint dtype " + j.value("dtype", std::string("?")) +
                      " does not match requested precision");

    const uint64_t seed = j.at("seed").get<uint64_t>();
    MixedSnConfig cfg = config_from_json(j.at("network"));
    LoadedCheckpoint<T> loaded{MixedSn<T>(cfg, Rng(seed)), seed};

    const auto& params = j.at("params");
    auto& entries = loaded.net.params().entries;
    if (params.size() != entries.size())
        throw IoError("checkpoint parameter count " + std::to_string(params.size()) +
                      " does not match network (" + std::to_string(entries.size()) + ")");
    for (size_t i = 0; i < entries.size(); ++i) {
        const auto& p = params[i];
        if (p.at("name").get<std::string>() != entries[i].name)
            throw IoError("checkpoint parameter order mismatch at " + entries[i].name);
        const Shape shape = p.at("shape").get<Shape>();
        if (shape != entries[i].node->value.shape())
            throw IoError("checkpoint shape mismatch for " + entries[i].name);
        in.read(reinterpret_cast<char*>(entries[i].node->value.data()),
                static_cast<std::streamsize>(entries[i].node->value.numel() * sizeof(T)));
        if (!in) throw IoError("truncated checkpoint data at " + entries[i].name);
    }
    return loaded;
}

template void save_checkpoint<float>(const std::filesystem::path&, const MixedSn<float>&, uint64_t);
template void save_checkpoint<double>(const std::filesystem::path&, const MixedSn<double>&,
                                      uint64_t);
template LoadedCheckpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template LoadedCheckpoint<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace msn
