#include "msn/dataset_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "msn/rng.hpp"
#include "json.hpp"

namespace msn {

namespace {

std::vector<char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<char> bytes(static_cast<size_t>(size));
    in.read(bytes.data(), size);
    if (!in) throw IoError("failed reading " + path.string());
    return bytes;
}

void write_all(const std::filesystem::path& path, const void* data, size_t size) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

HscPaths HscPaths::from_base(const std::filesystem::path& base) {
    HscPaths p;
    p.manifest = base;
    p.manifest += ".json";
    p.cube = base;
    p.cube += ".cube";
    p.labels = base;
    p.labels += ".labels";
    return p;
}

void write_hsc(const HsiCube& cube, const LabelMap& labels, const HscPaths& paths) {
    cube.validate();
    labels.validate();
    if (labels.height != cube.height || labels.width != cube.width)
        throw ShapeError("write_hsc: label map extents do not match cube");

    nlohmann::json j;
    j["magic"] = "HSC1";
    j["width"] = cube.width;
    j["height"] = cube.height;
    j["bands"] = cube.bands;
    j["dtype"] = "f32le";
    j["layout"] = "BSQ";
    j["classes"] = labels.class_names;
    j["nodata_label"] = 0;
    std::ofstream mf(paths.manifest);
    if (!mf) throw IoError("cannot write manifest " + paths.manifest.string());
    mf << j.dump(2) << "\n";

    write_all(paths.cube, cube.values.data(), cube.values.size() * sizeof(float));
    write_all(paths.labels, labels.ids.data(), labels.ids.size() * sizeof(uint16_t));
}

std::pair<HsiCube, LabelMap> read_hsc(const HscPaths& paths) {
    std::ifstream mf(paths.manifest);
    if (!mf) throw IoError("cannot open manifest " + paths.manifest.string());
    nlohmann::json j;
    try {
        mf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("invalid manifest JSON in " + paths.manifest.string() + ": " + e.what());
    }
    if (j.value("magic", "") != std::string("HSC1"))
        throw IoError("magic mismatch in " + paths.manifest.string() + " (expected HSC1)");
    const std::string dtype = j.value("dtype", "");
    if (dtype != "f32le")
        throw IoError("unknown dtype '" + dtype + "' in " + paths.manifest.string());
    const std::string layout = j.value("layout", "");
    if (layout != "BSQ")
        throw IoError("unknown layout '" + layout + "' in " + paths.manifest.string());

    HsiCube cube;
    cube.height = j.at("height").get<int>();
    cube.width = j.at("width").get<int>();
    cube.bands = j.at("bands").get<int>();

    LabelMap labels;
    labels.height = cube.height;
    labels.width = cube.width;
    labels.class_names = j.at("classes").get<std::vector<std::string>>();

    const auto cube_bytes = read_all(paths.cube);
    const size_t expected_cube =
        static_cast<size_t>(cube.height) * cube.width * cube.bands * sizeof(float);
    if (cube_bytes.size() != expected_cube)
        throw IoError("cube length mismatch in " + paths.cube.string() + ": expected " +
                      std::to_string(expected_cube) + " bytes, got " +
                      std::to_string(cube_bytes.size()));
    cube.values.resize(cube_bytes.size() / sizeof(float));
    std::memcpy(cube.values.data(), cube_bytes.data(), cube_bytes.size());

    const auto label_bytes = read_all(paths.labels);
    const size_t expected_labels = static_cast<size_t>(cube.height) * cube.width * sizeof(uint16_t);
    if (label_bytes.size() != expected_labels)
        throw IoError("label length mismatch in " + paths.labels.string() + ": expected " +
                      std::to_string(expected_labels) + " bytes, got " +
                      std::to_string(label_bytes.size()));
    labels.ids.resize(label_bytes.size() / sizeof(uint16_t));
    std::memcpy(labels.ids.data(), label_bytes.data(), label_bytes.size());

    cube.validate();
    labels.validate();
    return {std::move(cube), std::move(labels)};
}

std::pair<HsiCube, LabelMap> synth_scene(const SyntheticSceneSpec& spec, uint64_t seed) {
    if (spec.height < 1 || spec.width < 1 || spec.bands < 1 || spec.classes < 1)
        throw ValueError("synth_scene: extents, bands and classes must be >= 1");
    const int64_t pixels = static_cast<int64_t>(spec.height) * spec.width;
    const int64_t blobs = static_cast<int64_t>(spec.classes) * spec.blobs_per_class;
    if (blobs > pixels)
        throw ValueError("synth_scene: " + std::to_string(blobs) + " blobs do not fit " +
                         std::to_string(pixels) + " pixels");

    Rng root(seed);

    // Smooth per-class mean spectra: a few low-frequency sinusoids plus a
    // class-dependent level. Regenerate with wider levels until the pairwise
    // distance floor holds.
    std::vector<std::vector<double>> spectra;
    Rng spectra_rng = root.split(rng_stream::kSceneSpectra);
    double level_gap = 0.8;
    for (int attempt = 0; attempt < 32; ++attempt) {
        spectra.assign(static_cast<size_t>(spec.classes), std::vector<double>());
        for (int c = 0; c < spec.classes; ++c) {
            const double a1 = 0.2 + 0.4 * spectra_rng.next_double();
            const double a2 = 0.1 + 0.2 * spectra_rng.next_double();
            const double f1 = 1.0 + 2.0 * spectra_rng.next_double();
            const double f2 = 2.0 + 3.0 * spectra_rng.next_double();
            const double p1 = 2.0 * 3.14159265358979323846 * spectra_rng.next_double();
            const double p2 = 2.0 * 3.14159265358979323846 * spectra_rng.next_double();
            auto& s = spectra[static_cast<size_t>(c)];
            s.resize(static_cast<size_t>(spec.bands));
            for (int b = 0; b < spec.bands; ++b) {
                const double u = static_cast<double>(b) / static_cast<double>(spec.bands);
                s[static_cast<size_t>(b)] = 1.0 + level_gap * c +
                                            a1 * std::sin(2.0 * 3.14159265358979323846 * f1 * u + p1) +
                                            a2 * std::sin(2.0 * 3.14159265358979323846 * f2 * u + p2);
            }
        }
        double min_dist = 1e300;
        for (int a = 0; a < spec.classes; ++a)
            for (int b = a + 1; b < spec.classes; ++b) {
                double d2 = 0.0;
                for (int k = 0; k < spec.bands; ++k) {
                    const double d = spectra[static_cast<size_t>(a)][static_cast<size_t>(k)] -
                                     spectra[static_cast<size_t>(b)][static_cast<size_t>(k)];
                    d2 += d * d;
                }
                min_dist = std::min(min_dist, std::sqrt(d2));
            }
        if (spec.classes == 1 || min_dist >= spec.min_spectra_dist) break;
        level_gap *= 1.5;
    }

    // Blob seeds: distinct pixels, classes assigned round-robin so every
    // class owns at least one blob. Labels by nearest seed.
    Rng blob_rng = root.split(rng_stream::kSceneBlobs);
    std::vector<std::pair<int, int>> centers;
    std::vector<int> center_class;
    std::vector<bool> used(static_cast<size_t>(pixels), false);
    for (int64_t k = 0; k < blobs; ++k) {
        int64_t pick = 0;
        do {
            pick = static_cast<int64_t>(blob_rng.next_below(static_cast<uint64_t>(pixels)));
        } while (used[static_cast<size_t>(pick)]);
        used[static_cast<size_t>(pick)] = true;
        centers.push_back({static_cast<int>(pick / spec.width), static_cast<int>(pick % spec.width)});
        center_class.push_back(static_cast<int>(k % spec.classes) + 1);
    }

    LabelMap labels;
    labels.height = spec.height;
    labels.width = spec.width;
    labels.ids.resize(static_cast<size_t>(pixels));
    for (int c = 0; c < spec.classes; ++c)
        labels.class_names.push_back("class_" + std::to_string(c + 1));

    HsiCube cube;
    cube.height = spec.height;
    cube.width = spec.width;
    cube.bands = spec.bands;
    cube.values.resize(static_cast<size_t>(pixels) * spec.bands);

    Rng noise_rng = root.split(rng_stream::kSceneNoise);
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            int64_t best = -1, second = -1;
            double best_d = 1e300, second_d = 1e300;
            for (size_t k = 0; k < centers.size(); ++k) {
                const double dy = y - centers[k].first;
                const double dx = x - centers[k].second;
                const double d = dy * dy + dx * dx;
                if (d < best_d) {
                    second_d = best_d;
                    second = best;
                    best_d = d;
                    best = static_cast<int64_t>(k);
                } else if (d < second_d) {
                    second_d = d;
                    second = static_cast<int64_t>(k);
                }
            }
            const int cls = center_class[static_cast<size_t>(best)];
            labels.ids[static_cast<size_t>(y) * spec.width + x] = static_cast<uint16_t>(cls);

            // Cross-class mixing only near a boundary to a different class.
            double mix = 0.0;
            int other_cls = cls;
            if (second >= 0 && center_class[static_cast<size_t>(second)] != cls) {
                const double margin = (std::sqrt(second_d) - std::sqrt(best_d)) /
                                      (std::sqrt(second_d) + std::sqrt(best_d) + 1e-12);
                if (margin < 0.15) {
                    mix = spec.border_mix * (1.0 - margin / 0.15) * 0.5;
                    other_cls = center_class[static_cast<size_t>(second)];
                }
            }
            for (int b = 0; b < spec.bands; ++b) {
                const double own = spectra[static_cast<size_t>(cls - 1)][static_cast<size_t>(b)];
                const double other =
                    spectra[static_cast<size_t>(other_cls - 1)][static_cast<size_t>(b)];
                const double noise = spec.noise_std > 0.0
                                         ? noise_rng.next_gaussian() * spec.noise_std
                                         : 0.0;
                cube.values[(static_cast<size_t>(b) * spec.height + y) * spec.width + x] =
                    static_cast<float>((1.0 - mix) * own + mix * other + noise);
            }
        }

    return {std::move(cube), std::move(labels)};
}

std::array<uint8_t, 3> class_color(int class_id, int num_classes) {
    if (class_id == 0) return {0, 0, 0};
    const double hue = 360.0 * static_cast<double>(class_id - 1) / static_cast<double>(num_classes);
    const double hp = hue / 60.0;
    const int sector = static_cast<int>(std::floor(hp)) % 6;
    const double f = hp - std::floor(hp);
    const double v = 1.0, p = 0.0, q = 1.0 - f, t = f;
    double r = 0, g = 0, b = 0;
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        case 5: r = v; g = p; b = q; break;
    }
    auto to_byte = [](double x) { return static_cast<uint8_t>(std::floor(x * 255.0 + 0.5)); };
    return {to_byte(r), to_byte(g), to_byte(b)};
}

void write_class_map(const std::vector<int>& class_ids, int height, int width, int num_classes,
                     const std::filesystem::path& path) {
    if (class_ids.size() != static_cast<size_t>(height) * width)
        throw ShapeError("write_class_map: prediction grid does not match extents");
    for (int id : class_ids)
        if (id < 0 || id > num_classes)
            throw ValueError("write_class_map: class id " + std::to_string(id) +
                             " out of range 0.." + std::to_string(num_classes));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write map file " + path.string());
    out << "P6\n" << width << " " << height << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(width) * 3);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const auto rgb = class_color(class_ids[static_cast<size_t>(y) * width + x], num_classes);
            row[static_cast<size_t>(x) * 3 + 0] = rgb[0];
            row[static_cast<size_t>(x) * 3 + 1] = rgb[1];
            row[static_cast<size_t>(x) * 3 + 2] = rgb[2];
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("failed writing map file " + path.string());
}

}  // namespace msn
