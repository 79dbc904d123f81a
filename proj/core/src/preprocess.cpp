#include "msn/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msn/rng.hpp"

namespace msn {

void HsiCube::validate() const {
    if (height < 1 || width < 1 || bands < 1)
        throw ValueError("cube extents must be >= 1, got " + std::to_string(height) + "x" +
                         std::to_string(width) + "x" + std::to_string(bands));
    const size_t expected = static_cast<size_t>(height) * width * bands;
    if (values.size() != expected)
        throw ShapeError("cube value count " + std::to_string(values.size()) + " != P*Q*B = " +
                         std::to_string(expected));
}

int64_t LabelMap::labeled_count() const {
    int64_t n = 0;
    for (uint16_t id : ids)
        if (id != 0) ++n;
    return n;
}

void LabelMap::validate() const {
    if (height < 1 || width < 1) throw ValueError("label map extents must be >= 1");
    if (ids.size() != static_cast<size_t>(height) * width)
        throw ShapeError("label count != P*Q");
    const uint16_t L = static_cast<uint16_t>(class_names.size());
    for (uint16_t id : ids)
        if (id > L)
            throw ValueError("label id " + std::to_string(id) + " exceeds declared class count " +
                             std::to_string(L));
}

SymEig jacobi_eigh(const std::vector<double>& matrix, int n) {
    if (n < 1 || matrix.size() != static_cast<size_t>(n) * n)
        throw ShapeError("jacobi_eigh: matrix must be n x n");

    std::vector<double> a = matrix;
    std::vector<double> v(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;
    auto A = [&](int i, int j) -> double& { return a[static_cast<size_t>(i) * n + j]; };
    auto V = [&](int i, int j) -> double& { return v[static_cast<size_t>(i) * n + j]; };

    double norm = 0.0;
    for (double x : a) norm += x * x;
    const double tol = 1e-30 * std::max(1.0, norm);

    // Cyclic sweeps over the upper triangle until off-diagonal mass vanishes.
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
        if (off <= tol) break;

        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = A(p, q);
                if (apq == 0.0) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
    }

    // Order eigenpairs by descending eigenvalue (stable: lower original index
    // first on exact ties), then fix each column's sign.
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) diag[static_cast<size_t>(i)] = A(i, i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return diag[static_cast<size_t>(x)] > diag[static_cast<size_t>(y)]; });

    SymEig out;
    out.n = n;
    out.values.resize(static_cast<size_t>(n));
    out.vectors.assign(static_cast<size_t>(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        const int src = order[static_cast<size_t>(k)];
        out.values[static_cast<size_t>(k)] = diag[static_cast<size_t>(src)];
        int arg = 0;
        double best = 0.0;
        for (int i = 0; i < n; ++i) {
            const double mag = std::abs(V(i, src));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        const double sign = V(arg, src) < 0.0 ? -1.0 : 1.0;
        for (int i = 0; i < n; ++i)
            out.vectors[static_cast<size_t>(i) * n + k] = sign * V(i, src);
    }
    return out;
}

ReducedCube pca_reduce(const HsiCube& cube, int t_bands) {
    cube.validate();
    const int B = cube.bands;
    if (t_bands < 1 || t_bands > B)
        throw ValueError("pca_reduce: T=" + std::to_string(t_bands) + " must be in [1," +
                         std::to_string(B) + "]");
    const int64_t N = cube.pixel_count();
    if (N < 2) throw ValueError("pca_reduce: need at least 2 pixels");

    std::vector<double> mean(static_cast<size_t>(B), 0.0);
    for (int b = 0; b < B; ++b) {
        const float* band = cube.values.data() + static_cast<size_t>(b) * N;
        double acc = 0.0;
        for (int64_t i = 0; i < N; ++i) acc += band[i];
        mean[static_cast<size_t>(b)] = acc / static_cast<double>(N);
    }

    // Sample covariance of the centered spectra.
    std::vector<double> cov(static_cast<size_t>(B) * B, 0.0);
    std::vector<double> centered(static_cast<size_t>(B));
    for (int64_t i = 0; i < N; ++i) {
        for (int b = 0; b < B; ++b)
            centered[static_cast<size_t>(b)] =
                cube.values[static_cast<size_t>(b) * N + i] - mean[static_cast<size_t>(b)];
        for (int r = 0; r < B; ++r) {
            const double cr = centered[static_cast<size_t>(r)];
            for (int c = r; c < B; ++c)
                cov[static_cast<size_t>(r) * B + c] += cr * centered[static_cast<size_t>(c)];
        }
    }
    const double scale = 1.0 / static_cast<double>(N - 1);
    for (int r = 0; r < B; ++r)
        for (int c = r; c < B; ++c) {
            cov[static_cast<size_t>(r) * B + c] *= scale;
            cov[static_cast<size_t>(c) * B + r] = cov[static_cast<size_t>(r) * B + c];
        }

    SymEig eig = jacobi_eigh(cov, B);

    ReducedCube out;
    out.height = cube.height;
    out.width = cube.width;
    out.bands = t_bands;
    out.original_bands = B;
    out.band_means = mean;
    out.eigenvalues = eig.values;
    out.components.resize(static_cast<size_t>(B) * t_bands);
    for (int b = 0; b < B; ++b)
        for (int t = 0; t < t_bands; ++t)
            out.components[static_cast<size_t>(b) * t_bands + t] = eig.vec(b, t);

    double total = 0.0, kept = 0.0;
    for (int k = 0; k < B; ++k) {
        total += eig.values[static_cast<size_t>(k)];
        if (k < t_bands) kept += eig.values[static_cast<size_t>(k)];
    }
    out.retained_variance = total > 0.0 ? kept / total : 1.0;

    out.values.resize(static_cast<size_t>(t_bands) * N);
    for (int64_t i = 0; i < N; ++i) {
        for (int b = 0; b < B; ++b)
            centered[static_cast<size_t>(b)] =
                cube.values[static_cast<size_t>(b) * N + i] - mean[static_cast<size_t>(b)];
        for (int t = 0; t < t_bands; ++t) {
            double acc = 0.0;
            for (int b = 0; b < B; ++b)
                acc += centered[static_cast<size_t>(b)] *
                       out.components[static_cast<size_t>(b) * t_bands + t];
            out.values[static_cast<size_t>(t) * N + i] = static_cast<float>(acc);
        }
    }
    return out;
}

PadMode pad_mode_from_name(const std::string& name) {
    if (name == "border") return PadMode::zero_pad_border;
    if (name == "interior") return PadMode::interior_only;
    throw ValueError("unknown pad mode '" + name + "' (expected border or interior)");
}

std::string pad_mode_name(PadMode m) {
    return m == PadMode::zero_pad_border ? "border" : "interior";
}

PatchSet extract_patches(const ReducedCube& cube, const LabelMap& labels, int window,
                         PadMode mode) {
    labels.validate();
    if (labels.height != cube.height || labels.width != cube.width)
        throw ShapeError("extract_patches: label map extents do not match cube");
    if (window < 1 || window % 2 == 0)
        throw ValueError("extract_patches: window S must be odd, got " + std::to_string(window));
    if (mode == PadMode::interior_only && (window > cube.height || window > cube.width))
        throw ValueError("extract_patches: window exceeds cube extents");

    const int S = window, T = cube.bands, half = S / 2;
    const int P = cube.height, Q = cube.width;

    PatchSet set;
    set.window = S;
    set.bands = T;
    set.mode = mode;
    set.num_classes = labels.num_classes();

    const int y_lo = mode == PadMode::interior_only ? half : 0;
    const int y_hi = mode == PadMode::interior_only ? P - half : P;
    const int x_lo = mode == PadMode::interior_only ? half : 0;
    const int x_hi = mode == PadMode::interior_only ? Q - half : Q;

    for (int y = y_lo; y < y_hi; ++y)
        for (int x = x_lo; x < x_hi; ++x)
            if (labels.at(y, x) != 0) {
                set.centers.push_back({y, x});
                set.labels.push_back(labels.at(y, x));
            }

    const int64_t n = static_cast<int64_t>(set.labels.size());
    set.patches = Tensor<float>({n, 1, T, S, S});
    float* dst = set.patches.data();
    for (int64_t k = 0; k < n; ++k) {
        const auto [cy, cx] = set.centers[static_cast<size_t>(k)];
        for (int t = 0; t < T; ++t)
            for (int dy = 0; dy < S; ++dy) {
                const int y = cy - half + dy;
                for (int dx = 0; dx < S; ++dx) {
                    const int x = cx - half + dx;
                    const bool inside = y >= 0 && y < P && x >= 0 && x < Q;
                    *dst++ = inside ? cube.at(t, y, x) : 0.0f;
                }
            }
    }
    return set;
}

BandStats standardize(PatchSet& patches, const std::vector<int64_t>& train_indices) {
    if (train_indices.empty())
        throw ValueError("standardize: empty training subset");
    const int T = patches.bands, S = patches.window;
    const int64_t plane = static_cast<int64_t>(S) * S;
    const int64_t per_patch = static_cast<int64_t>(T) * plane;

    BandStats stats;
    stats.mean.assign(static_cast<size_t>(T), 0.0);
    stats.stddev.assign(static_cast<size_t>(T), 0.0);

    const double count = static_cast<double>(train_indices.size()) * static_cast<double>(plane);
    for (int t = 0; t < T; ++t) {
        double acc = 0.0;
        for (int64_t idx : train_indices) {
            const float* p = patches.patches.data() + idx * per_patch + t * plane;
            for (int64_t i = 0; i < plane; ++i) acc += p[i];
        }
        stats.mean[static_cast<size_t>(t)] = acc / count;
    }
    for (int t = 0; t < T; ++t) {
        double acc = 0.0;
        const double m = stats.mean[static_cast<size_t>(t)];
        for (int64_t idx : train_indices) {
            const float* p = patches.patches.data() + idx * per_patch + t * plane;
            for (int64_t i = 0; i < plane; ++i) {
                const double d = p[i] - m;
                acc += d * d;
            }
        }
        stats.stddev[static_cast<size_t>(t)] = std::sqrt(acc / count);
    }

    const int64_t n = patches.count();
    for (int64_t k = 0; k < n; ++k)
        for (int t = 0; t < T; ++t) {
            const double m = stats.mean[static_cast<size_t>(t)];
            const double sd = stats.stddev[static_cast<size_t>(t)];
            float* p = patches.patches.data() + k * per_patch + t * plane;
            if (sd > 0.0)
                for (int64_t i = 0; i < plane; ++i)
                    p[i] = static_cast<float>((p[i] - m) / sd);
            else
                for (int64_t i = 0; i < plane; ++i) p[i] = static_cast<float>(p[i] - m);
        }
    return stats;
}

SplitPlan stratified_split(const std::vector<int>& labels, int num_classes, double fraction,
                           uint64_t seed) {
    if (fraction <= 0.0 || fraction >= 1.0)
        throw ValueError("stratified_split: fraction must be in (0,1), got " +
                         std::to_string(fraction));
    if (num_classes < 1) throw ValueError("stratified_split: need at least one class");

    std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(num_classes));
    for (size_t i = 0; i < labels.size(); ++i) {
        const int c = labels[i];
        if (c < 1 || c > num_classes)
            throw ValueError("stratified_split: label " + std::to_string(c) + " out of range 1.." +
                             std::to_string(num_classes));
        by_class[static_cast<size_t>(c - 1)].push_back(static_cast<int64_t>(i));
    }
    for (int c = 0; c < num_classes; ++c)
        if (by_class[static_cast<size_t>(c)].empty())
            throw ValueError("stratified_split: class " + std::to_string(c + 1) +
                             " has no samples");

    const int64_t total = static_cast<int64_t>(labels.size());
    const int64_t budget = static_cast<int64_t>(std::floor(fraction * static_cast<double>(total)));

    // Largest-remainder apportionment of the train budget across classes.
    std::vector<int64_t> take(static_cast<size_t>(num_classes), 0);
    std::vector<std::pair<double, int>> remainder;
    int64_t assigned = 0;
    for (int c = 0; c < num_classes; ++c) {
        const double share = static_cast<double>(by_class[static_cast<size_t>(c)].size()) *
                             static_cast<double>(budget) / static_cast<double>(total);
        take[static_cast<size_t>(c)] = static_cast<int64_t>(std::floor(share));
        assigned += take[static_cast<size_t>(c)];
        remainder.push_back({share - std::floor(share), c});
    }
    std::sort(remainder.begin(), remainder.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        const size_t sa = by_class[static_cast<size_t>(a.second)].size();
        const size_t sb = by_class[static_cast<size_t>(b.second)].size();
        if (sa != sb) return sa > sb;
        return a.second < b.second;
    });
    for (int64_t k = 0; k < budget - assigned && k < num_classes; ++k)
        take[static_cast<size_t>(remainder[static_cast<size_t>(k)].second)]++;
    for (int c = 0; c < num_classes; ++c) {
        auto& t = take[static_cast<size_t>(c)];
        const int64_t size = static_cast<int64_t>(by_class[static_cast<size_t>(c)].size());
        t = std::clamp<int64_t>(t, 1, std::max<int64_t>(1, size - 1));
    }

    SplitPlan plan;
    plan.fraction = fraction;
    plan.seed = seed;
    plan.train_by_class.resize(static_cast<size_t>(num_classes));
    plan.test_by_class.resize(static_cast<size_t>(num_classes));

    Rng base = Rng(seed).split(rng_stream::kSplit);
    for (int c = 0; c < num_classes; ++c) {
        auto indices = by_class[static_cast<size_t>(c)];
        Rng rng = base.split(static_cast<uint64_t>(c));
        for (size_t i = indices.size(); i > 1; --i)
            std::swap(indices[i - 1], indices[rng.next_below(i)]);
        const auto cut = static_cast<size_t>(take[static_cast<size_t>(c)]);
        auto& train = plan.train_by_class[static_cast<size_t>(c)];
        auto& test = plan.test_by_class[static_cast<size_t>(c)];
        train.assign(indices.begin(), indices.begin() + static_cast<int64_t>(cut));
        test.assign(indices.begin() + static_cast<int64_t>(cut), indices.end());
        plan.train_indices.insert(plan.train_indices.end(), train.begin(), train.end());
        plan.test_indices.insert(plan.test_indices.end(), test.begin(), test.end());
    }
    return plan;
}

}  // namespace msn
