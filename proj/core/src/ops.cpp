#include "msn/ops.hpp"

#include <cmath>
#include <cstring>

namespace msn {

Conv3dSpec Conv3dSpec::same(int in_ch, int out_ch, int kd, int kh, int kw) {
    Conv3dSpec s;
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    s.kd = kd;
    s.kh = kh;
    s.kw = kw;
    s.pad_d_lo = (kd - 1) / 2;
    s.pad_d_hi = kd - 1 - s.pad_d_lo;
    s.pad_h_lo = (kh - 1) / 2;
    s.pad_h_hi = kh - 1 - s.pad_h_lo;
    s.pad_w_lo = (kw - 1) / 2;
    s.pad_w_hi = kw - 1 - s.pad_w_lo;
    return s;
}

Conv3dSpec Conv3dSpec::valid(int in_ch, int out_ch, int kd, int kh, int kw) {
    Conv3dSpec s;
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    s.kd = kd;
    s.kh = kh;
    s.kw = kw;
    return s;
}

Shape Conv3dSpec::weight_shape() const {
    return {out_channels, in_channels, kd, kh, kw};
}

Shape Conv3dSpec::bias_shape() const {
    return {out_channels};
}

Conv2dSpec Conv2dSpec::same(int in_ch, int out_ch, int kh, int kw) {
    Conv2dSpec s;
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    s.kh = kh;
    s.kw = kw;
    s.pad_h_lo = (kh - 1) / 2;
    s.pad_h_hi = kh - 1 - s.pad_h_lo;
    s.pad_w_lo = (kw - 1) / 2;
    s.pad_w_hi = kw - 1 - s.pad_w_lo;
    return s;
}

Conv2dSpec Conv2dSpec::valid(int in_ch, int out_ch, int kh, int kw) {
    Conv2dSpec s;
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    s.kh = kh;
    s.kw = kw;
    return s;
}

Shape Conv2dSpec::weight_shape() const {
    return {out_channels, in_channels, kh, kw};
}

Shape Conv2dSpec::bias_shape() const {
    return {out_channels};
}

namespace {

// A (m x n_inner) * B^T contribution: C (m x p) += A (m x n) * B (p x n)^T.
// Row dots run left-to-right over n.
template <typename T>
void matmul_abt_acc(const T* a, const T* b, T* c, int64_t m, int64_t n, int64_t p) {
    for (int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * n;
        T* crow = c + i * p;
        for (int64_t j = 0; j < p; ++j) {
            const T* brow = b + j * n;
            T acc = 0;
            for (int64_t kk = 0; kk < n; ++kk) acc += arow[kk] * brow[kk];
            crow[j] += acc;
        }
    }
}

// C (k x n) = A^T * B with A (m x k), B (m x n). Accumulation over m in order.
template <typename T>
void matmul_atb(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    std::fill(c, c + k * n, T(0));
    for (int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        const T* brow = b + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            T* crow = c + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
Tensor<T> pad3d(const Tensor<T>& x, const Conv3dSpec& s) {
    const int64_t B = x.extent(0), C = x.extent(1), D = x.extent(2), H = x.extent(3), W = x.extent(4);
    const int64_t Dp = D + s.pad_d_lo + s.pad_d_hi;
    const int64_t Hp = H + s.pad_h_lo + s.pad_h_hi;
    const int64_t Wp = W + s.pad_w_lo + s.pad_w_hi;
    Tensor<T> out({B, C, Dp, Hp, Wp});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t z = 0; z < D; ++z)
                for (int64_t y = 0; y < H; ++y) {
                    const T* src = x.data() + (((b * C + c) * D + z) * H + y) * W;
                    T* dst = out.data() +
                             (((b * C + c) * Dp + z + s.pad_d_lo) * Hp + y + s.pad_h_lo) * Wp +
                             s.pad_w_lo;
                    std::memcpy(dst, src, static_cast<size_t>(W) * sizeof(T));
                }
    return out;
}

template <typename T>
Tensor<T> unpad3d(const Tensor<T>& xp, const Conv3dSpec& s, int64_t B, int64_t C, int64_t D,
                  int64_t H, int64_t W) {
    const int64_t Dp = xp.extent(2), Hp = xp.extent(3), Wp = xp.extent(4);
    Tensor<T> out({B, C, D, H, W});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t z = 0; z < D; ++z)
                for (int64_t y = 0; y < H; ++y) {
                    const T* src = xp.data() +
                                   (((b * C + c) * Dp + z + s.pad_d_lo) * Hp + y + s.pad_h_lo) * Wp +
                                   s.pad_w_lo;
                    T* dst = out.data() + (((b * C + c) * D + z) * H + y) * W;
                    std::memcpy(dst, src, static_cast<size_t>(W) * sizeof(T));
                }
    return out;
}

// Gather the receptive field of every output position into a (K x N) matrix,
// K = C*kd*kh*kw, N = Do*Ho*Wo. One batch element at a time.
template <typename T>
void im2col3d(const T* xp, int64_t C, int64_t Dp, int64_t Hp, int64_t Wp, const Conv3dSpec& s,
              int64_t Do, int64_t Ho, int64_t Wo, T* cols) {
    const int64_t N = Do * Ho * Wo;
    int64_t r = 0;
    for (int64_t c = 0; c < C; ++c)
        for (int64_t dz = 0; dz < s.kd; ++dz)
            for (int64_t dy = 0; dy < s.kh; ++dy)
                for (int64_t dx = 0; dx < s.kw; ++dx, ++r) {
                    T* crow = cols + r * N;
                    for (int64_t oz = 0; oz < Do; ++oz)
                        for (int64_t oy = 0; oy < Ho; ++oy) {
                            const T* src = xp + ((c * Dp + oz + dz) * Hp + oy + dy) * Wp + dx;
                            T* dst = crow + (oz * Ho + oy) * Wo;
                            std::memcpy(dst, src, static_cast<size_t>(Wo) * sizeof(T));
                        }
                }
}

// Scatter-add of a (K x N) gradient matrix back onto the padded input.
template <typename T>
void col2im3d(const T* cols, int64_t C, int64_t Dp, int64_t Hp, int64_t Wp, const Conv3dSpec& s,
              int64_t Do, int64_t Ho, int64_t Wo, T* xp) {
    const int64_t N = Do * Ho * Wo;
    int64_t r = 0;
    for (int64_t c = 0; c < C; ++c)
        for (int64_t dz = 0; dz < s.kd; ++dz)
            for (int64_t dy = 0; dy < s.kh; ++dy)
                for (int64_t dx = 0; dx < s.kw; ++dx, ++r) {
                    const T* crow = cols + r * N;
                    for (int64_t oz = 0; oz < Do; ++oz)
                        for (int64_t oy = 0; oy < Ho; ++oy) {
                            T* dst = xp + ((c * Dp + oz + dz) * Hp + oy + dy) * Wp + dx;
                            const T* src = crow + (oz * Ho + oy) * Wo;
                            for (int64_t ox = 0; ox < Wo; ++ox) dst[ox] += src[ox];
                        }
                }
}

}  // namespace

template <typename T>
NodePtr<T> conv3d(const NodePtr<T>& x, const NodePtr<T>& weight, const NodePtr<T>& bias,
                  const Conv3dSpec& spec) {
    const Tensor<T>& xv = x->value;
    if (xv.ndim() != 5)
        throw ShapeError("conv3d: input must be (B,C,D,H,W), got " + shape_str(xv.shape()));
    if (xv.extent(1) != spec.in_channels)
        throw ShapeError("conv3d: input has " + std::to_string(xv.extent(1)) +
                         " channels, spec expects " + std::to_string(spec.in_channels));
    if (weight->value.shape() != spec.weight_shape())
        throw ShapeError("conv3d: weight shape " + shape_str(weight->value.shape()) +
                         " does not match spec " + shape_str(spec.weight_shape()));
    if (bias->value.shape() != spec.bias_shape())
        throw ShapeError("conv3d: bias shape " + shape_str(bias->value.shape()) +
                         " does not match spec " + shape_str(spec.bias_shape()));

    const int64_t B = xv.extent(0), C = xv.extent(1);
    const int64_t D = xv.extent(2), H = xv.extent(3), W = xv.extent(4);
    const int64_t Dp = D + spec.pad_d_lo + spec.pad_d_hi;
    const int64_t Hp = H + spec.pad_h_lo + spec.pad_h_hi;
    const int64_t Wp = W + spec.pad_w_lo + spec.pad_w_hi;
    const int64_t Do = Dp - spec.kd + 1, Ho = Hp - spec.kh + 1, Wo = Wp - spec.kw + 1;
    if (Do < 1 || Ho < 1 || Wo < 1)
        throw ShapeError("conv3d: kernel (" + std::to_string(spec.kd) + "," +
                         std::to_string(spec.kh) + "," + std::to_string(spec.kw) +
                         ") larger than padded input " + shape_str({Dp, Hp, Wp}));

    const int64_t O = spec.out_channels;
    const int64_t K = C * spec.kd * spec.kh * spec.kw;
    const int64_t N = Do * Ho * Wo;

    Tensor<T> xp = pad3d(xv, spec);
    Tensor<T> out({B, O, Do, Ho, Wo});
    std::vector<T> cols(static_cast<size_t>(K * N));
    for (int64_t b = 0; b < B; ++b) {
        const T* xpb = xp.data() + b * C * Dp * Hp * Wp;
        im2col3d(xpb, C, Dp, Hp, Wp, spec, Do, Ho, Wo, cols.data());
        T* ob = out.data() + b * O * N;
        detail::matmul_buf(weight->value.data(), cols.data(), ob, O, K, N, false);
        for (int64_t j = 0; j < O; ++j) {
            const T bj = bias->value[j];
            T* row = ob + j * N;
            for (int64_t n = 0; n < N; ++n) row[n] += bj;
        }
    }

    Conv3dSpec s = spec;
    Shape in_shape = xv.shape();
    auto bw = [x, weight, bias, xp = std::move(xp), s, in_shape, B, C, D, H, W, Dp, Hp, Wp, Do, Ho,
               Wo, O, K, N](const Tensor<T>& g) {
        std::vector<T> cols(static_cast<size_t>(K * N));
        Tensor<T> dw = weight->requires_grad ? Tensor<T>::zeros(weight->value.shape()) : Tensor<T>();
        Tensor<T> dxp = x->requires_grad ? Tensor<T>::zeros(xp.shape()) : Tensor<T>();
        std::vector<T> dcols(x->requires_grad ? static_cast<size_t>(K * N) : 0);
        for (int64_t b = 0; b < B; ++b) {
            const T* gb = g.data() + b * O * N;
            const T* xpb = xp.data() + b * C * Dp * Hp * Wp;
            if (weight->requires_grad || x->requires_grad)
                im2col3d(xpb, C, Dp, Hp, Wp, s, Do, Ho, Wo, cols.data());
            if (weight->requires_grad) matmul_abt_acc(gb, cols.data(), dw.data(), O, N, K);
            if (x->requires_grad) {
                matmul_atb(weight->value.data(), gb, dcols.data(), O, K, N);
                col2im3d(dcols.data(), C, Dp, Hp, Wp, s, Do, Ho, Wo,
                         dxp.data() + b * C * Dp * Hp * Wp);
            }
        }
        if (weight->requires_grad) weight->accumulate_grad(dw);
        if (x->requires_grad) x->accumulate_grad(unpad3d(dxp, s, B, C, D, H, W));
        if (bias->requires_grad) {
            Tensor<T> db = Tensor<T>::zeros(bias->value.shape());
            for (int64_t b = 0; b < B; ++b)
                for (int64_t j = 0; j < O; ++j) {
                    const T* row = g.data() + (b * O + j) * N;
                    T acc = 0;
                    for (int64_t n = 0; n < N; ++n) acc += row[n];
                    db[j] += acc;
                }
            bias->accumulate_grad(db);
        }
    };
    return make_op<T>(std::move(out), {x, weight, bias}, std::move(bw), "conv3d");
}

template <typename T>
NodePtr<T> conv2d(const NodePtr<T>& x, const NodePtr<T>& weight, const NodePtr<T>& bias,
                  const Conv2dSpec& spec) {
    const Tensor<T>& xv = x->value;
    if (xv.ndim() != 4)
        throw ShapeError("conv2d: input must be (B,C,H,W), got " + shape_str(xv.shape()));
    if (xv.extent(1) != spec.in_channels)
        throw ShapeError("conv2d: input has " + std::to_string(xv.extent(1)) +
                         " channels, spec expects " + std::to_string(spec.in_channels));
    if (weight->value.shape() != spec.weight_shape())
        throw ShapeError("conv2d: weight shape " + shape_str(weight->value.shape()) +
                         " does not match spec " + shape_str(spec.weight_shape()));
    if (bias->value.shape() != spec.bias_shape())
        throw ShapeError("conv2d: bias shape mismatch");

    const int64_t B = xv.extent(0), C = xv.extent(1), H = xv.extent(2), W = xv.extent(3);
    const int64_t Hp = H + spec.pad_h_lo + spec.pad_h_hi;
    const int64_t Wp = W + spec.pad_w_lo + spec.pad_w_hi;
    const int64_t Ho = Hp - spec.kh + 1, Wo = Wp - spec.kw + 1;
    if (Ho < 1 || Wo < 1)
        throw ShapeError("conv2d: kernel (" + std::to_string(spec.kh) + "," +
                         std::to_string(spec.kw) + ") larger than padded input " +
                         shape_str({Hp, Wp}));

    const int64_t O = spec.out_channels;
    const int64_t K = C * spec.kh * spec.kw;
    const int64_t N = Ho * Wo;

    // Reuse the 3D gather with a unit depth axis.
    Conv3dSpec s3 = Conv3dSpec::valid(spec.in_channels, spec.out_channels, 1, spec.kh, spec.kw);
    s3.pad_h_lo = spec.pad_h_lo;
    s3.pad_h_hi = spec.pad_h_hi;
    s3.pad_w_lo = spec.pad_w_lo;
    s3.pad_w_hi = spec.pad_w_hi;

    Tensor<T> xp = pad3d(xv.reshaped({B, C, 1, H, W}), s3);
    Tensor<T> out({B, O, Ho, Wo});
    std::vector<T> cols(static_cast<size_t>(K * N));
    for (int64_t b = 0; b < B; ++b) {
        const T* xpb = xp.data() + b * C * Hp * Wp;
        im2col3d(xpb, C, 1, Hp, Wp, s3, 1, Ho, Wo, cols.data());
        T* ob = out.data() + b * O * N;
        detail::matmul_buf(weight->value.data(), cols.data(), ob, O, K, N, false);
        for (int64_t j = 0; j < O; ++j) {
            const T bj = bias->value[j];
            T* row = ob + j * N;
            for (int64_t n = 0; n < N; ++n) row[n] += bj;
        }
    }

    Shape in_shape = xv.shape();
    auto bw = [x, weight, bias, xp = std::move(xp), s3, in_shape, B, C, H, W, Hp, Wp, Ho, Wo, O, K,
               N](const Tensor<T>& g) {
        std::vector<T> cols(static_cast<size_t>(K * N));
        Tensor<T> dw = weight->requires_grad ? Tensor<T>::zeros(weight->value.shape()) : Tensor<T>();
        Tensor<T> dxp = x->requires_grad ? Tensor<T>::zeros(xp.shape()) : Tensor<T>();
        std::vector<T> dcols(x->requires_grad ? static_cast<size_t>(K * N) : 0);
        for (int64_t b = 0; b < B; ++b) {
            const T* gb = g.data() + b * O * N;
            const T* xpb = xp.data() + b * C * Hp * Wp;
            if (weight->requires_grad || x->requires_grad)
                im2col3d(xpb, C, 1, Hp, Wp, s3, 1, Ho, Wo, cols.data());
            if (weight->requires_grad) matmul_abt_acc(gb, cols.data(), dw.data(), O, N, K);
            if (x->requires_grad) {
                matmul_atb(weight->value.data(), gb, dcols.data(), O, K, N);
                col2im3d(dcols.data(), C, 1, Hp, Wp, s3, 1, Ho, Wo, dxp.data() + b * C * Hp * Wp);
            }
        }
        if (weight->requires_grad) weight->accumulate_grad(dw);
        if (x->requires_grad) {
            Tensor<T> dx5 = unpad3d(dxp, s3, B, C, 1, H, W);
            x->accumulate_grad(dx5.reshaped(in_shape));
        }
        if (bias->requires_grad) {
            Tensor<T> db = Tensor<T>::zeros(bias->value.shape());
            for (int64_t b = 0; b < B; ++b)
                for (int64_t j = 0; j < O; ++j) {
                    const T* row = g.data() + (b * O + j) * N;
                    T acc = 0;
                    for (int64_t n = 0; n < N; ++n) acc += row[n];
                    db[j] += acc;
                }
            bias->accumulate_grad(db);
        }
    };
    return make_op<T>(std::move(out), {x, weight, bias}, std::move(bw), "conv2d");
}

template <typename T>
NodePtr<T> relu(const NodePtr<T>& x) {
    Tensor<T> out(x->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] > T(0) ? x->value[i] : T(0);
    auto bw = [x](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> dx(x->value.shape());
        for (int64_t i = 0; i < dx.numel(); ++i) dx[i] = x->value[i] > T(0) ? g[i] : T(0);
        x->accumulate_grad(dx);
    };
    return make_op<T>(std::move(out), {x}, std::move(bw), "relu");
}

template <typename T>
NodePtr<T> maxpool3d(const NodePtr<T>& x, const Pool3dSpec& spec) {
    const Tensor<T>& xv = x->value;
    if (xv.ndim() != 5)
        throw ShapeError("maxpool3d: input must be (B,C,D,H,W), got " + shape_str(xv.shape()));
    const int64_t B = xv.extent(0), C = xv.extent(1);
    const int64_t D = xv.extent(2), H = xv.extent(3), W = xv.extent(4);
    const int64_t Do = (D - spec.kd) / spec.sd + 1;
    const int64_t Ho = (H - spec.kh) / spec.sh + 1;
    const int64_t Wo = (W - spec.kw) / spec.sw + 1;
    if (D < spec.kd || H < spec.kh || W < spec.kw)
        throw ShapeError("maxpool3d: kernel (" + std::to_string(spec.kd) + "," +
                         std::to_string(spec.kh) + "," + std::to_string(spec.kw) +
                         ") exceeds input extents " + shape_str({D, H, W}));

    Tensor<T> out({B, C, Do, Ho, Wo});
    std::vector<int64_t> argmax(static_cast<size_t>(out.numel()));
    int64_t o = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const T* plane = xv.data() + (b * C + c) * D * H * W;
            for (int64_t oz = 0; oz < Do; ++oz)
                for (int64_t oy = 0; oy < Ho; ++oy)
                    for (int64_t ox = 0; ox < Wo; ++ox, ++o) {
                        const int64_t z0 = oz * spec.sd, y0 = oy * spec.sh, x0 = ox * spec.sw;
                        T best = plane[(z0 * H + y0) * W + x0];
                        int64_t best_idx = (z0 * H + y0) * W + x0;
                        for (int64_t dz = 0; dz < spec.kd; ++dz)
                            for (int64_t dy = 0; dy < spec.kh; ++dy)
                                for (int64_t dx = 0; dx < spec.kw; ++dx) {
                                    const int64_t idx = ((z0 + dz) * H + y0 + dy) * W + x0 + dx;
                                    if (plane[idx] > best) {
                                        best = plane[idx];
                                        best_idx = idx;
                                    }
                                }
                        out[o] = best;
                        argmax[static_cast<size_t>(o)] = (b * C + c) * D * H * W + best_idx;
                    }
        }

    auto bw = [x, argmax = std::move(argmax)](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> dx = Tensor<T>::zeros(x->value.shape());
        for (int64_t i = 0; i < g.numel(); ++i) dx[argmax[static_cast<size_t>(i)]] += g[i];
        x->accumulate_grad(dx);
    };
    return make_op<T>(std::move(out), {x}, std::move(bw), "maxpool3d");
}

template <typename T>
NodePtr<T> maxpool2d(const NodePtr<T>& x, const Pool2dSpec& spec) {
    const Tensor<T>& xv = x->value;
    if (xv.ndim() != 4)
        throw ShapeError("maxpool2d: input must be (B,C,H,W), got " + shape_str(xv.shape()));
    const int64_t B = xv.extent(0), C = xv.extent(1), H = xv.extent(2), W = xv.extent(3);
    if (H < spec.kh || W < spec.kw)
        throw ShapeError("maxpool2d: kernel (" + std::to_string(spec.kh) + "," +
                         std::to_string(spec.kw) + ") exceeds input extents " + shape_str({H, W}));
    const int64_t Ho = (H - spec.kh) / spec.sh + 1;
    const int64_t Wo = (W - spec.kw) / spec.sw + 1;

    Tensor<T> out({B, C, Ho, Wo});
    std::vector<int64_t> argmax(static_cast<size_t>(out.numel()));
    int64_t o = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const T* plane = xv.data() + (b * C + c) * H * W;
            for (int64_t oy = 0; oy < Ho; ++oy)
                for (int64_t ox = 0; ox < Wo; ++ox, ++o) {
                    const int64_t y0 = oy * spec.sh, x0 = ox * spec.sw;
                    T best = plane[y0 * W + x0];
                    int64_t best_idx = y0 * W + x0;
                    for (int64_t dy = 0; dy < spec.kh; ++dy)
                        for (int64_t dx = 0; dx < spec.kw; ++dx) {
                            const int64_t idx = (y0 + dy) * W + x0 + dx;
                            if (plane[idx] > best) {
                                best = plane[idx];
                                best_idx = idx;
                            }
                        }
                    out[o] = best;
                    argmax[static_cast<size_t>(o)] = (b * C + c) * H * W + best_idx;
                }
        }

    auto bw = [x, argmax = std::move(argmax)](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> dx = Tensor<T>::zeros(x->value.shape());
        for (int64_t i = 0; i < g.numel(); ++i) dx[argmax[static_cast<size_t>(i)]] += g[i];
        x->accumulate_grad(dx);
    };
    return make_op<T>(std::move(out), {x}, std::move(bw), "maxpool2d");
}

template <typename T>
NodePtr<T> linear(const NodePtr<T>& x, const NodePtr<T>& weight, const NodePtr<T>& bias) {
    const Tensor<T>& xv = x->value;
    const Tensor<T>& wv = weight->value;
    const Tensor<T>& bv = bias->value;
    if (xv.ndim() != 2 || wv.ndim() != 2 || bv.ndim() != 1)
        throw ShapeError("linear: expected x (B,F), weight (O,F), bias (O)");
    if (xv.extent(1) != wv.extent(1))
        throw ShapeError("linear: feature extents differ, x " + shape_str(xv.shape()) +
                         " vs weight " + shape_str(wv.shape()));
    if (bv.extent(0) != wv.extent(0)) throw ShapeError("linear: bias length != out units");

    const int64_t B = xv.extent(0), F = xv.extent(1), O = wv.extent(0);
    Tensor<T> out({B, O});
    for (int64_t b = 0; b < B; ++b) {
        const T* xrow = xv.data() + b * F;
        T* orow = out.data() + b * O;
        for (int64_t j = 0; j < O; ++j) {
            const T* wrow = wv.data() + j * F;
            T acc = bv[j];
            for (int64_t f = 0; f < F; ++f) acc += xrow[f] * wrow[f];
            orow[j] = acc;
        }
    }

    auto bw = [x, weight, bias, B, F, O](const Tensor<T>& g) {
        if (x->requires_grad) {
            Tensor<T> dx = Tensor<T>::zeros(x->value.shape());
            for (int64_t b = 0; b < B; ++b) {
                T* drow = dx.data() + b * F;
                const T* grow = g.data() + b * O;
                for (int64_t j = 0; j < O; ++j) {
                    const T gj = grow[j];
                    const T* wrow = weight->value.data() + j * F;
                    for (int64_t f = 0; f < F; ++f) drow[f] += gj * wrow[f];
                }
            }
            x->accumulate_grad(dx);
        }
        if (weight->requires_grad) {
            Tensor<T> dw = Tensor<T>::zeros(weight->value.shape());
            for (int64_t b = 0; b < B; ++b) {
                const T* xrow = x->value.data() + b * F;
                const T* grow = g.data() + b * O;
                for (int64_t j = 0; j < O; ++j) {
                    const T gj = grow[j];
                    T* wrow = dw.data() + j * F;
                    for (int64_t f = 0; f < F; ++f) wrow[f] += gj * xrow[f];
                }
            }
            weight->accumulate_grad(dw);
        }
        if (bias->requires_grad) {
            Tensor<T> db = Tensor<T>::zeros(bias->value.shape());
            for (int64_t b = 0; b < B; ++b)
                for (int64_t j = 0; j < O; ++j) db[j] += g[b * O + j];
            bias->accumulate_grad(db);
        }
    };
    return make_op<T>(std::move(out), {x, weight, bias}, std::move(bw), "linear");
}

template <typename T>
NodePtr<T> dropout(const NodePtr<T>& x, double rate, RunMode mode, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ValueError("dropout: rate must be in [0,1), got " + std::to_string(rate));
    if (mode == RunMode::eval || rate == 0.0) return x;

    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    Tensor<T> mask(x->value.shape());
    for (int64_t i = 0; i < mask.numel(); ++i)
        mask[i] = rng.next_double() < rate ? T(0) : keep_scale;

    Tensor<T> out = ewise_mul(x->value, mask);
    auto bw = [x, mask](const Tensor<T>& g) {
        if (x->requires_grad) x->accumulate_grad(ewise_mul(g, mask));
    };
    return make_op<T>(std::move(out), {x}, std::move(bw), "dropout");
}

template <typename T>
NodePtr<T> residual_add(const NodePtr<T>& x, const std::vector<NodePtr<T>>& branches) {
    Tensor<T> out = x->value;
    for (const auto& br : branches) {
        detail::require_same_shape(x->value, br->value, "residual_add");
        T* po = out.data();
        const T* pb = br->value.data();
        for (int64_t i = 0; i < out.numel(); ++i) po[i] += pb[i];
    }
    std::vector<NodePtr<T>> parents;
    parents.push_back(x);
    for (const auto& br : branches) parents.push_back(br);
    auto bw = [parents](const Tensor<T>& g) {
        for (const auto& p : parents)
            if (p->requires_grad) p->accumulate_grad(g);
    };
    return make_op<T>(std::move(out), std::move(parents), std::move(bw), "residual_add");
}

template <typename T>
NodePtr<T> depth_fold(const NodePtr<T>& x) {
    const Tensor<T>& xv = x->value;
    if (xv.ndim() != 5)
        throw ShapeError("depth_fold: input must be (B,C,D,H,W), got " + shape_str(xv.shape()));
    Shape folded = {xv.extent(0), xv.extent(1) * xv.extent(2), xv.extent(3), xv.extent(4)};
    return reshape_node(x, std::move(folded));
}

template <typename T>
NodePtr<T> reshape_node(const NodePtr<T>& x, Shape new_shape) {
    Tensor<T> out = x->value.reshaped(std::move(new_shape));
    Shape original = x->value.shape();
    auto bw = [x, original](const Tensor<T>& g) {
        if (x->requires_grad) x->accumulate_grad(g.reshaped(original));
    };
    return make_op<T>(std::move(out), {x}, std::move(bw), "reshape");
}

template <typename T>
SoftmaxXentResult<T> softmax_xent(const NodePtr<T>& logits, const Tensor<T>& one_hot_truth) {
    const Tensor<T>& lv = logits->value;
    if (lv.ndim() != 2) throw ShapeError("softmax_xent: logits must be (B,L)");
    detail::require_same_shape(lv, one_hot_truth, "softmax_xent");
    const int64_t B = lv.extent(0), L = lv.extent(1);

    for (int64_t b = 0; b < B; ++b) {
        int ones = 0;
        for (int64_t j = 0; j < L; ++j) {
            const T v = one_hot_truth[b * L + j];
            if (v == T(1))
                ++ones;
            else if (v != T(0))
                throw ValueError("softmax_xent: truth row " + std::to_string(b) +
                                 " is not one-hot");
        }
        if (ones != 1)
            throw ValueError("softmax_xent: truth row " + std::to_string(b) + " is not one-hot");
    }

    Tensor<T> probs({B, L});
    double total = 0.0;
    for (int64_t b = 0; b < B; ++b) {
        const T* row = lv.data() + b * L;
        T m = row[0];
        for (int64_t j = 1; j < L; ++j) m = std::max(m, row[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < L; ++j) denom += std::exp(static_cast<double>(row[j] - m));
        const double log_denom = std::log(denom);
        for (int64_t j = 0; j < L; ++j) {
            const double logq = static_cast<double>(row[j] - m) - log_denom;
            probs[b * L + j] = static_cast<T>(std::exp(logq));
            if (one_hot_truth[b * L + j] == T(1)) total -= logq;
        }
    }
    Tensor<T> loss = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(B)));

    Tensor<T> probs_copy = probs;
    Tensor<T> truth = one_hot_truth;
    auto bw = [logits, probs_copy, truth, B, L](const Tensor<T>& g) {
        if (!logits->requires_grad) return;
        const T s = g[0] / static_cast<T>(B);
        Tensor<T> dl({B, L});
        for (int64_t i = 0; i < dl.numel(); ++i) dl[i] = (probs_copy[i] - truth[i]) * s;
        logits->accumulate_grad(dl);
    };
    NodePtr<T> loss_node = make_op<T>(std::move(loss), {logits}, std::move(bw), "softmax_xent");
    return {loss_node, std::move(probs)};
}

template <typename T>
NodePtr<T> weighted_sum(const NodePtr<T>& x, const Tensor<T>& weights) {
    detail::require_same_shape(x->value, weights, "weighted_sum");
    double acc = 0.0;
    for (int64_t i = 0; i < weights.numel(); ++i)
        acc += static_cast<double>(x->value[i]) * static_cast<double>(weights[i]);
    Tensor<T> w = weights;
    auto bw = [x, w](const Tensor<T>& g) {
        if (x->requires_grad) x->accumulate_grad(scale(w, g[0]));
    };
    return make_op<T>(Tensor<T>::scalar(static_cast<T>(acc)), {x}, std::move(bw), "weighted_sum");
}

namespace reference {

template <typename T>
Tensor<T> conv3d_naive(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                       const Conv3dSpec& spec) {
    const int64_t B = x.extent(0), C = x.extent(1);
    const int64_t D = x.extent(2), H = x.extent(3), W = x.extent(4);
    const int64_t Dp = D + spec.pad_d_lo + spec.pad_d_hi;
    const int64_t Hp = H + spec.pad_h_lo + spec.pad_h_hi;
    const int64_t Wp = W + spec.pad_w_lo + spec.pad_w_hi;
    const int64_t Do = Dp - spec.kd + 1, Ho = Hp - spec.kh + 1, Wo = Wp - spec.kw + 1;
    const int64_t O = spec.out_channels;
    Tensor<T> xp = pad3d(x, spec);
    Tensor<T> out({B, O, Do, Ho, Wo});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t j = 0; j < O; ++j)
            for (int64_t oz = 0; oz < Do; ++oz)
                for (int64_t oy = 0; oy < Ho; ++oy)
                    for (int64_t ox = 0; ox < Wo; ++ox) {
                        T acc = bias[j];
                        for (int64_t m = 0; m < C; ++m)
                            for (int64_t r = 0; r < spec.kd; ++r)
                                for (int64_t p = 0; p < spec.kh; ++p)
                                    for (int64_t q = 0; q < spec.kw; ++q)
                                        acc += weight.at({j, m, r, p, q}) *
                                               xp.at({b, m, oz + r, oy + p, ox + q});
                        out.at({b, j, oz, oy, ox}) = acc;
                    }
    return out;
}

template <typename T>
Tensor<T> conv2d_naive(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                       const Conv2dSpec& spec) {
    const int64_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
    const int64_t Hp = H + spec.pad_h_lo + spec.pad_h_hi;
    const int64_t Wp = W + spec.pad_w_lo + spec.pad_w_hi;
    const int64_t Ho = Hp - spec.kh + 1, Wo = Wp - spec.kw + 1;
    const int64_t O = spec.out_channels;
    Conv3dSpec s3 = Conv3dSpec::valid(spec.in_channels, spec.out_channels, 1, spec.kh, spec.kw);
    s3.pad_h_lo = spec.pad_h_lo;
    s3.pad_h_hi = spec.pad_h_hi;
    s3.pad_w_lo = spec.pad_w_lo;
    s3.pad_w_hi = spec.pad_w_hi;
    Tensor<T> xp = pad3d(x.reshaped({B, C, 1, H, W}), s3);
    Tensor<T> out({B, O, Ho, Wo});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t j = 0; j < O; ++j)
            for (int64_t oy = 0; oy < Ho; ++oy)
                for (int64_t ox = 0; ox < Wo; ++ox) {
                    T acc = bias[j];
                    for (int64_t m = 0; m < C; ++m)
                        for (int64_t p = 0; p < spec.kh; ++p)
                            for (int64_t q = 0; q < spec.kw; ++q)
                                acc += weight.at({j, m, p, q}) * xp.at({b, m, 0, oy + p, ox + q});
                    out.at({b, j, oy, ox}) = acc;
                }
    return out;
}

template Tensor<float> conv3d_naive<float>(const Tensor<float>&, const Tensor<float>&,
                                           const Tensor<float>&, const Conv3dSpec&);
template Tensor<double> conv3d_naive<double>(const Tensor<double>&, const Tensor<double>&,
                                             const Tensor<double>&, const Conv3dSpec&);
template Tensor<float> conv2d_naive<float>(const Tensor<float>&, const Tensor<float>&,
                                           const Tensor<float>&, const Conv2dSpec&);
template Tensor<double> conv2d_naive<double>(const Tensor<double>&, const Tensor<double>&,
                                             const Tensor<double>&, const Conv2dSpec&);

}  // namespace reference

#define MSN_INSTANTIATE_OPS(T)                                                                    \
    template NodePtr<T> conv3d<T>(const NodePtr<T>&, const NodePtr<T>&, const NodePtr<T>&,        \
                                  const Conv3dSpec&);                                             \
    template NodePtr<T> conv2d<T>(const NodePtr<T>&, const NodePtr<T>&, const NodePtr<T>&,        \
                                  const Conv2dSpec&);                                             \
    template NodePtr<T> relu<T>(const NodePtr<T>&);                                               \
    template NodePtr<T> maxpool3d<T>(const NodePtr<T>&, const Pool3dSpec&);                       \
    template NodePtr<T> maxpool2d<T>(const NodePtr<T>&, const Pool2dSpec&);                       \
    template NodePtr<T> linear<T>(const NodePtr<T>&, const NodePtr<T>&, const NodePtr<T>&);       \
    template NodePtr<T> dropout<T>(const NodePtr<T>&, double, RunMode, Rng&);                     \
    template NodePtr<T> residual_add<T>(const NodePtr<T>&, const std::vector<NodePtr<T>>&);       \
    template NodePtr<T> depth_fold<T>(const NodePtr<T>&);                                         \
    template NodePtr<T> reshape_node<T>(const NodePtr<T>&, Shape);                                \
    template SoftmaxXentResult<T> softmax_xent<T>(const NodePtr<T>&, const Tensor<T>&);           \
    template NodePtr<T> weighted_sum<T>(const NodePtr<T>&, const Tensor<T>&);

MSN_INSTANTIATE_OPS(float)
MSN_INSTANTIATE_OPS(double)

#undef MSN_INSTANTIATE_OPS

}  // namespace msn
