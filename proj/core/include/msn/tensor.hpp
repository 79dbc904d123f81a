#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "msn/errors.hpp"

namespace msn {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

/// Dense row-major n-dimensional array (up to 5 axes used by the network:
/// batch, channel, depth, height, width). Values are contiguous; the linear
/// index of (i0..ik) increases lexicographically with the coordinates.
template <typename T>
class Tensor {
    static_assert(std::is_floating_point_v<T>, "Tensor supports float32/float64");

public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(static_cast<size_t>(shape_numel(shape_)), T(0));
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    int64_t extent(int axis) const { return shape_[static_cast<size_t>(axis)]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    T operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    int64_t linear_index(std::initializer_list<int64_t> idx) const {
        int64_t lin = 0;
        size_t axis = 0;
        for (int64_t i : idx) {
            lin = lin * shape_[axis] + i;
            ++axis;
        }
        return lin;
    }

    T at(std::initializer_list<int64_t> idx) const { return data_[static_cast<size_t>(linear_index(idx))]; }
    T& at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(linear_index(idx))]; }

    /// Same data, new shape; element counts must agree.
    Tensor reshaped(Shape new_shape) const {
        if (shape_numel(new_shape) != numel())
            throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(new_shape) +
                             ": element counts differ (" + std::to_string(numel()) + " vs " +
                             std::to_string(shape_numel(new_shape)) + ")");
        return Tensor(std::move(new_shape), data_);
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    void validate_shape() const {
        if (shape_.size() > 5) throw ShapeError("tensor rank > 5: " + shape_str(shape_));
        for (int64_t e : shape_)
            if (e < 0) throw ShapeError("negative extent in shape " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<T> data_;
};

namespace detail {
template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}
}  // namespace detail

template <typename T>
Tensor<T> ewise_add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "ewise_add");
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] + pb[i];
    return out;
}

template <typename T>
Tensor<T> ewise_sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "ewise_sub");
    Tensor<T> out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
    return out;
}

template <typename T>
Tensor<T> ewise_mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "ewise_mul");
    Tensor<T> out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}

template <typename T>
Tensor<T> ewise_max(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "ewise_max");
    Tensor<T> out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = std::max(a[i], b[i]);
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    Tensor<T> out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * c;
    return out;
}

namespace detail {
/// C (m x n) += or = A (m x k) * B (k x n), row-major buffers.
/// Per output element the additions run over k left-to-right, so the result
/// is bitwise equal to the naive i-j-k triple loop.
template <typename T>
void matmul_buf(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, T(0));
    for (int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            const T* brow = b + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}
}  // namespace detail

/// Standard matrix product of two 2-axis tensors; single-threaded with a
/// fixed left-to-right reduction over the inner axis.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeError("matmul: expected 2-axis tensors, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    if (a.extent(1) != b.extent(0))
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    Tensor<T> out({a.extent(0), b.extent(1)});
    detail::matmul_buf(a.data(), b.data(), out.data(), a.extent(0), a.extent(1), b.extent(1), false);
    return out;
}

}  // namespace msn
