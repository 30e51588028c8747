#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgmap {

using cplx = std::complex<double>;
using Shape = std::vector<std::size_t>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major n-d array with value semantics.
template <class T>
class Array {
public:
    using value_type = T;

    Array() = default;

    explicit Array(Shape shape, T fill = T{})
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

    Array(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_))
            throw ShapeError("Array: data size " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t ndim() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> flat() noexcept { return data_; }
    std::span<const T> flat() const noexcept { return data_; }
    std::vector<T>& vec() noexcept { return data_; }
    const std::vector<T>& vec() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    template <class... Idx>
    T& operator()(Idx... idx) {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }
    template <class... Idx>
    const T& operator()(Idx... idx) const {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }

    /// Number of elements in one slab along the leading axis.
    std::size_t stride0() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }

    /// Contiguous view of entry `i` along the leading axis.
    std::span<T> slab(std::size_t i) {
        const std::size_t n = stride0();
        return std::span<T>(data_).subspan(i * n, n);
    }
    std::span<const T> slab(std::size_t i) const {
        const std::size_t n = stride0();
        return std::span<const T>(data_).subspan(i * n, n);
    }

    void fill(const T& v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Array& o) const = default;

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        std::size_t off = 0;
        std::size_t k = 0;
        for (std::size_t i : idx) off = off * shape_[k++] + i;
        return off;
    }

    Shape shape_;
    std::vector<T> data_;
};

using RArray = Array<double>;
using CArray = Array<cplx>;
using MaskArray = Array<std::uint8_t>;
using LabelArray = Array<std::int32_t>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a != b)
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
}

// Small elementwise helpers over flat storage. Shapes are checked by callers.

template <class Range>
double norm2_sq(const Range& x) {
    double s = 0.0;
    for (const auto& v : x) s += std::norm(v);
    return s;
}

template <class Range>
double norm2(const Range& x) {
    return std::sqrt(norm2_sq(x));
}

/// Real part of the Hermitian inner product <a, b> = sum conj(a) b.
inline cplx inner(std::span<const cplx> a, std::span<const cplx> b) {
    cplx s{0.0, 0.0};
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s;
}

template <class Range>
bool all_finite(const Range& x) {
    for (const auto& v : x) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, cplx>) {
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
        } else {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
    }
    return true;
}

inline RArray magnitude(const CArray& a) {
    RArray out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::abs(a[i]);
    return out;
}

inline CArray to_complex(const RArray& a) {
    CArray out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = cplx(a[i], 0.0);
    return out;
}

} // namespace rgmap
