#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include "qseld/tensor.hpp"

namespace qseld {

/// Quaternion scalar q = w + x i + y j + z k.
struct Quaternion {
    double w = 0.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Quaternion() = default;
    constexpr Quaternion(double w_, double x_, double y_, double z_)
        : w(w_), x(x_), y(y_), z(z_) {}

    static constexpr Quaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }

    Quaternion conjugate() const { return {w, -x, -y, -z}; }

    double norm_squared() const { return w * w + x * x + y * y + z * z; }
    double norm() const { return std::sqrt(norm_squared()); }

    Quaternion operator+(const Quaternion& o) const { return {w + o.w, x + o.x, y + o.y, z + o.z}; }
    Quaternion operator-(const Quaternion& o) const { return {w - o.w, x - o.x, y - o.y, z - o.z}; }
    Quaternion operator*(double s) const { return {w * s, x * s, y * s, z * s}; }

    bool operator==(const Quaternion& o) const = default;
};

/// Hamilton product p ⊗ q (non-commutative).
inline Quaternion hamilton_product(const Quaternion& p, const Quaternion& q) {
    return {
        p.w * q.w - p.x * q.x - p.y * q.y - p.z * q.z,
        p.w * q.x + p.x * q.w + p.y * q.z - p.z * q.y,
        p.w * q.y - p.x * q.z + p.y * q.w + p.z * q.x,
        p.w * q.z + p.x * q.y - p.y * q.x + p.z * q.w,
    };
}

/// Conjugate and Euclidean norm in one call; q ⊗ conj(q) = (norm^2, 0, 0, 0).
inline std::pair<Quaternion, double> conjugate_and_norm(const Quaternion& q) {
    return {q.conjugate(), q.norm()};
}

/// Quaternion-valued array stored as four real planes of identical shape.
template <typename T>
struct QuatTensor {
    Tensor<T> w, x, y, z;

    QuatTensor() = default;

    explicit QuatTensor(std::vector<std::size_t> shape)
        : w(shape), x(shape), y(shape), z(std::move(shape)) {}

    QuatTensor(std::initializer_list<std::size_t> shape)
        : QuatTensor(std::vector<std::size_t>(shape)) {}

    const std::vector<std::size_t>& shape() const { return w.shape(); }
    std::size_t ndim() const { return w.ndim(); }
    std::size_t dim(std::size_t i) const { return w.dim(i); }
    std::size_t numel() const { return w.numel(); }

    Tensor<T>& plane(std::size_t i) {
        switch (i) {
            case 0: return w;
            case 1: return x;
            case 2: return y;
            default: return z;
        }
    }
    const Tensor<T>& plane(std::size_t i) const {
        return const_cast<QuatTensor*>(this)->plane(i);
    }

    Quaternion q(std::size_t flat) const {
        return {static_cast<double>(w[flat]), static_cast<double>(x[flat]),
                static_cast<double>(y[flat]), static_cast<double>(z[flat])};
    }

    void set(std::size_t flat, const Quaternion& v) {
        w[flat] = static_cast<T>(v.w);
        x[flat] = static_cast<T>(v.x);
        y[flat] = static_cast<T>(v.y);
        z[flat] = static_cast<T>(v.z);
    }

    void zero() {
        w.zero();
        x.zero();
        y.zero();
        z.zero();
    }

    bool all_finite() const {
        return w.all_finite() && x.all_finite() && y.all_finite() && z.all_finite();
    }

    QuatTensor reshaped(std::vector<std::size_t> shape) const {
        QuatTensor t;
        t.w = w.reshaped(shape);
        t.x = x.reshaped(shape);
        t.y = y.reshaped(shape);
        t.z = z.reshaped(std::move(shape));
        return t;
    }

    template <typename U>
    QuatTensor<U> cast() const {
        QuatTensor<U> t;
        t.w = w.template cast<U>();
        t.x = x.template cast<U>();
        t.y = y.template cast<U>();
        t.z = z.template cast<U>();
        return t;
    }

    static QuatTensor zeros_like(const QuatTensor& other) { return QuatTensor(other.shape()); }
};

/// Real block-matrix representation of a quaternion weight matrix.
///
/// For Wq of shape [out, in], returns the [4*out, 4*in] real matrix B such
/// that B * stack(v_W, v_X, v_Y, v_Z) equals the component stack of Wq ⊗ v
/// for every quaternion vector v. Each scalar weight (w, x, y, z) expands to
/// the 4x4 left-multiplication block
///
///     [ w  -x  -y  -z ]
///     [ x   w  -z   y ]
///     [ y   z   w  -x ]
///     [ z  -y   x   w ]
template <typename T>
Tensor<double> to_real_block(const QuatTensor<T>& wq) {
    if (wq.ndim() != 2) {
        throw std::invalid_argument("to_real_block: expected a 2-D quaternion matrix, got shape " +
                                    wq.w.shape_str());
    }
    const std::size_t out = wq.dim(0);
    const std::size_t in = wq.dim(1);
    Tensor<double> block({4 * out, 4 * in});
    for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t i = 0; i < in; ++i) {
            const Quaternion q = wq.q(o * in + i);
            const std::size_t r = 4 * o;
            const std::size_t c = 4 * i;
            block.at(r + 0, c + 0) = q.w;
            block.at(r + 0, c + 1) = -q.x;
            block.at(r + 0, c + 2) = -q.y;
            block.at(r + 0, c + 3) = -q.z;
            block.at(r + 1, c + 0) = q.x;
            block.at(r + 1, c + 1) = q.w;
            block.at(r + 1, c + 2) = -q.z;
            block.at(r + 1, c + 3) = q.y;
            block.at(r + 2, c + 0) = q.y;
            block.at(r + 2, c + 1) = q.z;
            block.at(r + 2, c + 2) = q.w;
            block.at(r + 2, c + 3) = -q.x;
            block.at(r + 3, c + 0) = q.z;
            block.at(r + 3, c + 1) = -q.y;
            block.at(r + 3, c + 2) = q.x;
            block.at(r + 3, c + 3) = q.w;
        }
    }
    return block;
}

}  // namespace qseld
