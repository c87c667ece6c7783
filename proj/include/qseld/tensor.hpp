#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qseld {

/// Dense row-major N-dimensional array of a real scalar type.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
        data_.assign(numel_of(shape_), T(0));
    }

    Tensor(std::initializer_list<std::size_t> shape)
        : Tensor(std::vector<std::size_t>(shape)) {}

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    static Tensor full(std::vector<std::size_t> shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t flat) { return data_[flat]; }
    const T& operator[](std::size_t flat) const { return data_[flat]; }

    T& at(std::size_t i) { return data_[check_index(offset1(i))]; }
    const T& at(std::size_t i) const { return data_[check_index(offset1(i))]; }
    T& at(std::size_t i, std::size_t j) { return data_[offset2(i, j)]; }
    const T& at(std::size_t i, std::size_t j) const { return data_[offset2(i, j)]; }
    T& at(std::size_t i, std::size_t j, std::size_t k) { return data_[offset3(i, j, k)]; }
    const T& at(std::size_t i, std::size_t j, std::size_t k) const { return data_[offset3(i, j, k)]; }
    T& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) { return data_[offset4(i, j, k, l)]; }
    const T& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[offset4(i, j, k, l)];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
    void zero() { fill(T(0)); }

    /// Reinterpret the flat buffer under a new shape with the same element count.
    Tensor reshaped(std::vector<std::size_t> shape) const {
        if (numel_of(shape) != data_.size()) {
            throw std::invalid_argument("Tensor::reshaped: element count mismatch");
        }
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) t[i] = static_cast<U>(data_[i]);
        return t;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (const T& v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    Tensor& operator+=(const Tensor& other) {
        require_same_shape(other, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    Tensor& operator*=(T s) {
        for (T& v : data_) v *= s;
        return *this;
    }

    std::string shape_str() const { return shape_str_of(shape_); }

    static std::string shape_str_of(const std::vector<std::size_t>& shape) {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) os << ", ";
            os << shape[i];
        }
        os << "]";
        return os.str();
    }

    static std::size_t numel_of(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

private:
    std::size_t check_index(std::size_t flat) const {
        if (flat >= data_.size()) throw std::out_of_range("Tensor index out of range");
        return flat;
    }
    std::size_t offset1(std::size_t i) const { return i; }
    std::size_t offset2(std::size_t i, std::size_t j) const { return i * shape_[1] + j; }
    std::size_t offset3(std::size_t i, std::size_t j, std::size_t k) const {
        return (i * shape_[1] + j) * shape_[2] + k;
    }
    std::size_t offset4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return ((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l;
    }

    void require_same_shape(const Tensor& other, const char* what) const {
        if (shape_ != other.shape_) {
            throw std::invalid_argument(std::string("Tensor::") + what + ": shape mismatch " +
                                        shape_str() + " vs " + other.shape_str());
        }
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace qseld
