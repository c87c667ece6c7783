#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qseld/init.hpp"
#include "qseld/quaternion.hpp"
#include "qseld/tensor.hpp"

namespace qseld {

template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* value = nullptr;
    Tensor<T>* grad = nullptr;
};

template <typename T>
void append_quat_params(std::vector<ParamRef<T>>& out, const std::string& name,
                        QuatTensor<T>& value, QuatTensor<T>& grad) {
    static const char* suffix[4] = {".w", ".x", ".y", ".z"};
    for (std::size_t p = 0; p < 4; ++p) {
        out.push_back({name + suffix[p], &value.plane(p), &grad.plane(p)});
    }
}

enum class Activation { kLinear, kRelu, kSigmoid, kTanh };

inline Activation activation_from_string(const std::string& s) {
    if (s == "linear") return Activation::kLinear;
    if (s == "relu") return Activation::kRelu;
    if (s == "sigmoid") return Activation::kSigmoid;
    if (s == "tanh") return Activation::kTanh;
    throw std::invalid_argument("unknown activation: " + s);
}

template <typename T>
T apply_activation(T v, Activation kind) {
    switch (kind) {
        case Activation::kLinear: return v;
        case Activation::kRelu: return v > T(0) ? v : T(0);
        case Activation::kSigmoid: return T(1) / (T(1) + std::exp(-v));
        case Activation::kTanh: return std::tanh(v);
    }
    return v;
}

/// Derivative expressed through the activation output. ReLU uses subgradient
/// 0 at exactly 0.
template <typename T>
T activation_output_derivative(T out, Activation kind) {
    switch (kind) {
        case Activation::kLinear: return T(1);
        case Activation::kRelu: return out > T(0) ? T(1) : T(0);
        case Activation::kSigmoid: return out * (T(1) - out);
        case Activation::kTanh: return T(1) - out * out;
    }
    return T(1);
}

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& in, Activation kind) {
    Tensor<T> out(in.shape());
    for (std::size_t i = 0; i < in.numel(); ++i) out[i] = apply_activation(in[i], kind);
    return out;
}

template <typename T>
Tensor<T> activation_backward(const Tensor<T>& out, const Tensor<T>& grad_out, Activation kind) {
    Tensor<T> grad_in(out.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        grad_in[i] = grad_out[i] * activation_output_derivative(out[i], kind);
    }
    return grad_in;
}

/// Split activation: the real nonlinearity applied independently to each of
/// the four quaternion component planes.
template <typename T>
QuatTensor<T> split_activation(const QuatTensor<T>& in, Activation kind) {
    QuatTensor<T> out;
    out.w = activation_forward(in.w, kind);
    out.x = activation_forward(in.x, kind);
    out.y = activation_forward(in.y, kind);
    out.z = activation_forward(in.z, kind);
    return out;
}

template <typename T>
QuatTensor<T> split_activation_backward(const QuatTensor<T>& out, const QuatTensor<T>& grad_out,
                                        Activation kind) {
    QuatTensor<T> grad_in;
    grad_in.w = activation_backward(out.w, grad_out.w, kind);
    grad_in.x = activation_backward(out.x, grad_out.x, kind);
    grad_in.y = activation_backward(out.y, grad_out.y, kind);
    grad_in.z = activation_backward(out.z, grad_out.z, kind);
    return grad_in;
}

template <typename T>
QuatTensor<T> unsqueeze0(const QuatTensor<T>& x) {
    std::vector<std::size_t> shape;
    shape.push_back(1);
    for (std::size_t d : x.shape()) shape.push_back(d);
    return x.reshaped(shape);
}

template <typename T>
QuatTensor<T> squeeze0(const QuatTensor<T>& x) {
    if (x.ndim() < 2 || x.dim(0) != 1) {
        throw std::invalid_argument("squeeze0: leading dimension must be 1");
    }
    std::vector<std::size_t> shape(x.shape().begin() + 1, x.shape().end());
    return x.reshaped(shape);
}

namespace detail {

// Component expansion of k (x) q used by the convolution/dense hot loops.
template <typename T>
inline void hamilton_accumulate(T kw, T kx, T ky, T kz, T xw, T xx, T xy, T xz, T& ow, T& ox,
                                T& oy, T& oz) {
    ow += kw * xw - kx * xx - ky * xy - kz * xz;
    ox += kw * xx + kx * xw + ky * xz - kz * xy;
    oy += kw * xy - kx * xz + ky * xw + kz * xx;
    oz += kw * xz + kx * xy - ky * xx + kz * xw;
}

// conj(k) (x) g: input gradient of y = k (x) x.
template <typename T>
inline void conj_left_accumulate(T kw, T kx, T ky, T kz, T gw, T gx, T gy, T gz, T& ow, T& ox,
                                 T& oy, T& oz) {
    ow += kw * gw + kx * gx + ky * gy + kz * gz;
    ox += kw * gx - kx * gw - ky * gz + kz * gy;
    oy += kw * gy + kx * gz - ky * gw - kz * gx;
    oz += kw * gz - kx * gy + ky * gx - kz * gw;
}

// g (x) conj(x): kernel gradient of y = k (x) x.
template <typename T>
inline void conj_right_accumulate(T gw, T gx, T gy, T gz, T xw, T xx, T xy, T xz, T& ow, T& ox,
                                  T& oy, T& oz) {
    ow += gw * xw + gx * xx + gy * xy + gz * xz;
    ox += -gw * xx + gx * xw - gy * xz + gz * xy;
    oy += -gw * xy + gx * xz + gy * xw - gz * xx;
    oz += -gw * xz - gx * xy + gy * xx + gz * xw;
}

}  // namespace detail

/// Quaternion 2-D convolution, 3x3 kernels, stride 1, zero padding ("same").
///
/// Input [B, C_in, T, F] -> output [B, P_out, T, F]; each output element is
/// the sum over input channels and the 3x3 window of kernel (x) input plus a
/// quaternion bias.
template <typename T>
class QConv2d {
public:
    static constexpr std::size_t kKernel = 3;

    QConv2d(std::size_t in_channels, std::size_t out_channels)
        : in_channels_(in_channels),
          out_channels_(out_channels),
          kernels_({out_channels, in_channels, kKernel, kKernel}),
          bias_({out_channels}),
          grad_kernels_({out_channels, in_channels, kKernel, kKernel}),
          grad_bias_({out_channels}) {}

    /// He-criterion polar initialization; bias stays zero.
    void init(std::uint64_t seed) {
        init_quat_tensor(kernels_, InitSpec{static_cast<long>(in_channels_ * kKernel * kKernel), seed});
    }

    std::size_t in_channels() const { return in_channels_; }
    std::size_t out_channels() const { return out_channels_; }
    QuatTensor<T>& kernels() { return kernels_; }
    const QuatTensor<T>& kernels() const { return kernels_; }
    QuatTensor<T>& bias() { return bias_; }

    QuatTensor<T> forward(const QuatTensor<T>& input) {
        check_input(input);
        cached_input_ = input;
        const std::size_t B = input.dim(0), C = input.dim(1), Tt = input.dim(2), F = input.dim(3);
        QuatTensor<T> out({B, out_channels_, Tt, F});

        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t p = 0; p < out_channels_; ++p) {
                const std::size_t out_base = ((b * out_channels_ + p) * Tt) * F;
                T* ow = out.w.data() + out_base;
                T* ox = out.x.data() + out_base;
                T* oy = out.y.data() + out_base;
                T* oz = out.z.data() + out_base;
                const T bw = bias_.w[p], bx = bias_.x[p], by = bias_.y[p], bz = bias_.z[p];
                for (std::size_t i = 0; i < Tt * F; ++i) {
                    ow[i] = bw;
                    ox[i] = bx;
                    oy[i] = by;
                    oz[i] = bz;
                }
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t in_base = ((b * C + c) * Tt) * F;
                    const T* iw = input.w.data() + in_base;
                    const T* ix = input.x.data() + in_base;
                    const T* iy = input.y.data() + in_base;
                    const T* iz = input.z.data() + in_base;
                    for (std::size_t ki = 0; ki < kKernel; ++ki) {
                        for (std::size_t kj = 0; kj < kKernel; ++kj) {
                            const std::size_t kidx =
                                ((p * C + c) * kKernel + ki) * kKernel + kj;
                            const T kw = kernels_.w[kidx], kx = kernels_.x[kidx],
                                    ky = kernels_.y[kidx], kz = kernels_.z[kidx];
                            if (kw == T(0) && kx == T(0) && ky == T(0) && kz == T(0)) continue;
                            const std::ptrdiff_t dt = static_cast<std::ptrdiff_t>(ki) - 1;
                            const std::ptrdiff_t df = static_cast<std::ptrdiff_t>(kj) - 1;
                            const std::size_t t0 = dt < 0 ? static_cast<std::size_t>(-dt) : 0;
                            const std::size_t t1 = dt > 0 ? Tt - static_cast<std::size_t>(dt) : Tt;
                            const std::size_t f0 = df < 0 ? static_cast<std::size_t>(-df) : 0;
                            const std::size_t f1 = df > 0 ? F - static_cast<std::size_t>(df) : F;
                            for (std::size_t t = t0; t < t1; ++t) {
                                const std::size_t in_row =
                                    static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + dt) * F;
                                const std::size_t out_row = t * F;
                                for (std::size_t f = f0; f < f1; ++f) {
                                    const std::size_t ii =
                                        in_row + static_cast<std::size_t>(
                                                     static_cast<std::ptrdiff_t>(f) + df);
                                    const std::size_t oi = out_row + f;
                                    detail::hamilton_accumulate(kw, kx, ky, kz, iw[ii], ix[ii],
                                                                iy[ii], iz[ii], ow[oi], ox[oi],
                                                                oy[oi], oz[oi]);
                                }
                            }
                        }
                    }
                }
            }
        }
        return out;
    }

    /// Accumulates kernel and bias gradients, returns the input gradient.
    QuatTensor<T> backward(const QuatTensor<T>& grad_out) {
        const std::size_t B = cached_input_.dim(0), C = cached_input_.dim(1),
                          Tt = cached_input_.dim(2), F = cached_input_.dim(3);
        if (grad_out.ndim() != 4 || grad_out.dim(0) != B || grad_out.dim(1) != out_channels_ ||
            grad_out.dim(2) != Tt || grad_out.dim(3) != F) {
            throw std::invalid_argument("qconv2d backward: grad shape " + grad_out.w.shape_str() +
                                        " does not match forward output");
        }
        QuatTensor<T> grad_in({B, C, Tt, F});

        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t p = 0; p < out_channels_; ++p) {
                const std::size_t g_base = ((b * out_channels_ + p) * Tt) * F;
                const T* gw = grad_out.w.data() + g_base;
                const T* gx = grad_out.x.data() + g_base;
                const T* gy = grad_out.y.data() + g_base;
                const T* gz = grad_out.z.data() + g_base;
                T sw = T(0), sx = T(0), sy = T(0), sz = T(0);
                for (std::size_t i = 0; i < Tt * F; ++i) {
                    sw += gw[i];
                    sx += gx[i];
                    sy += gy[i];
                    sz += gz[i];
                }
                grad_bias_.w[p] += sw;
                grad_bias_.x[p] += sx;
                grad_bias_.y[p] += sy;
                grad_bias_.z[p] += sz;

                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t in_base = ((b * C + c) * Tt) * F;
                    const T* iw = cached_input_.w.data() + in_base;
                    const T* ix = cached_input_.x.data() + in_base;
                    const T* iy = cached_input_.y.data() + in_base;
                    const T* iz = cached_input_.z.data() + in_base;
                    T* dw = grad_in.w.data() + in_base;
                    T* dx = grad_in.x.data() + in_base;
                    T* dy = grad_in.y.data() + in_base;
                    T* dz = grad_in.z.data() + in_base;
                    for (std::size_t ki = 0; ki < kKernel; ++ki) {
                        for (std::size_t kj = 0; kj < kKernel; ++kj) {
                            const std::size_t kidx =
                                ((p * C + c) * kKernel + ki) * kKernel + kj;
                            const T kw = kernels_.w[kidx], kx = kernels_.x[kidx],
                                    ky = kernels_.y[kidx], kz = kernels_.z[kidx];
                            T akw = T(0), akx = T(0), aky = T(0), akz = T(0);
                            const std::ptrdiff_t dt = static_cast<std::ptrdiff_t>(ki) - 1;
                            const std::ptrdiff_t df = static_cast<std::ptrdiff_t>(kj) - 1;
                            const std::size_t t0 = dt < 0 ? static_cast<std::size_t>(-dt) : 0;
                            const std::size_t t1 = dt > 0 ? Tt - static_cast<std::size_t>(dt) : Tt;
                            const std::size_t f0 = df < 0 ? static_cast<std::size_t>(-df) : 0;
                            const std::size_t f1 = df > 0 ? F - static_cast<std::size_t>(df) : F;
                            for (std::size_t t = t0; t < t1; ++t) {
                                const std::size_t in_row =
                                    static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + dt) * F;
                                const std::size_t out_row = t * F;
                                for (std::size_t f = f0; f < f1; ++f) {
                                    const std::size_t ii =
                                        in_row + static_cast<std::size_t>(
                                                     static_cast<std::ptrdiff_t>(f) + df);
                                    const std::size_t oi = out_row + f;
                                    detail::conj_left_accumulate(kw, kx, ky, kz, gw[oi], gx[oi],
                                                                 gy[oi], gz[oi], dw[ii], dx[ii],
                                                                 dy[ii], dz[ii]);
                                    detail::conj_right_accumulate(gw[oi], gx[oi], gy[oi], gz[oi],
                                                                  iw[ii], ix[ii], iy[ii], iz[ii],
                                                                  akw, akx, aky, akz);
                                }
                            }
                            grad_kernels_.w[kidx] += akw;
                            grad_kernels_.x[kidx] += akx;
                            grad_kernels_.y[kidx] += aky;
                            grad_kernels_.z[kidx] += akz;
                        }
                    }
                }
            }
        }
        return grad_in;
    }

    void zero_grad() {
        grad_kernels_.zero();
        grad_bias_.zero();
    }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        append_quat_params(out, prefix + "kernels", kernels_, grad_kernels_);
        append_quat_params(out, prefix + "bias", bias_, grad_bias_);
    }

private:
    void check_input(const QuatTensor<T>& input) const {
        if (input.ndim() != 4) {
            throw std::invalid_argument("qconv2d: expected input [B, C, T, F], got shape " +
                                        input.w.shape_str());
        }
        if (input.dim(1) != in_channels_) {
            throw std::invalid_argument(
                "qconv2d: input has " + std::to_string(input.dim(1)) +
                " quaternion channels, layer expects " + std::to_string(in_channels_));
        }
        if (input.dim(2) < 1 || input.dim(3) < 1) {
            throw std::invalid_argument("qconv2d: T and F must be >= 1, got shape " +
                                        input.w.shape_str());
        }
    }

    std::size_t in_channels_;
    std::size_t out_channels_;
    QuatTensor<T> kernels_;
    QuatTensor<T> bias_;
    QuatTensor<T> grad_kernels_;
    QuatTensor<T> grad_bias_;
    QuatTensor<T> cached_input_;
};

/// Quaternion dense layer: y = activation(W (x) x + b) with the Hamilton
/// matrix-vector product.
template <typename T>
class QDense {
public:
    QDense(std::size_t in_size, std::size_t out_size, Activation activation)
        : in_size_(in_size),
          out_size_(out_size),
          activation_(activation),
          weights_({out_size, in_size}),
          bias_({out_size}),
          grad_weights_({out_size, in_size}),
          grad_bias_({out_size}) {}

    void init(std::uint64_t seed) {
        init_quat_tensor(weights_, InitSpec{static_cast<long>(in_size_), seed});
    }

    QuatTensor<T>& weights() { return weights_; }
    QuatTensor<T>& bias() { return bias_; }
    Activation activation() const { return activation_; }

    /// Input [B, in] (or [in], treated as batch of one) -> [B, out].
    QuatTensor<T> forward(const QuatTensor<T>& input) {
        const bool flat = input.ndim() == 1;
        QuatTensor<T> in4 = flat ? input.reshaped({1, input.dim(0)}) : input;
        if (in4.ndim() != 2 || in4.dim(1) != in_size_) {
            throw std::invalid_argument("qdense: input size " + in4.w.shape_str() +
                                        " does not match layer in=" + std::to_string(in_size_));
        }
        cached_input_ = in4;
        const std::size_t B = in4.dim(0);
        QuatTensor<T> out({B, out_size_});
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t o = 0; o < out_size_; ++o) {
                T ow = bias_.w[o], ox = bias_.x[o], oy = bias_.y[o], oz = bias_.z[o];
                for (std::size_t i = 0; i < in_size_; ++i) {
                    const std::size_t wi = o * in_size_ + i;
                    const std::size_t xi = b * in_size_ + i;
                    detail::hamilton_accumulate(weights_.w[wi], weights_.x[wi], weights_.y[wi],
                                                weights_.z[wi], in4.w[xi], in4.x[xi], in4.y[xi],
                                                in4.z[xi], ow, ox, oy, oz);
                }
                const std::size_t oi = b * out_size_ + o;
                out.w[oi] = ow;
                out.x[oi] = ox;
                out.y[oi] = oy;
                out.z[oi] = oz;
            }
        }
        cached_output_ = split_activation(out, activation_);
        return flat ? squeeze0(cached_output_) : cached_output_;
    }

    QuatTensor<T> backward(const QuatTensor<T>& grad_out) {
        const bool flat = grad_out.ndim() == 1;
        QuatTensor<T> g = flat ? grad_out.reshaped({1, grad_out.dim(0)}) : grad_out;
        g = split_activation_backward(cached_output_, g, activation_);
        const std::size_t B = cached_input_.dim(0);
        QuatTensor<T> grad_in({B, in_size_});
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t o = 0; o < out_size_; ++o) {
                const std::size_t oi = b * out_size_ + o;
                const T gw = g.w[oi], gx = g.x[oi], gy = g.y[oi], gz = g.z[oi];
                grad_bias_.w[o] += gw;
                grad_bias_.x[o] += gx;
                grad_bias_.y[o] += gy;
                grad_bias_.z[o] += gz;
                for (std::size_t i = 0; i < in_size_; ++i) {
                    const std::size_t wi = o * in_size_ + i;
                    const std::size_t xi = b * in_size_ + i;
                    detail::conj_left_accumulate(weights_.w[wi], weights_.x[wi], weights_.y[wi],
                                                 weights_.z[wi], gw, gx, gy, gz, grad_in.w[xi],
                                                 grad_in.x[xi], grad_in.y[xi], grad_in.z[xi]);
                    detail::conj_right_accumulate(gw, gx, gy, gz, cached_input_.w[xi],
                                                  cached_input_.x[xi], cached_input_.y[xi],
                                                  cached_input_.z[xi], grad_weights_.w[wi],
                                                  grad_weights_.x[wi], grad_weights_.y[wi],
                                                  grad_weights_.z[wi]);
                }
            }
        }
        return flat ? squeeze0(grad_in) : grad_in;
    }

    void zero_grad() {
        grad_weights_.zero();
        grad_bias_.zero();
    }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        append_quat_params(out, prefix + "weights", weights_, grad_weights_);
        append_quat_params(out, prefix + "bias", bias_, grad_bias_);
    }

private:
    std::size_t in_size_;
    std::size_t out_size_;
    Activation activation_;
    QuatTensor<T> weights_;
    QuatTensor<T> bias_;
    QuatTensor<T> grad_weights_;
    QuatTensor<T> grad_bias_;
    QuatTensor<T> cached_input_;
    QuatTensor<T> cached_output_;
};

/// Real 2-D convolution with the same 3x3 / stride 1 / zero padding contract
/// as QConv2d; used by the parameter-matched real baseline.
template <typename T>
class RealConv2d {
public:
    static constexpr std::size_t kKernel = 3;

    RealConv2d(std::size_t in_channels, std::size_t out_channels)
        : in_channels_(in_channels),
          out_channels_(out_channels),
          kernels_({out_channels, in_channels, kKernel, kKernel}),
          bias_({out_channels}),
          grad_kernels_({out_channels, in_channels, kKernel, kKernel}),
          grad_bias_({out_channels}) {}

    void init(std::uint64_t seed) {
        Rng rng(seed);
        const double sigma = sigma_he(static_cast<long>(in_channels_ * kKernel * kKernel));
        for (std::size_t i = 0; i < kernels_.numel(); ++i) {
            kernels_[i] = static_cast<T>(rng.normal() * sigma);
        }
    }

    Tensor<T>& kernels() { return kernels_; }
    Tensor<T>& bias() { return bias_; }

    Tensor<T> forward(const Tensor<T>& input) {
        if (input.ndim() != 4 || input.dim(1) != in_channels_) {
            throw std::invalid_argument("realconv2d: expected [B, " + std::to_string(in_channels_) +
                                        ", T, F], got " + input.shape_str());
        }
        cached_input_ = input;
        const std::size_t B = input.dim(0), C = input.dim(1), Tt = input.dim(2), F = input.dim(3);
        Tensor<T> out({B, out_channels_, Tt, F});
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t p = 0; p < out_channels_; ++p) {
                T* optr = out.data() + ((b * out_channels_ + p) * Tt) * F;
                for (std::size_t i = 0; i < Tt * F; ++i) optr[i] = bias_[p];
                for (std::size_t c = 0; c < C; ++c) {
                    const T* iptr = input.data() + ((b * C + c) * Tt) * F;
                    for (std::size_t ki = 0; ki < kKernel; ++ki) {
                        for (std::size_t kj = 0; kj < kKernel; ++kj) {
                            const T k = kernels_.at(p, c, ki, kj);
                            if (k == T(0)) continue;
                            const std::ptrdiff_t dt = static_cast<std::ptrdiff_t>(ki) - 1;
                            const std::ptrdiff_t df = static_cast<std::ptrdiff_t>(kj) - 1;
                            const std::size_t t0 = dt < 0 ? 1 : 0;
                            const std::size_t t1 = dt > 0 ? Tt - 1 : Tt;
                            const std::size_t f0 = df < 0 ? 1 : 0;
                            const std::size_t f1 = df > 0 ? F - 1 : F;
                            for (std::size_t t = t0; t < t1; ++t) {
                                const std::size_t irow_off =
                                    static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + dt) * F;
                                T* orow = optr + t * F;
                                for (std::size_t f = f0; f < f1; ++f) {
                                    orow[f] += k * iptr[irow_off + static_cast<std::size_t>(
                                                                       static_cast<std::ptrdiff_t>(f) +
                                                                       df)];
                                }
                            }
                        }
                    }
                }
            }
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        const std::size_t B = cached_input_.dim(0), C = cached_input_.dim(1),
                          Tt = cached_input_.dim(2), F = cached_input_.dim(3);
        Tensor<T> grad_in({B, C, Tt, F});
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t p = 0; p < out_channels_; ++p) {
                const T* gptr = grad_out.data() + ((b * out_channels_ + p) * Tt) * F;
                T gb = T(0);
                for (std::size_t i = 0; i < Tt * F; ++i) gb += gptr[i];
                grad_bias_[p] += gb;
                for (std::size_t c = 0; c < C; ++c) {
                    const T* iptr = cached_input_.data() + ((b * C + c) * Tt) * F;
                    T* dptr = grad_in.data() + ((b * C + c) * Tt) * F;
                    for (std::size_t ki = 0; ki < kKernel; ++ki) {
                        for (std::size_t kj = 0; kj < kKernel; ++kj) {
                            const T k = kernels_.at(p, c, ki, kj);
                            T ak = T(0);
                            const std::ptrdiff_t dt = static_cast<std::ptrdiff_t>(ki) - 1;
                            const std::ptrdiff_t df = static_cast<std::ptrdiff_t>(kj) - 1;
                            const std::size_t t0 = dt < 0 ? 1 : 0;
                            const std::size_t t1 = dt > 0 ? Tt - 1 : Tt;
                            const std::size_t f0 = df < 0 ? 1 : 0;
                            const std::size_t f1 = df > 0 ? F - 1 : F;
                            for (std::size_t t = t0; t < t1; ++t) {
                                const std::size_t irow_off =
                                    static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + dt) * F;
                                const T* grow = gptr + t * F;
                                for (std::size_t f = f0; f < f1; ++f) {
                                    const std::size_t ii =
                                        irow_off + static_cast<std::size_t>(
                                                       static_cast<std::ptrdiff_t>(f) + df);
                                    dptr[ii] += k * grow[f];
                                    ak += grow[f] * iptr[ii];
                                }
                            }
                            grad_kernels_.at(p, c, ki, kj) += ak;
                        }
                    }
                }
            }
        }
        return grad_in;
    }

    void zero_grad() {
        grad_kernels_.zero();
        grad_bias_.zero();
    }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        out.push_back({prefix + "kernels", &kernels_, &grad_kernels_});
        out.push_back({prefix + "bias", &bias_, &grad_bias_});
    }

private:
    std::size_t in_channels_;
    std::size_t out_channels_;
    Tensor<T> kernels_;
    Tensor<T> bias_;
    Tensor<T> grad_kernels_;
    Tensor<T> grad_bias_;
    Tensor<T> cached_input_;
};

/// Per-channel batch normalization over [B, C, ...spatial].
template <typename T>
class BatchNormReal {
public:
    explicit BatchNormReal(std::size_t channels, double momentum = 0.1, double eps = 1e-8)
        : channels_(channels),
          momentum_(momentum),
          eps_(eps),
          gamma_(Tensor<T>::full({channels}, T(1))),
          beta_({channels}),
          run_mean_({channels}),
          run_var_(Tensor<T>::full({channels}, T(1))),
          grad_gamma_({channels}),
          grad_beta_({channels}) {}

    Tensor<T>& gamma() { return gamma_; }
    Tensor<T>& beta() { return beta_; }
    Tensor<T>& running_mean() { return run_mean_; }
    Tensor<T>& running_var() { return run_var_; }

    Tensor<T> forward(const Tensor<T>& input, bool train) {
        if (input.ndim() < 2 || input.dim(1) != channels_) {
            throw std::invalid_argument("batchnorm: expected [B, " + std::to_string(channels_) +
                                        ", ...], got " + input.shape_str());
        }
        const std::size_t B = input.dim(0);
        if (train && B < 2) {
            throw std::invalid_argument("batchnorm: train mode needs batch size >= 2, got " +
                                        std::to_string(B));
        }
        train_ = train;
        cached_input_ = input;
        const std::size_t S = input.numel() / (B * channels_);
        const std::size_t m = B * S;
        mean_.assign(channels_, T(0));
        inv_std_.assign(channels_, T(0));
        Tensor<T> out(input.shape());

        for (std::size_t c = 0; c < channels_; ++c) {
            T mu, inv;
            if (train) {
                T sum = T(0);
                for (std::size_t b = 0; b < B; ++b) {
                    const T* ptr = input.data() + (b * channels_ + c) * S;
                    for (std::size_t s = 0; s < S; ++s) sum += ptr[s];
                }
                mu = sum / static_cast<T>(m);
                T sq = T(0);
                for (std::size_t b = 0; b < B; ++b) {
                    const T* ptr = input.data() + (b * channels_ + c) * S;
                    for (std::size_t s = 0; s < S; ++s) {
                        const T d = ptr[s] - mu;
                        sq += d * d;
                    }
                }
                const T var = sq / static_cast<T>(m);
                inv = T(1) / std::sqrt(var + static_cast<T>(eps_));
                run_mean_[c] = static_cast<T>((1.0 - momentum_)) * run_mean_[c] +
                               static_cast<T>(momentum_) * mu;
                run_var_[c] = static_cast<T>((1.0 - momentum_)) * run_var_[c] +
                              static_cast<T>(momentum_) * var;
            } else {
                mu = run_mean_[c];
                inv = T(1) / std::sqrt(run_var_[c] + static_cast<T>(eps_));
            }
            mean_[c] = mu;
            inv_std_[c] = inv;
            const T g = gamma_[c], bta = beta_[c];
            for (std::size_t b = 0; b < B; ++b) {
                const T* ptr = input.data() + (b * channels_ + c) * S;
                T* optr = out.data() + (b * channels_ + c) * S;
                for (std::size_t s = 0; s < S; ++s) optr[s] = g * (ptr[s] - mu) * inv + bta;
            }
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        const std::size_t B = cached_input_.dim(0);
        const std::size_t S = cached_input_.numel() / (B * channels_);
        const std::size_t m = B * S;
        Tensor<T> grad_in(cached_input_.shape());

        for (std::size_t c = 0; c < channels_; ++c) {
            const T mu = mean_[c], inv = inv_std_[c], g = gamma_[c];
            T sum_dy = T(0), sum_dy_xhat = T(0), sum_centered = T(0);
            for (std::size_t b = 0; b < B; ++b) {
                const T* xptr = cached_input_.data() + (b * channels_ + c) * S;
                const T* gptr = grad_out.data() + (b * channels_ + c) * S;
                for (std::size_t s = 0; s < S; ++s) {
                    const T xc = xptr[s] - mu;
                    sum_dy += gptr[s];
                    sum_dy_xhat += gptr[s] * xc * inv;
                    sum_centered += xc;
                }
            }
            grad_beta_[c] += sum_dy;
            grad_gamma_[c] += sum_dy_xhat;

            if (!train_) {
                for (std::size_t b = 0; b < B; ++b) {
                    const T* gptr = grad_out.data() + (b * channels_ + c) * S;
                    T* dptr = grad_in.data() + (b * channels_ + c) * S;
                    for (std::size_t s = 0; s < S; ++s) dptr[s] = gptr[s] * g * inv;
                }
                continue;
            }

            // d variance and d mean of the batch statistics path.
            T dvar = T(0);
            for (std::size_t b = 0; b < B; ++b) {
                const T* xptr = cached_input_.data() + (b * channels_ + c) * S;
                const T* gptr = grad_out.data() + (b * channels_ + c) * S;
                for (std::size_t s = 0; s < S; ++s) {
                    dvar += gptr[s] * g * (xptr[s] - mu);
                }
            }
            dvar *= static_cast<T>(-0.5) * inv * inv * inv;
            const T dmu = -inv * g * sum_dy +
                          dvar * static_cast<T>(-2.0) / static_cast<T>(m) * sum_centered;
            for (std::size_t b = 0; b < B; ++b) {
                const T* xptr = cached_input_.data() + (b * channels_ + c) * S;
                const T* gptr = grad_out.data() + (b * channels_ + c) * S;
                T* dptr = grad_in.data() + (b * channels_ + c) * S;
                for (std::size_t s = 0; s < S; ++s) {
                    dptr[s] = gptr[s] * g * inv +
                              dvar * static_cast<T>(2.0) * (xptr[s] - mu) / static_cast<T>(m) +
                              dmu / static_cast<T>(m);
                }
            }
        }
        return grad_in;
    }

    void zero_grad() {
        grad_gamma_.zero();
        grad_beta_.zero();
    }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        out.push_back({prefix + "gamma", &gamma_, &grad_gamma_});
        out.push_back({prefix + "beta", &beta_, &grad_beta_});
    }

    void collect_state(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        out.push_back({prefix + "running_mean", &run_mean_, nullptr});
        out.push_back({prefix + "running_var", &run_var_, nullptr});
    }

private:
    std::size_t channels_;
    double momentum_;
    double eps_;
    Tensor<T> gamma_, beta_, run_mean_, run_var_;
    Tensor<T> grad_gamma_, grad_beta_;
    Tensor<T> cached_input_;
    std::vector<T> mean_, inv_std_;
    bool train_ = false;
};

/// Split batch normalization: an independent per-channel real batch norm on
/// each of the four quaternion component planes.
template <typename T>
class SplitBatchNorm {
public:
    explicit SplitBatchNorm(std::size_t channels, double momentum = 0.1, double eps = 1e-8)
        : norms_{BatchNormReal<T>(channels, momentum, eps), BatchNormReal<T>(channels, momentum, eps),
                 BatchNormReal<T>(channels, momentum, eps),
                 BatchNormReal<T>(channels, momentum, eps)} {}

    BatchNormReal<T>& plane_norm(std::size_t i) { return norms_[i]; }

    QuatTensor<T> forward(const QuatTensor<T>& input, bool train) {
        QuatTensor<T> out;
        out.w = norms_[0].forward(input.w, train);
        out.x = norms_[1].forward(input.x, train);
        out.y = norms_[2].forward(input.y, train);
        out.z = norms_[3].forward(input.z, train);
        return out;
    }

    QuatTensor<T> backward(const QuatTensor<T>& grad_out) {
        QuatTensor<T> grad_in;
        grad_in.w = norms_[0].backward(grad_out.w);
        grad_in.x = norms_[1].backward(grad_out.x);
        grad_in.y = norms_[2].backward(grad_out.y);
        grad_in.z = norms_[3].backward(grad_out.z);
        return grad_in;
    }

    void zero_grad() {
        for (auto& n : norms_) n.zero_grad();
    }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        static const char* suffix[4] = {"w.", "x.", "y.", "z."};
        for (std::size_t p = 0; p < 4; ++p) norms_[p].collect_params(out, prefix + suffix[p]);
    }

    void collect_state(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        static const char* suffix[4] = {"w.", "x.", "y.", "z."};
        for (std::size_t p = 0; p < 4; ++p) norms_[p].collect_state(out, prefix + suffix[p]);
    }

private:
    std::array<BatchNormReal<T>, 4> norms_;
};

/// Max pooling over non-overlapping windows along the trailing (frequency)
/// axis only; sequence length is preserved. Argmax indices are retained for
/// the backward scatter.
template <typename T>
class MaxPoolFreqReal {
public:
    explicit MaxPoolFreqReal(std::size_t factor) : factor_(factor) {
        if (factor_ < 1) throw std::invalid_argument("max_pool_freq: factor must be >= 1");
    }

    Tensor<T> forward(const Tensor<T>& input) {
        const std::size_t F = input.dim(input.ndim() - 1);
        if (F % factor_ != 0) {
            throw std::invalid_argument("max_pool_freq: frequency extent " + std::to_string(F) +
                                        " not divisible by pool factor " + std::to_string(factor_));
        }
        in_shape_ = input.shape();
        const std::size_t rows = input.numel() / F;
        const std::size_t Fo = F / factor_;
        std::vector<std::size_t> out_shape = input.shape();
        out_shape.back() = Fo;
        Tensor<T> out(out_shape);
        argmax_ = Tensor<std::uint32_t>(out_shape);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* iptr = input.data() + r * F;
            T* optr = out.data() + r * Fo;
            std::uint32_t* aptr = argmax_.data() + r * Fo;
            for (std::size_t fo = 0; fo < Fo; ++fo) {
                std::size_t best = fo * factor_;
                T best_v = iptr[best];
                for (std::size_t k = 1; k < factor_; ++k) {
                    const std::size_t idx = fo * factor_ + k;
                    if (iptr[idx] > best_v) {
                        best_v = iptr[idx];
                        best = idx;
                    }
                }
                optr[fo] = best_v;
                aptr[fo] = static_cast<std::uint32_t>(best);
            }
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        Tensor<T> grad_in(in_shape_);
        const std::size_t F = in_shape_.back();
        const std::size_t Fo = F / factor_;
        const std::size_t rows = grad_in.numel() / F;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* gptr = grad_out.data() + r * Fo;
            const std::uint32_t* aptr = argmax_.data() + r * Fo;
            T* dptr = grad_in.data() + r * F;
            for (std::size_t fo = 0; fo < Fo; ++fo) dptr[aptr[fo]] += gptr[fo];
        }
        return grad_in;
    }

    const Tensor<std::uint32_t>& argmax() const { return argmax_; }

private:
    std::size_t factor_;
    std::vector<std::size_t> in_shape_;
    Tensor<std::uint32_t> argmax_;
};

/// Quaternion variant: per-plane max pooling along frequency.
template <typename T>
class MaxPoolFreq {
public:
    explicit MaxPoolFreq(std::size_t factor)
        : pools_{MaxPoolFreqReal<T>(factor), MaxPoolFreqReal<T>(factor), MaxPoolFreqReal<T>(factor),
                 MaxPoolFreqReal<T>(factor)} {}

    QuatTensor<T> forward(const QuatTensor<T>& input) {
        QuatTensor<T> out;
        out.w = pools_[0].forward(input.w);
        out.x = pools_[1].forward(input.x);
        out.y = pools_[2].forward(input.y);
        out.z = pools_[3].forward(input.z);
        return out;
    }

    QuatTensor<T> backward(const QuatTensor<T>& grad_out) {
        QuatTensor<T> grad_in;
        grad_in.w = pools_[0].backward(grad_out.w);
        grad_in.x = pools_[1].backward(grad_out.x);
        grad_in.y = pools_[2].backward(grad_out.y);
        grad_in.z = pools_[3].backward(grad_out.z);
        return grad_in;
    }

    const MaxPoolFreqReal<T>& plane_pool(std::size_t i) const { return pools_[i]; }

private:
    std::array<MaxPoolFreqReal<T>, 4> pools_;
};

/// Real dense layer applied to the trailing dimension of any input shape.
template <typename T>
class RealDense {
public:
    RealDense(std::size_t in_size, std::size_t out_size, Activation activation)
        : in_size_(in_size),
          out_size_(out_size),
          activation_(activation),
          weights_({out_size, in_size}),
          bias_({out_size}),
          grad_weights_({out_size, in_size}),
          grad_bias_({out_size}) {}

    void init(std::uint64_t seed) { init_real_glorot(weights_, in_size_, out_size_, seed); }

    Tensor<T>& weights() { return weights_; }
    Tensor<T>& bias() { return bias_; }

    Tensor<T> forward(const Tensor<T>& input) {
        if (input.ndim() < 1 || input.dim(input.ndim() - 1) != in_size_) {
            throw std::invalid_argument("dense: trailing dim of " + input.shape_str() +
                                        " does not match in=" + std::to_string(in_size_));
        }
        cached_input_ = input;
        const std::size_t rows = input.numel() / in_size_;
        std::vector<std::size_t> out_shape = input.shape();
        out_shape.back() = out_size_;
        Tensor<T> out(out_shape);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* xptr = input.data() + r * in_size_;
            T* optr = out.data() + r * out_size_;
            for (std::size_t o = 0; o < out_size_; ++o) {
                T acc = bias_[o];
                const T* wptr = weights_.data() + o * in_size_;
                for (std::size_t i = 0; i < in_size_; ++i) acc += wptr[i] * xptr[i];
                optr[o] = apply_activation(acc, activation_);
            }
        }
        cached_output_ = out;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        const std::size_t rows = cached_input_.numel() / in_size_;
        Tensor<T> grad_in(cached_input_.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const T* xptr = cached_input_.data() + r * in_size_;
            const T* yptr = cached_output_.data() + r * out_size_;
            const T* gptr = grad_out.data() + r * out_size_;
            T* dptr = grad_in.data() + r * in_size_;
            for (std::size_t o = 0; o < out_size_; ++o) {
                const T ga = gptr[o] * activation_output_derivative(yptr[o], activation_);
                grad_bias_[o] += ga;
                T* gw = grad_weights_.data() + o * in_size_;
                const T* wptr = weights_.data() + o * in_size_;
                for (std::size_t i = 0; i < in_size_; ++i) {
                    gw[i] += ga * xptr[i];
                    dptr[i] += ga * wptr[i];
                }
            }
        }
        return grad_in;
    }

    void zero_grad() {
        grad_weights_.zero();
        grad_bias_.zero();
    }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        out.push_back({prefix + "weights", &weights_, &grad_weights_});
        out.push_back({prefix + "bias", &bias_, &grad_bias_});
    }

private:
    std::size_t in_size_;
    std::size_t out_size_;
    Activation activation_;
    Tensor<T> weights_;
    Tensor<T> bias_;
    Tensor<T> grad_weights_;
    Tensor<T> grad_bias_;
    Tensor<T> cached_input_;
    Tensor<T> cached_output_;
};

namespace detail {

/// One GRU direction. Gate equations (h_0 = 0):
///   z_t = sigmoid(Wz x_t + Uz h_{t-1} + bz)
///   r_t = sigmoid(Wr x_t + Ur h_{t-1} + br)
///   n_t = tanh(Wn x_t + Un (r_t . h_{t-1}) + bn)
///   h_t = (1 - z_t) . h_{t-1} + z_t . n_t
template <typename T>
struct GruDirection {
    std::size_t input_size = 0;
    std::size_t hidden_size = 0;
    bool reverse = false;

    Tensor<T> wz, wr, wn;  // [Q, D]
    Tensor<T> uz, ur, un;  // [Q, Q]
    Tensor<T> bz, br, bn;  // [Q]
    Tensor<T> gwz, gwr, gwn, guz, gur, gun, gbz, gbr, gbn;

    // caches indexed by traversal step s = 0..T-1
    Tensor<T> cz, cr, cn, ch, crh;  // [B, T, Q]
    Tensor<T> cached_input_;        // [B, T, D]

    GruDirection(std::size_t D, std::size_t Q, bool rev)
        : input_size(D),
          hidden_size(Q),
          reverse(rev),
          wz({Q, D}),
          wr({Q, D}),
          wn({Q, D}),
          uz({Q, Q}),
          ur({Q, Q}),
          un({Q, Q}),
          bz({Q}),
          br({Q}),
          bn({Q}),
          gwz({Q, D}),
          gwr({Q, D}),
          gwn({Q, D}),
          guz({Q, Q}),
          gur({Q, Q}),
          gun({Q, Q}),
          gbz({Q}),
          gbr({Q}),
          gbn({Q}) {}

    void init(std::uint64_t seed) {
        init_real_glorot(wz, input_size, hidden_size, Rng::derive(seed, 1));
        init_real_glorot(wr, input_size, hidden_size, Rng::derive(seed, 2));
        init_real_glorot(wn, input_size, hidden_size, Rng::derive(seed, 3));
        init_real_glorot(uz, hidden_size, hidden_size, Rng::derive(seed, 4));
        init_real_glorot(ur, hidden_size, hidden_size, Rng::derive(seed, 5));
        init_real_glorot(un, hidden_size, hidden_size, Rng::derive(seed, 6));
    }

    std::size_t step_time(std::size_t s, std::size_t T_len) const {
        return reverse ? T_len - 1 - s : s;
    }

    /// seq [B, T, D]; writes hidden states for original time index t into
    /// out[:, t, col0:col0+Q] of a [B, T, out_cols] tensor.
    void forward(const Tensor<T>& seq, Tensor<T>& out, std::size_t col0, std::size_t out_cols) {
        const std::size_t B = seq.dim(0), T_len = seq.dim(1), D = input_size, Q = hidden_size;
        cached_input_ = seq;
        cz = Tensor<T>({B, T_len, Q});
        cr = Tensor<T>({B, T_len, Q});
        cn = Tensor<T>({B, T_len, Q});
        ch = Tensor<T>({B, T_len, Q});
        crh = Tensor<T>({B, T_len, Q});
        std::vector<T> h(Q), az(Q), ar(Q), an(Q);
        for (std::size_t b = 0; b < B; ++b) {
            std::fill(h.begin(), h.end(), T(0));
            for (std::size_t s = 0; s < T_len; ++s) {
                const std::size_t t = step_time(s, T_len);
                const T* x = seq.data() + (b * T_len + t) * D;
                for (std::size_t q = 0; q < Q; ++q) {
                    T sz = bz[q], sr = br[q];
                    const T* wzr = wz.data() + q * D;
                    const T* wrr = wr.data() + q * D;
                    for (std::size_t d = 0; d < D; ++d) {
                        sz += wzr[d] * x[d];
                        sr += wrr[d] * x[d];
                    }
                    const T* uzr = uz.data() + q * Q;
                    const T* urr = ur.data() + q * Q;
                    for (std::size_t k = 0; k < Q; ++k) {
                        sz += uzr[k] * h[k];
                        sr += urr[k] * h[k];
                    }
                    az[q] = T(1) / (T(1) + std::exp(-sz));
                    ar[q] = T(1) / (T(1) + std::exp(-sr));
                }
                T* rh = crh.data() + (b * T_len + s) * Q;
                for (std::size_t q = 0; q < Q; ++q) rh[q] = ar[q] * h[q];
                for (std::size_t q = 0; q < Q; ++q) {
                    T sn = bn[q];
                    const T* wnr = wn.data() + q * D;
                    for (std::size_t d = 0; d < D; ++d) sn += wnr[d] * x[d];
                    const T* unr = un.data() + q * Q;
                    for (std::size_t k = 0; k < Q; ++k) sn += unr[k] * rh[k];
                    an[q] = std::tanh(sn);
                }
                T* zs = cz.data() + (b * T_len + s) * Q;
                T* rs = cr.data() + (b * T_len + s) * Q;
                T* ns = cn.data() + (b * T_len + s) * Q;
                T* hs = ch.data() + (b * T_len + s) * Q;
                T* orow = out.data() + (b * T_len + t) * out_cols + col0;
                for (std::size_t q = 0; q < Q; ++q) {
                    zs[q] = az[q];
                    rs[q] = ar[q];
                    ns[q] = an[q];
                    const T hq = (T(1) - az[q]) * h[q] + az[q] * an[q];
                    hs[q] = hq;
                    h[q] = hq;
                    orow[q] = hq;
                }
            }
        }
    }

    /// grad_out [B, T, out_cols] slice at col0; accumulates into grad_in [B, T, D].
    void backward(const Tensor<T>& grad_out, std::size_t col0, std::size_t out_cols,
                  Tensor<T>& grad_in) {
        const std::size_t B = cached_input_.dim(0), T_len = cached_input_.dim(1), D = input_size,
                          Q = hidden_size;
        std::vector<T> dh(Q), daz(Q), dar(Q), dan(Q), drh(Q);
        for (std::size_t b = 0; b < B; ++b) {
            std::fill(dh.begin(), dh.end(), T(0));
            for (std::size_t s = T_len; s-- > 0;) {
                const std::size_t t = step_time(s, T_len);
                const T* x = cached_input_.data() + (b * T_len + t) * D;
                const T* zs = cz.data() + (b * T_len + s) * Q;
                const T* rs = cr.data() + (b * T_len + s) * Q;
                const T* ns = cn.data() + (b * T_len + s) * Q;
                const T* rh = crh.data() + (b * T_len + s) * Q;
                const T* h_prev = s == 0 ? nullptr : ch.data() + (b * T_len + (s - 1)) * Q;
                const T* grow = grad_out.data() + (b * T_len + t) * out_cols + col0;

                for (std::size_t q = 0; q < Q; ++q) {
                    const T g = dh[q] + grow[q];
                    const T hp = h_prev ? h_prev[q] : T(0);
                    const T z = zs[q], n = ns[q];
                    dan[q] = g * z * (T(1) - n * n);
                    daz[q] = g * (n - hp) * z * (T(1) - z);
                    dh[q] = g * (T(1) - z);  // becomes dh_prev accumulator
                }
                // drh = Un^T dan ; dr = drh . h_prev ; dh_prev += drh . r
                for (std::size_t k = 0; k < Q; ++k) {
                    T acc = T(0);
                    for (std::size_t q = 0; q < Q; ++q) acc += un.at(q, k) * dan[q];
                    drh[k] = acc;
                }
                for (std::size_t q = 0; q < Q; ++q) {
                    const T hp = h_prev ? h_prev[q] : T(0);
                    const T r = rs[q];
                    dar[q] = drh[q] * hp * r * (T(1) - r);
                    dh[q] += drh[q] * r;
                }
                // parameter grads + propagation through the three gates
                T* dx = grad_in.data() + (b * T_len + t) * D;
                for (std::size_t q = 0; q < Q; ++q) {
                    gbz[q] += daz[q];
                    gbr[q] += dar[q];
                    gbn[q] += dan[q];
                    T* gwzr = gwz.data() + q * D;
                    T* gwrr = gwr.data() + q * D;
                    T* gwnr = gwn.data() + q * D;
                    const T* wzr = wz.data() + q * D;
                    const T* wrr = wr.data() + q * D;
                    const T* wnr = wn.data() + q * D;
                    for (std::size_t d = 0; d < D; ++d) {
                        gwzr[d] += daz[q] * x[d];
                        gwrr[d] += dar[q] * x[d];
                        gwnr[d] += dan[q] * x[d];
                        dx[d] += wzr[d] * daz[q] + wrr[d] * dar[q] + wnr[d] * dan[q];
                    }
                    T* guzr = guz.data() + q * Q;
                    T* gurr = gur.data() + q * Q;
                    T* gunr = gun.data() + q * Q;
                    for (std::size_t k = 0; k < Q; ++k) {
                        const T hpk = h_prev ? h_prev[k] : T(0);
                        guzr[k] += daz[q] * hpk;
                        gurr[k] += dar[q] * hpk;
                        gunr[k] += dan[q] * rh[k];
                    }
                }
                if (h_prev) {
                    for (std::size_t k = 0; k < Q; ++k) {
                        T acc = T(0);
                        for (std::size_t q = 0; q < Q; ++q) {
                            acc += uz.at(q, k) * daz[q] + ur.at(q, k) * dar[q];
                        }
                        dh[k] += acc;
                    }
                }
            }
        }
    }

    void zero_grad() {
        for (Tensor<T>* g : {&gwz, &gwr, &gwn, &guz, &gur, &gun, &gbz, &gbr, &gbn}) g->zero();
    }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        out.push_back({prefix + "wz", &wz, &gwz});
        out.push_back({prefix + "wr", &wr, &gwr});
        out.push_back({prefix + "wn", &wn, &gwn});
        out.push_back({prefix + "uz", &uz, &guz});
        out.push_back({prefix + "ur", &ur, &gur});
        out.push_back({prefix + "un", &un, &gun});
        out.push_back({prefix + "bz", &bz, &gbz});
        out.push_back({prefix + "br", &br, &gbr});
        out.push_back({prefix + "bn", &bn, &gbn});
    }
};

}  // namespace detail

/// Bidirectional GRU over a real feature sequence. Input [B, T, D] (or
/// [T, D]) -> per-frame concatenation of both directions, [B, T, 2Q].
template <typename T>
class BiGru {
public:
    BiGru(std::size_t input_size, std::size_t hidden_size)
        : fwd_(input_size, hidden_size, false), bwd_(input_size, hidden_size, true) {}

    void init(std::uint64_t seed) {
        fwd_.init(Rng::derive(seed, 101));
        bwd_.init(Rng::derive(seed, 202));
    }

    std::size_t hidden_size() const { return fwd_.hidden_size; }

    detail::GruDirection<T>& forward_dir() { return fwd_; }
    detail::GruDirection<T>& backward_dir() { return bwd_; }

    Tensor<T> forward(const Tensor<T>& seq) {
        const bool flat = seq.ndim() == 2;
        Tensor<T> s3 = flat ? seq.reshaped({1, seq.dim(0), seq.dim(1)}) : seq;
        if (s3.ndim() != 3 || s3.dim(2) != fwd_.input_size) {
            throw std::invalid_argument("bigru: expected [B, T, " +
                                        std::to_string(fwd_.input_size) + "], got " +
                                        seq.shape_str());
        }
        if (s3.dim(1) < 1) throw std::invalid_argument("bigru: sequence length must be >= 1");
        const std::size_t Q = fwd_.hidden_size;
        Tensor<T> out({s3.dim(0), s3.dim(1), 2 * Q});
        fwd_.forward(s3, out, 0, 2 * Q);
        bwd_.forward(s3, out, Q, 2 * Q);
        flat_ = flat;
        return flat ? out.reshaped({out.dim(1), out.dim(2)}) : out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        Tensor<T> g3 = flat_ ? grad_out.reshaped({1, grad_out.dim(0), grad_out.dim(1)}) : grad_out;
        const std::size_t Q = fwd_.hidden_size;
        Tensor<T> grad_in({g3.dim(0), g3.dim(1), fwd_.input_size});
        fwd_.backward(g3, 0, 2 * Q, grad_in);
        bwd_.backward(g3, Q, 2 * Q, grad_in);
        return flat_ ? grad_in.reshaped({grad_in.dim(1), grad_in.dim(2)}) : grad_in;
    }

    void zero_grad() {
        fwd_.zero_grad();
        bwd_.zero_grad();
    }

    void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        fwd_.collect_params(out, prefix + "fwd.");
        bwd_.collect_params(out, prefix + "bwd.");
    }

private:
    detail::GruDirection<T> fwd_;
    detail::GruDirection<T> bwd_;
    bool flat_ = false;
};

/// Spec-shaped conveniences operating on a single [C, T, F] sample.
template <typename T>
QuatTensor<T> qconv2d_forward(QConv2d<T>& layer, const QuatTensor<T>& input) {
    if (input.ndim() == 3) return squeeze0(layer.forward(unsqueeze0(input)));
    return layer.forward(input);
}

template <typename T>
std::pair<QuatTensor<T>, Tensor<std::uint32_t>> max_pool_freq(const QuatTensor<T>& input,
                                                              std::size_t factor) {
    MaxPoolFreq<T> pool(factor);
    QuatTensor<T> out = pool.forward(input);
    return {out, pool.plane_pool(0).argmax()};
}

}  // namespace qseld
