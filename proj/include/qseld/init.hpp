#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "qseld/quaternion.hpp"
#include "qseld/rng.hpp"

namespace qseld {

/// He-criterion standard deviation for a layer fed by n_i input neurons.
inline double sigma_he(long n_i) {
    if (n_i < 1) throw std::invalid_argument("sigma_he: n_i must be >= 1");
    return 1.0 / std::sqrt(2.0 * static_cast<double>(n_i));
}

/// One quaternion weight draw together with its latent variables, for tests.
struct QuaternionDraw {
    Quaternion value;
    double ux = 0.0, uy = 0.0, uz = 0.0;  // unit purely-imaginary axis
    double theta = 0.0;                   // angle in [-pi, pi)
    double phi = 0.0;                     // magnitude scale in [-sigma, sigma)
};

/// Polar-form quaternion weight sample.
///
/// Draws a unit purely-imaginary axis u uniformly on the 2-sphere, an angle
/// theta uniform in [-pi, pi) and a magnitude scale phi uniform in
/// [-sigma, sigma), then assembles
///
///   w = (phi cos(theta), phi u_x sin(theta), phi u_y sin(theta), phi u_z sin(theta)).
///
/// The resulting second moment is E[|w|^2] = sigma^2 / 3 (the moment of the
/// uniform phi range, not of a Chi-distributed magnitude).
inline QuaternionDraw sample_quaternion_weight(Rng& rng, double sigma) {
    constexpr double kPi = 3.14159265358979323846;
    QuaternionDraw d;
    double nrm = 0.0;
    do {
        d.ux = rng.normal();
        d.uy = rng.normal();
        d.uz = rng.normal();
        nrm = std::sqrt(d.ux * d.ux + d.uy * d.uy + d.uz * d.uz);
    } while (nrm < 1e-12);
    d.ux /= nrm;
    d.uy /= nrm;
    d.uz /= nrm;
    d.theta = rng.uniform(-kPi, kPi);
    d.phi = rng.uniform(-sigma, sigma);
    const double c = std::cos(d.theta);
    const double s = std::sin(d.theta);
    d.value = {d.phi * c, d.phi * d.ux * s, d.phi * d.uy * s, d.phi * d.uz * s};
    return d;
}

/// Layer initialization spec: n_i input neurons (for conv layers the input
/// quaternion channels times the kernel area) and a dedicated seed stream.
struct InitSpec {
    long n_i = 1;
    std::uint64_t seed = 0;
};

inline Quaternion init_quaternion_weight(const InitSpec& spec, Rng& rng) {
    return sample_quaternion_weight(rng, sigma_he(spec.n_i)).value;
}

/// Fill all elements of a quaternion tensor from one seeded stream.
template <typename T>
void init_quat_tensor(QuatTensor<T>& tensor, const InitSpec& spec) {
    Rng rng(spec.seed);
    const double sigma = sigma_he(spec.n_i);
    for (std::size_t i = 0; i < tensor.numel(); ++i) {
        tensor.set(i, sample_quaternion_weight(rng, sigma).value);
    }
}

/// Glorot-uniform fill for the real-valued layers (recurrent and dense tail).
template <typename T>
void init_real_glorot(Tensor<T>& tensor, std::size_t fan_in, std::size_t fan_out,
                      std::uint64_t seed) {
    Rng rng(seed);
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < tensor.numel(); ++i) {
        tensor[i] = static_cast<T>(rng.uniform(-a, a));
    }
}

}  // namespace qseld
