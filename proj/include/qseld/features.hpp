#pragma once

#include <cstddef>
#include <vector>

#include "qseld/tensor.hpp"

namespace qseld {

/// Multichannel audio clip (B-format order W, X, Y, Z).
struct AudioClip {
    std::vector<std::vector<double>> channels;
    double sample_rate = 0.0;

    std::size_t num_channels() const { return channels.size(); }
    std::size_t num_samples() const { return channels.empty() ? 0 : channels[0].size(); }
};

/// Quaternion spectrogram features: T frames x M/2 bins x 8 planes, planes
/// ordered (|W|, |X|, |Y|, |Z|, phase W, phase X, phase Y, phase Z).
struct FeatureClip {
    Tensor<double> planes;  // [T, M/2, 8]
    double sample_rate = 0.0;
    std::size_t window_length = 0;

    std::size_t frames() const { return planes.dim(0); }
    std::size_t bins() const { return planes.dim(1); }
};

/// Number of full analysis frames a clip of `samples` samples yields with
/// window M and hop M/2.
std::size_t stft_frame_count(std::size_t samples, std::size_t window_length);

/// Hamming-windowed STFT magnitude/phase features.
///
/// Window: symmetric Hamming 0.54 - 0.46 cos(2 pi n / (M - 1)). Hop M/2
/// (50% overlap). Bins 1..M/2 retained (the zeroth bin is dropped). The DFT
/// is unnormalized: X_k = sum_n w[n] x[n] exp(-i 2 pi k n / M). The frame
/// sequence is truncated or zero-padded to exactly `frames`. Silent bins get
/// magnitude 0 and phase 0 by convention; phases lie in (-pi, pi].
FeatureClip stft_features(const AudioClip& audio, std::size_t window_length, std::size_t frames);

}  // namespace qseld
