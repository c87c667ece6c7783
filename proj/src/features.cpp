#include "qseld/features.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qseld {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

std::size_t stft_frame_count(std::size_t samples, std::size_t window_length) {
    const std::size_t hop = window_length / 2;
    if (samples < window_length) return 0;
    return 1 + (samples - window_length) / hop;
}

FeatureClip stft_features(const AudioClip& audio, std::size_t window_length, std::size_t frames) {
    const std::size_t M = window_length;
    if (M < 16 || M % 2 != 0) {
        throw std::invalid_argument("stft_features: window length must be even and >= 16, got " +
                                    std::to_string(M));
    }
    if (audio.channels.empty() || audio.num_samples() == 0) {
        throw std::invalid_argument("stft_features: empty audio");
    }
    if (audio.num_channels() != 4) {
        throw std::invalid_argument("stft_features: expected 4 channels (W, X, Y, Z), got " +
                                    std::to_string(audio.num_channels()));
    }
    for (const auto& ch : audio.channels) {
        if (ch.size() != audio.num_samples()) {
            throw std::invalid_argument("stft_features: channel length mismatch");
        }
    }
    const std::size_t full_frames = stft_frame_count(audio.num_samples(), M);
    if (full_frames == 0) {
        throw std::invalid_argument("stft_features: audio shorter than one window (" +
                                    std::to_string(audio.num_samples()) + " < " +
                                    std::to_string(M) + " samples)");
    }
    if (frames == 0) throw std::invalid_argument("stft_features: frame count must be >= 1");

    const std::size_t hop = M / 2;
    const std::size_t bins = M / 2;

    std::vector<double> window(M);
    for (std::size_t n = 0; n < M; ++n) {
        window[n] = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(n) /
                                           static_cast<double>(M - 1));
    }
    // Twiddle tables: cos/sin(2 pi k n / M) for k = 1..M/2, n = 0..M-1.
    std::vector<double> cos_tab(M), sin_tab(M);
    for (std::size_t n = 0; n < M; ++n) {
        const double a = 2.0 * kPi * static_cast<double>(n) / static_cast<double>(M);
        cos_tab[n] = std::cos(a);
        sin_tab[n] = std::sin(a);
    }

    FeatureClip clip;
    clip.planes = Tensor<double>({frames, bins, 8});
    clip.sample_rate = audio.sample_rate;
    clip.window_length = M;

    std::vector<double> windowed(M);
    const std::size_t used_frames = std::min(frames, full_frames);
    for (std::size_t ch = 0; ch < 4; ++ch) {
        const std::vector<double>& samples = audio.channels[ch];
        for (std::size_t t = 0; t < used_frames; ++t) {
            const std::size_t start = t * hop;
            for (std::size_t n = 0; n < M; ++n) windowed[n] = window[n] * samples[start + n];
            for (std::size_t k = 1; k <= bins; ++k) {
                double re = 0.0, im = 0.0;
                for (std::size_t n = 0; n < M; ++n) {
                    const std::size_t idx = (k * n) % M;
                    re += windowed[n] * cos_tab[idx];
                    im -= windowed[n] * sin_tab[idx];
                }
                const double mag = std::sqrt(re * re + im * im);
                double phase = 0.0;
                if (mag > 0.0) {
                    phase = std::atan2(im, re);
                    if (phase <= -kPi) phase = kPi;  // keep phases in (-pi, pi]
                }
                clip.planes.at(t, k - 1, ch) = mag;
                clip.planes.at(t, k - 1, 4 + ch) = phase;
            }
        }
        // remaining frames (t >= used_frames) stay zero-padded
    }
    return clip;
}

}  // namespace qseld
