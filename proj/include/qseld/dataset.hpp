#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "qseld/features.hpp"
#include "qseld/model.hpp"
#include "qseld/synth.hpp"

namespace qseld {

/// Fixed-length training segments cut from the clips of one split, with
/// frame-aligned targets. DOA targets are class-major: column c*3 + d.
struct SegmentSet {
    Tensor<double> features;  // [S, T, F, 8]
    Tensor<double> activity;  // [S, T, N]
    Tensor<double> doa;       // [S, T, 3N]

    struct ClipGroup {
        std::string id;
        std::size_t first_segment = 0;
        std::size_t n_segments = 0;
    };
    std::vector<ClipGroup> clips;

    std::size_t num_segments() const { return features.numel() ? features.dim(0) : 0; }
    std::size_t frames_per_segment() const { return features.dim(1); }
    std::size_t bins() const { return features.dim(2); }
    std::size_t num_classes() const { return activity.dim(2); }
};

/// Cuts every clip of `split` ("train"/"test"; empty = all) into
/// non-overlapping segments of `frames_per_segment` frames (tail remainder
/// dropped). The window length must match the dataset's label frame rate.
inline SegmentSet build_segments(const Dataset& dataset, const std::string& split,
                                 std::size_t window_length, std::size_t frames_per_segment) {
    if (window_length != dataset.config.window_length) {
        throw std::invalid_argument(
            "dataset: window length mismatch: model expects M=" + std::to_string(window_length) +
            ", dataset was generated with M=" + std::to_string(dataset.config.window_length));
    }
    const std::size_t N = dataset.config.num_classes;
    const std::size_t F = window_length / 2;
    const std::size_t T = frames_per_segment;

    std::size_t total_segments = 0;
    for (const auto& clip : dataset.clips) {
        if (!split.empty() && clip.split != split) continue;
        total_segments += clip.labels.frames() / T;
    }
    if (total_segments == 0) {
        throw std::runtime_error("dataset: split '" + split + "' yields no segments of " +
                                 std::to_string(T) + " frames");
    }

    SegmentSet set;
    set.features = Tensor<double>({total_segments, T, F, 8});
    set.activity = Tensor<double>({total_segments, T, N});
    set.doa = Tensor<double>({total_segments, T, 3 * N});

    std::size_t seg = 0;
    for (const auto& clip : dataset.clips) {
        if (!split.empty() && clip.split != split) continue;
        const std::size_t clip_frames = clip.labels.frames();
        const std::size_t n_seg = clip_frames / T;
        if (n_seg == 0) continue;
        FeatureClip feats = stft_features(clip.audio, window_length, clip_frames);

        SegmentSet::ClipGroup group{clip.id, seg, n_seg};
        for (std::size_t s = 0; s < n_seg; ++s, ++seg) {
            for (std::size_t t = 0; t < T; ++t) {
                const std::size_t src_t = s * T + t;
                for (std::size_t f = 0; f < F; ++f) {
                    for (std::size_t p = 0; p < 8; ++p) {
                        set.features.at(seg, t, f, p) = feats.planes.at(src_t, f, p);
                    }
                }
                for (std::size_t c = 0; c < N; ++c) {
                    set.activity.at(seg, t, c) = clip.labels.activity.at(src_t, c);
                    for (std::size_t d = 0; d < 3; ++d) {
                        set.doa.at(seg, t, 3 * c + d) = clip.labels.doa.at(src_t, c, d);
                    }
                }
            }
        }
        set.clips.push_back(group);
    }
    return set;
}

/// Per-plane mean/stddev over every frame and bin of the training split.
inline FeatureStats compute_feature_stats(const SegmentSet& train) {
    FeatureStats stats;
    const std::size_t n = train.features.numel() / 8;
    std::array<double, 8> sum{}, sq{};
    for (std::size_t i = 0; i < train.features.numel(); ++i) {
        const std::size_t p = i % 8;
        const double v = train.features[i];
        sum[p] += v;
        sq[p] += v * v;
    }
    for (std::size_t p = 0; p < 8; ++p) {
        const double mean = sum[p] / static_cast<double>(n);
        const double var = std::max(0.0, sq[p] / static_cast<double>(n) - mean * mean);
        stats.mean[p] = mean;
        stats.stddev[p] = std::max(std::sqrt(var), 1e-8);
    }
    return stats;
}

}  // namespace qseld
