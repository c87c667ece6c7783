#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "qseld/qnn.hpp"

namespace qseld {

/// Architecture hyperparameters.
struct QseldConfig {
    std::size_t conv_filters = 2;  // P: quaternion filters per conv layer
    std::size_t conv_layers = 3;
    std::vector<std::size_t> pool_factors = {4, 2, 2};
    std::size_t frames = 8;          // T: sequence length per segment
    std::size_t window_length = 64;  // M; the network sees F = M/2 bins
    std::size_t recurrent_size = 16;  // Q
    std::size_t dense_size = 16;      // R
    std::size_t num_classes = 3;      // N
    double doa_weight = 5.0;          // lambda

    std::size_t bins() const { return window_length / 2; }

    std::size_t pool_product() const {
        std::size_t p = 1;
        for (std::size_t f : pool_factors) p *= f;
        return p;
    }

    /// QCNN stack output: [P, T, bins / prod(pools)] quaternion channels.
    std::vector<std::size_t> qcnn_output_shape() const {
        return {conv_filters, frames, bins() / pool_product()};
    }

    std::size_t recurrent_input_size() const { return 8 * conv_filters; }

    void validate() const {
        if (conv_filters == 0 || conv_layers == 0 || frames == 0 || recurrent_size == 0 ||
            dense_size == 0 || num_classes == 0) {
            throw std::invalid_argument("qseld config: all sizes must be positive");
        }
        if (window_length < 16 || window_length % 2 != 0) {
            throw std::invalid_argument("qseld config: window length must be even and >= 16");
        }
        if (pool_factors.size() != conv_layers) {
            throw std::invalid_argument("qseld config: need one pool factor per conv layer (" +
                                        std::to_string(conv_layers) + " layers, " +
                                        std::to_string(pool_factors.size()) + " factors)");
        }
        std::size_t f = bins();
        for (std::size_t k = 0; k < pool_factors.size(); ++k) {
            if (pool_factors[k] == 0 || f % pool_factors[k] != 0) {
                throw std::invalid_argument(
                    "qseld config: frequency extent " + std::to_string(f) +
                    " not divisible by pool factor " + std::to_string(pool_factors[k]) +
                    " at layer " + std::to_string(k));
            }
            f /= pool_factors[k];
        }
        if (f != 2) {
            throw std::invalid_argument(
                "qseld config: pool factors must reduce " + std::to_string(bins()) +
                " frequency bins to 2, got " + std::to_string(f));
        }
    }

    /// Desk-scale preset used by tests and the default pipeline.
    static QseldConfig desk() { return QseldConfig{}; }

    /// The full-scale configuration reported in the evaluation setup.
    static QseldConfig paper() {
        QseldConfig c;
        c.conv_filters = 64;
        c.conv_layers = 3;
        c.pool_factors = {8, 8, 2};
        c.frames = 512;
        c.window_length = 512;
        c.recurrent_size = 128;
        c.dense_size = 32;
        c.num_classes = 11;
        return c;
    }
};

/// Per-plane standardization fitted on the training split and stored with
/// the checkpoint.
struct FeatureStats {
    std::array<double, 8> mean{};
    std::array<double, 8> stddev{1, 1, 1, 1, 1, 1, 1, 1};
};

template <typename T>
struct Predictions {
    Tensor<T> sed;  // [B, T, N], sigmoid probabilities
    Tensor<T> doa;  // [B, T, 3N], tanh outputs, class-major (c*3 + coord)
};

namespace detail {

/// Shared model tail: bidirectional recurrence plus the two parallel
/// fully-connected branches.
template <typename T>
struct SeldTail {
    BiGru<T> gru;
    RealDense<T> sed_fc, sed_out, doa_fc, doa_out;

    SeldTail(std::size_t input_size, std::size_t recurrent, std::size_t dense,
             std::size_t num_classes)
        : gru(input_size, recurrent),
          sed_fc(2 * recurrent, dense, Activation::kLinear),
          sed_out(dense, num_classes, Activation::kSigmoid),
          doa_fc(2 * recurrent, dense, Activation::kLinear),
          doa_out(dense, 3 * num_classes, Activation::kTanh) {}

    void init(std::uint64_t seed) {
        gru.init(Rng::derive(seed, 11));
        sed_fc.init(Rng::derive(seed, 12));
        sed_out.init(Rng::derive(seed, 13));
        doa_fc.init(Rng::derive(seed, 14));
        doa_out.init(Rng::derive(seed, 15));
    }

    Predictions<T> forward(const Tensor<T>& seq) {
        Tensor<T> h = gru.forward(seq);
        Predictions<T> out;
        out.sed = sed_out.forward(sed_fc.forward(h));
        out.doa = doa_out.forward(doa_fc.forward(h));
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_sed, const Tensor<T>& grad_doa) {
        Tensor<T> g = sed_fc.backward(sed_out.backward(grad_sed));
        g += doa_fc.backward(doa_out.backward(grad_doa));
        return gru.backward(g);
    }

    void zero_grad() {
        gru.zero_grad();
        sed_fc.zero_grad();
        sed_out.zero_grad();
        doa_fc.zero_grad();
        doa_out.zero_grad();
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        gru.collect_params(out, "gru.");
        sed_fc.collect_params(out, "sed_fc.");
        sed_out.collect_params(out, "sed_out.");
        doa_fc.collect_params(out, "doa_fc.");
        doa_out.collect_params(out, "doa_out.");
    }
};

}  // namespace detail

/// QSELD: quaternion convolutional front-end over the two quaternion feature
/// channels (magnitude, phase), frequency pooling to 2 bins, reshape to a
/// real T x 8P sequence, bidirectional GRU and parallel SED / DOA heads.
template <typename T>
class QseldModel {
public:
    explicit QseldModel(QseldConfig config) : config_(std::move(config)) {
        config_.validate();
        std::size_t c_in = 2;
        for (std::size_t l = 0; l < config_.conv_layers; ++l) {
            convs_.emplace_back(c_in, config_.conv_filters);
            bns_.emplace_back(config_.conv_filters);
            pools_.emplace_back(config_.pool_factors[l]);
            c_in = config_.conv_filters;
        }
        tail_ = std::make_unique<detail::SeldTail<T>>(config_.recurrent_input_size(),
                                                      config_.recurrent_size, config_.dense_size,
                                                      config_.num_classes);
    }

    const QseldConfig& config() const { return config_; }
    FeatureStats& feature_stats() { return stats_; }
    const FeatureStats& feature_stats() const { return stats_; }
    void set_feature_stats(const FeatureStats& s) { stats_ = s; }

    void init(std::uint64_t seed) {
        for (std::size_t l = 0; l < convs_.size(); ++l) {
            convs_[l].init(Rng::derive(seed, 1000 + l));
        }
        tail_->init(Rng::derive(seed, 2000));
    }

    /// features: raw [B, T, F, 8] plane stack (see FeatureClip ordering).
    Predictions<T> forward(const Tensor<T>& features, bool train) {
        check_features(features);
        const std::size_t B = features.dim(0);
        const std::size_t Tt = config_.frames;
        const std::size_t F = config_.bins();

        QuatTensor<T> q({B, 2, Tt, F});
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t t = 0; t < Tt; ++t) {
                for (std::size_t f = 0; f < F; ++f) {
                    for (std::size_t p = 0; p < 8; ++p) {
                        const T v =
                            static_cast<T>((static_cast<double>(features.at(b, t, f, p)) -
                                            stats_.mean[p]) /
                                           stats_.stddev[p]);
                        const std::size_t ch = p / 4;
                        q.plane(p % 4)[((b * 2 + ch) * Tt + t) * F + f] = v;
                    }
                }
            }
        }

        act_outputs_.clear();
        for (std::size_t l = 0; l < convs_.size(); ++l) {
            QuatTensor<T> c = convs_[l].forward(q);
            QuatTensor<T> a = split_activation(c, Activation::kRelu);
            act_outputs_.push_back(a);
            QuatTensor<T> n = bns_[l].forward(a, train);
            q = pools_[l].forward(n);
        }

        // [B, P, T, 2] quaternion -> [B, T, 8P] real
        const std::size_t P = config_.conv_filters;
        const std::size_t Ff = q.dim(3);
        Tensor<T> seq({B, Tt, 4 * P * Ff});
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t p = 0; p < P; ++p) {
                for (std::size_t pl = 0; pl < 4; ++pl) {
                    const Tensor<T>& plane = q.plane(pl);
                    for (std::size_t t = 0; t < Tt; ++t) {
                        for (std::size_t f = 0; f < Ff; ++f) {
                            seq.at(b, t, (p * 4 + pl) * Ff + f) = plane.at(b, p, t, f);
                        }
                    }
                }
            }
        }
        return tail_->forward(seq);
    }

    /// Accumulates parameter gradients; returns the loss gradient w.r.t. the
    /// raw feature tensor.
    Tensor<T> backward(const Tensor<T>& grad_sed, const Tensor<T>& grad_doa) {
        const std::size_t B = grad_sed.dim(0);
        const std::size_t Tt = config_.frames;
        const std::size_t P = config_.conv_filters;
        const std::size_t F = config_.bins();

        Tensor<T> g_seq = tail_->backward(grad_sed, grad_doa);
        const std::size_t Ff = config_.qcnn_output_shape()[2];
        QuatTensor<T> gq({B, P, Tt, Ff});
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t p = 0; p < P; ++p) {
                for (std::size_t pl = 0; pl < 4; ++pl) {
                    Tensor<T>& plane = gq.plane(pl);
                    for (std::size_t t = 0; t < Tt; ++t) {
                        for (std::size_t f = 0; f < Ff; ++f) {
                            plane.at(b, p, t, f) = g_seq.at(b, t, (p * 4 + pl) * Ff + f);
                        }
                    }
                }
            }
        }

        for (std::size_t l = convs_.size(); l-- > 0;) {
            QuatTensor<T> g = pools_[l].backward(gq);
            g = bns_[l].backward(g);
            g = split_activation_backward(act_outputs_[l], g, Activation::kRelu);
            gq = convs_[l].backward(g);
        }

        Tensor<T> grad_features({B, Tt, F, 8});
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t t = 0; t < Tt; ++t) {
                for (std::size_t f = 0; f < F; ++f) {
                    for (std::size_t p = 0; p < 8; ++p) {
                        const std::size_t ch = p / 4;
                        grad_features.at(b, t, f, p) = static_cast<T>(
                            static_cast<double>(
                                gq.plane(p % 4)[((b * 2 + ch) * Tt + t) * F + f]) /
                            stats_.stddev[p]);
                    }
                }
            }
        }
        return grad_features;
    }

    void zero_grad() {
        for (auto& c : convs_) c.zero_grad();
        for (auto& b : bns_) b.zero_grad();
        tail_->zero_grad();
    }

    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        for (std::size_t l = 0; l < convs_.size(); ++l) {
            convs_[l].collect_params(out, "conv" + std::to_string(l) + ".");
        }
        for (std::size_t l = 0; l < bns_.size(); ++l) {
            bns_[l].collect_params(out, "bn" + std::to_string(l) + ".");
        }
        tail_->collect_params(out);
        return out;
    }

    /// Non-trainable state (batch-norm running statistics).
    std::vector<ParamRef<T>> state() {
        std::vector<ParamRef<T>> out;
        for (std::size_t l = 0; l < bns_.size(); ++l) {
            bns_[l].collect_state(out, "bn" + std::to_string(l) + ".");
        }
        return out;
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for (const auto& p : params()) n += p.value->numel();
        return n;
    }

private:
    void check_features(const Tensor<T>& features) const {
        if (features.ndim() != 4 || features.dim(1) != config_.frames ||
            features.dim(2) != config_.bins() || features.dim(3) != 8) {
            throw std::invalid_argument(
                "qseld: expected features [B, " + std::to_string(config_.frames) + ", " +
                std::to_string(config_.bins()) + ", 8], got " + features.shape_str());
        }
    }

    QseldConfig config_;
    FeatureStats stats_;
    std::vector<QConv2d<T>> convs_;
    std::vector<SplitBatchNorm<T>> bns_;
    std::vector<MaxPoolFreq<T>> pools_;
    std::unique_ptr<detail::SeldTail<T>> tail_;
    std::vector<QuatTensor<T>> act_outputs_;
};

/// Parameter-matched real baseline: the same stack with the quaternion
/// convolutions replaced by real convolutions of twice the filter count over
/// the 8 raw feature planes.
template <typename T>
class RealSeldModel {
public:
    explicit RealSeldModel(QseldConfig config) : config_(std::move(config)) {
        config_.validate();
        const std::size_t K = 2 * config_.conv_filters;
        std::size_t c_in = 8;
        for (std::size_t l = 0; l < config_.conv_layers; ++l) {
            convs_.emplace_back(c_in, K);
            bns_.emplace_back(K);
            pools_.emplace_back(config_.pool_factors[l]);
            c_in = K;
        }
        tail_ = std::make_unique<detail::SeldTail<T>>(2 * K, config_.recurrent_size,
                                                      config_.dense_size, config_.num_classes);
    }

    const QseldConfig& config() const { return config_; }
    FeatureStats& feature_stats() { return stats_; }
    void set_feature_stats(const FeatureStats& s) { stats_ = s; }

    void init(std::uint64_t seed) {
        for (std::size_t l = 0; l < convs_.size(); ++l) {
            convs_[l].init(Rng::derive(seed, 3000 + l));
        }
        tail_->init(Rng::derive(seed, 4000));
    }

    Predictions<T> forward(const Tensor<T>& features, bool train) {
        const std::size_t B = features.dim(0);
        const std::size_t Tt = config_.frames;
        const std::size_t F = config_.bins();
        Tensor<T> x({B, 8, Tt, F});
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t t = 0; t < Tt; ++t) {
                for (std::size_t f = 0; f < F; ++f) {
                    for (std::size_t p = 0; p < 8; ++p) {
                        x.at(b, p, t, f) =
                            static_cast<T>((static_cast<double>(features.at(b, t, f, p)) -
                                            stats_.mean[p]) /
                                           stats_.stddev[p]);
                    }
                }
            }
        }

        act_outputs_.clear();
        for (std::size_t l = 0; l < convs_.size(); ++l) {
            Tensor<T> c = convs_[l].forward(x);
            Tensor<T> a = activation_forward(c, Activation::kRelu);
            act_outputs_.push_back(a);
            Tensor<T> n = bns_[l].forward(a, train);
            x = pools_[l].forward(n);
        }

        const std::size_t K = 2 * config_.conv_filters;
        const std::size_t Ff = x.dim(3);
        Tensor<T> seq({B, Tt, K * Ff});
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t k = 0; k < K; ++k) {
                for (std::size_t t = 0; t < Tt; ++t) {
                    for (std::size_t f = 0; f < Ff; ++f) {
                        seq.at(b, t, k * Ff + f) = x.at(b, k, t, f);
                    }
                }
            }
        }
        return tail_->forward(seq);
    }

    void backward(const Tensor<T>& grad_sed, const Tensor<T>& grad_doa) {
        const std::size_t B = grad_sed.dim(0);
        const std::size_t Tt = config_.frames;
        const std::size_t K = 2 * config_.conv_filters;
        Tensor<T> g_seq = tail_->backward(grad_sed, grad_doa);
        const std::size_t Ff = config_.qcnn_output_shape()[2];
        Tensor<T> gx({B, K, Tt, Ff});
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t k = 0; k < K; ++k) {
                for (std::size_t t = 0; t < Tt; ++t) {
                    for (std::size_t f = 0; f < Ff; ++f) {
                        gx.at(b, k, t, f) = g_seq.at(b, t, k * Ff + f);
                    }
                }
            }
        }
        for (std::size_t l = convs_.size(); l-- > 0;) {
            Tensor<T> g = pools_[l].backward(gx);
            g = bns_[l].backward(g);
            g = activation_backward(act_outputs_[l], g, Activation::kRelu);
            gx = convs_[l].backward(g);
        }
    }

    void zero_grad() {
        for (auto& c : convs_) c.zero_grad();
        for (auto& b : bns_) b.zero_grad();
        tail_->zero_grad();
    }

    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        for (std::size_t l = 0; l < convs_.size(); ++l) {
            convs_[l].collect_params(out, "conv" + std::to_string(l) + ".");
        }
        for (std::size_t l = 0; l < bns_.size(); ++l) {
            bns_[l].collect_params(out, "bn" + std::to_string(l) + ".");
        }
        tail_->collect_params(out);
        return out;
    }

    std::vector<ParamRef<T>> state() {
        std::vector<ParamRef<T>> out;
        for (std::size_t l = 0; l < bns_.size(); ++l) {
            bns_[l].collect_state(out, "bn" + std::to_string(l) + ".");
        }
        return out;
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for (const auto& p : params()) n += p.value->numel();
        return n;
    }

private:
    QseldConfig config_;
    FeatureStats stats_;
    std::vector<RealConv2d<T>> convs_;
    std::vector<BatchNormReal<T>> bns_;
    std::vector<MaxPoolFreqReal<T>> pools_;
    std::unique_ptr<detail::SeldTail<T>> tail_;
    std::vector<Tensor<T>> act_outputs_;
};

}  // namespace qseld
