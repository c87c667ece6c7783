#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "qseld/checkpoint.hpp"
#include "qseld/dataset.hpp"
#include "qseld/metrics.hpp"
#include "qseld/optim.hpp"

namespace qseld {

struct TrainConfig {
    std::size_t epochs = 150;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    double doa_weight = 5.0;
    std::uint64_t seed = 42;
    double threshold = 0.5;                   // SED activity threshold
    std::size_t metric_segment_frames = 250;  // frames per scoring segment (1 s)
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    MetricReport val;
};

struct TrainResult {
    std::vector<EpochLog> log;
    CheckpointFile best_checkpoint;
    std::size_t best_epoch = 0;  // 0 = initial model
    double best_s_seld = 0.0;
    bool diverged = false;
    std::string divergence_note;
};

namespace detail {

template <typename T>
Tensor<T> gather_batch(const Tensor<double>& src, const std::vector<std::size_t>& order,
                       std::size_t first, std::size_t count) {
    std::vector<std::size_t> shape = src.shape();
    shape[0] = count;
    Tensor<T> out(shape);
    const std::size_t stride = src.numel() / src.dim(0);
    for (std::size_t k = 0; k < count; ++k) {
        const double* s = src.data() + order[first + k] * stride;
        T* d = out.data() + k * stride;
        for (std::size_t i = 0; i < stride; ++i) d[i] = static_cast<T>(s[i]);
    }
    return out;
}

}  // namespace detail

/// Forward-only evaluation: combined loss plus the metric report, with
/// predictions concatenated per clip so the 1-second scoring segments line
/// up inside each clip.
template <typename Model>
struct EvalOutput {
    double loss = 0.0;
    MetricReport report;
};

template <typename Model>
EvalOutput<Model> evaluate_model(Model& model, const SegmentSet& set, double threshold,
                                 std::size_t metric_segment_frames, double doa_weight,
                                 std::size_t batch_size = 32) {
    using T = std::remove_pointer_t<decltype(std::declval<Model&>().params()[0].value)>::value_type;
    const std::size_t Tt = set.frames_per_segment();
    const std::size_t N = set.num_classes();

    SedCounts sed_counts;
    DoaCounts doa_counts;
    double loss_sum = 0.0;
    std::size_t loss_batches = 0;

    std::vector<std::size_t> identity(set.num_segments());
    std::iota(identity.begin(), identity.end(), std::size_t{0});

    for (const auto& group : set.clips) {
        const std::size_t clip_frames = group.n_segments * Tt;
        Tensor<double> pred_act({clip_frames, N});
        Tensor<double> pred_doa({clip_frames, N, 3});
        Tensor<double> gt_act({clip_frames, N});
        Tensor<double> gt_doa({clip_frames, N, 3});

        for (std::size_t off = 0; off < group.n_segments; off += batch_size) {
            const std::size_t count = std::min(batch_size, group.n_segments - off);
            const std::size_t first = group.first_segment + off;
            Tensor<T> feats = detail::gather_batch<T>(set.features, identity, first, count);
            Tensor<T> act = detail::gather_batch<T>(set.activity, identity, first, count);
            Tensor<T> doa = detail::gather_batch<T>(set.doa, identity, first, count);
            Predictions<T> preds = model.forward(feats, /*train=*/false);
            CombinedLoss<T> loss = combined_loss(preds.sed, act, preds.doa, doa, doa_weight);
            loss_sum += loss.value;
            ++loss_batches;

            for (std::size_t b = 0; b < count; ++b) {
                for (std::size_t t = 0; t < Tt; ++t) {
                    const std::size_t row = (off + b) * Tt + t;
                    for (std::size_t c = 0; c < N; ++c) {
                        pred_act.at(row, c) =
                            static_cast<double>(preds.sed.at(b, t, c)) > threshold ? 1.0 : 0.0;
                        gt_act.at(row, c) = static_cast<double>(act.at(b, t, c));
                        for (std::size_t d = 0; d < 3; ++d) {
                            pred_doa.at(row, c, d) =
                                static_cast<double>(preds.doa.at(b, t, 3 * c + d));
                            gt_doa.at(row, c, d) = static_cast<double>(doa.at(b, t, 3 * c + d));
                        }
                    }
                }
            }
        }
        accumulate_sed_counts(pred_act, gt_act, metric_segment_frames, sed_counts);
        accumulate_doa_counts(pred_doa, gt_doa, pred_act, gt_act, doa_counts);
    }

    EvalOutput<Model> out;
    out.loss = loss_batches ? loss_sum / static_cast<double>(loss_batches) : 0.0;
    out.report = make_report(sed_counts, doa_counts);
    return out;
}

/// Mini-batch Adam training with per-epoch validation; keeps the checkpoint
/// of the best validation S_SELD. Stops (keeping the last good checkpoint)
/// when the loss turns non-finite.
template <typename Model>
TrainResult train_model(Model& model, const SegmentSet& train_set, const SegmentSet& val_set,
                        const TrainConfig& cfg, const std::string& model_kind,
                        nlohmann::json manifest_extra = {}) {
    using T = std::remove_pointer_t<decltype(std::declval<Model&>().params()[0].value)>::value_type;
    if (cfg.batch_size < 2) {
        throw std::invalid_argument("train: batch size must be >= 2 (batch norm statistics)");
    }

    model.set_feature_stats(compute_feature_stats(train_set));

    auto params = model.params();
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    Adam<T> adam(params, adam_cfg);
    Rng shuffle_rng(Rng::derive(cfg.seed, 0xBA7C4));

    TrainResult result;
    auto snapshot = [&](std::size_t epoch, double s_seld) {
        nlohmann::json extra = manifest_extra;
        extra["seed"] = cfg.seed;
        extra["train"] = {{"epochs_run", epoch},
                          {"best_epoch", epoch},
                          {"best_val_s_seld", s_seld},
                          {"lr", cfg.lr},
                          {"batch_size", cfg.batch_size},
                          {"doa_weight", cfg.doa_weight}};
        result.best_checkpoint = checkpoint_from_model(model, model_kind, extra);
        result.best_epoch = epoch;
        result.best_s_seld = s_seld;
    };

    // Initial snapshot covers epochs == 0 and the not-yet-improved case.
    snapshot(0, 2.0);

    std::vector<std::size_t> order(train_set.num_segments());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle(order, shuffle_rng);
        double loss_sum = 0.0;
        std::size_t sample_count = 0;
        bool bad = false;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - first);
            if (count < 2) continue;  // batch norm needs at least 2 rows
            Tensor<T> feats = detail::gather_batch<T>(train_set.features, order, first, count);
            Tensor<T> act = detail::gather_batch<T>(train_set.activity, order, first, count);
            Tensor<T> doa = detail::gather_batch<T>(train_set.doa, order, first, count);

            model.zero_grad();
            Predictions<T> preds = model.forward(feats, /*train=*/true);
            CombinedLoss<T> loss = combined_loss(preds.sed, act, preds.doa, doa, cfg.doa_weight);
            if (!std::isfinite(loss.value)) {
                result.diverged = true;
                result.divergence_note = "non-finite training loss at epoch " +
                                         std::to_string(epoch) + "; stopped, keeping checkpoint " +
                                         "of epoch " + std::to_string(result.best_epoch);
                bad = true;
                break;
            }
            model.backward(loss.grad_sed, loss.grad_doa);
            try {
                adam.step(params);
            } catch (const std::runtime_error& e) {
                result.diverged = true;
                result.divergence_note = std::string(e.what()) + " at epoch " +
                                         std::to_string(epoch) + "; stopped, keeping checkpoint " +
                                         "of epoch " + std::to_string(result.best_epoch);
                bad = true;
                break;
            }
            loss_sum += loss.value * static_cast<double>(count);
            sample_count += count;
        }
        if (bad) break;

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = sample_count ? loss_sum / static_cast<double>(sample_count) : 0.0;
        EvalOutput<Model> val = evaluate_model(model, val_set, cfg.threshold,
                                               cfg.metric_segment_frames, cfg.doa_weight);
        log.val_loss = val.loss;
        log.val = val.report;
        result.log.push_back(log);

        if (val.report.s_seld < result.best_s_seld) snapshot(epoch, val.report.s_seld);
    }
    return result;
}

}  // namespace qseld
