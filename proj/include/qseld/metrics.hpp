#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "qseld/tensor.hpp"

namespace qseld {

/// The full metric set: segment SED scores, DOA scores and the three joint
/// scores S_SED = (ER + (1 - F)) / 2, S_DOA = (DOA_err/180 + (1 - K)) / 2,
/// S_SELD = (S_SED + S_DOA) / 2.
struct MetricReport {
    double er = 0.0;
    double f = 0.0;
    double doa_err = 0.0;  // degrees
    double k = 0.0;
    double s_sed = 0.0;
    double s_doa = 0.0;
    double s_seld = 0.0;

    std::string to_text() const;
    static std::string csv_header();
    std::string to_csv_row() const;
};

struct SedCounts {
    // global F-score counts over segment-level class presence
    double tp = 0.0, fp = 0.0, fn = 0.0;
    // per-segment error-rate numerators and the total ground-truth actives
    double subs = 0.0, dels = 0.0, ins = 0.0, n_total = 0.0;
};

struct DoaCounts {
    double angle_sum_deg = 0.0;
    double co_active = 0.0;
    double frames_matched = 0.0;
    double frames_total = 0.0;
};

/// Accumulates one clip's segment-level SED counts. Activities are [T, N]
/// with any value > 0.5 treated as active; a segment-class pair counts as
/// present when any of its frames is active.
void accumulate_sed_counts(const Tensor<double>& pred_activity, const Tensor<double>& gt_activity,
                           std::size_t segment_frames, SedCounts& counts);

/// Accumulates one clip's DOA error sum (over pairs active in both
/// prediction and ground truth, class-aligned) and frame-recall counts.
void accumulate_doa_counts(const Tensor<double>& pred_doa, const Tensor<double>& gt_doa,
                           const Tensor<double>& pred_activity, const Tensor<double>& gt_activity,
                           DoaCounts& counts);

/// (ER, F) from accumulated counts. Guards: with no ground-truth actives,
/// F = 1 when there are also no predictions (0/0), and ER = 0 with no
/// predictions or +infinity otherwise (insertions over an empty reference).
std::pair<double, double> sed_metrics_from_counts(const SedCounts& counts);

/// (DOA_err, K). With no co-active pairs DOA_err is defined as 180 degrees.
std::pair<double, double> doa_metrics_from_counts(const DoaCounts& counts);

/// Single-clip conveniences.
std::pair<double, double> segment_sed_metrics(const Tensor<double>& pred_activity,
                                              const Tensor<double>& gt_activity,
                                              std::size_t segment_frames);

std::pair<double, double> doa_metrics(const Tensor<double>& pred_doa, const Tensor<double>& gt_doa,
                                      const Tensor<double>& pred_activity,
                                      const Tensor<double>& gt_activity);

void seld_scores(double er, double f, double doa_err, double k, double& s_sed, double& s_doa,
                 double& s_seld);

/// Full report over accumulated counts.
MetricReport make_report(const SedCounts& sed, const DoaCounts& doa);

}  // namespace qseld
