#include "qseld/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <tuple>
#include <utility>

namespace qseld {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool active(double v) { return v > 0.5; }

void check_activity_shapes(const Tensor<double>& pred, const Tensor<double>& gt) {
    if (pred.ndim() != 2 || gt.ndim() != 2 || !pred.same_shape(gt)) {
        throw std::invalid_argument("metrics: activity shapes must match, got " +
                                    pred.shape_str() + " vs " + gt.shape_str());
    }
}

}  // namespace

void accumulate_sed_counts(const Tensor<double>& pred_activity, const Tensor<double>& gt_activity,
                           std::size_t segment_frames, SedCounts& counts) {
    check_activity_shapes(pred_activity, gt_activity);
    if (segment_frames < 1) throw std::invalid_argument("metrics: segment_frames must be >= 1");
    const std::size_t T = gt_activity.dim(0);
    const std::size_t N = gt_activity.dim(1);
    const std::size_t segments = (T + segment_frames - 1) / segment_frames;

    for (std::size_t s = 0; s < segments; ++s) {
        const std::size_t t0 = s * segment_frames;
        const std::size_t t1 = std::min(T, t0 + segment_frames);
        double seg_fn = 0.0, seg_fp = 0.0, seg_n = 0.0;
        for (std::size_t c = 0; c < N; ++c) {
            bool gt_present = false, pred_present = false;
            for (std::size_t t = t0; t < t1; ++t) {
                gt_present = gt_present || active(gt_activity.at(t, c));
                pred_present = pred_present || active(pred_activity.at(t, c));
            }
            if (gt_present) seg_n += 1.0;
            if (gt_present && pred_present) counts.tp += 1.0;
            if (!gt_present && pred_present) {
                counts.fp += 1.0;
                seg_fp += 1.0;
            }
            if (gt_present && !pred_present) {
                counts.fn += 1.0;
                seg_fn += 1.0;
            }
        }
        counts.subs += std::min(seg_fn, seg_fp);
        counts.dels += std::max(0.0, seg_fn - seg_fp);
        counts.ins += std::max(0.0, seg_fp - seg_fn);
        counts.n_total += seg_n;
    }
}

void accumulate_doa_counts(const Tensor<double>& pred_doa, const Tensor<double>& gt_doa,
                           const Tensor<double>& pred_activity, const Tensor<double>& gt_activity,
                           DoaCounts& counts) {
    check_activity_shapes(pred_activity, gt_activity);
    if (!pred_doa.same_shape(gt_doa) || pred_doa.ndim() != 3 || pred_doa.dim(2) != 3) {
        throw std::invalid_argument("metrics: DOA tensors must be matching [T, N, 3]");
    }
    const std::size_t T = gt_activity.dim(0);
    const std::size_t N = gt_activity.dim(1);

    for (std::size_t t = 0; t < T; ++t) {
        std::size_t pred_count = 0, gt_count = 0;
        for (std::size_t c = 0; c < N; ++c) {
            const bool p = active(pred_activity.at(t, c));
            const bool g = active(gt_activity.at(t, c));
            if (p) ++pred_count;
            if (g) ++gt_count;
            if (!(p && g)) continue;

            double pu[3], gu[3], pn = 0.0, gn = 0.0;
            for (std::size_t d = 0; d < 3; ++d) {
                pu[d] = pred_doa.at(t, c, d);
                gu[d] = gt_doa.at(t, c, d);
                pn += pu[d] * pu[d];
                gn += gu[d] * gu[d];
            }
            pn = std::sqrt(pn);
            gn = std::sqrt(gn);
            if (pn <= 0.0 || gn <= 0.0) continue;  // zero vectors excluded
            double dot = (pu[0] * gu[0] + pu[1] * gu[1] + pu[2] * gu[2]) / (pn * gn);
            dot = std::clamp(dot, -1.0, 1.0);
            counts.angle_sum_deg += std::acos(dot) * 180.0 / kPi;
            counts.co_active += 1.0;
        }
        if (pred_count == gt_count) counts.frames_matched += 1.0;
        counts.frames_total += 1.0;
    }
}

std::pair<double, double> sed_metrics_from_counts(const SedCounts& counts) {
    const double f_den = 2.0 * counts.tp + counts.fp + counts.fn;
    const double f = f_den == 0.0 ? 1.0 : 2.0 * counts.tp / f_den;
    double er;
    const double err_sum = counts.subs + counts.dels + counts.ins;
    if (counts.n_total == 0.0) {
        // no reference events: clean silence scores 0, any insertion is
        // unnormalizable and reported as +inf
        er = err_sum == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
        er = err_sum / counts.n_total;
    }
    return {er, f};
}

std::pair<double, double> doa_metrics_from_counts(const DoaCounts& counts) {
    const double doa_err =
        counts.co_active == 0.0 ? 180.0 : counts.angle_sum_deg / counts.co_active;
    const double k = counts.frames_total == 0.0 ? 0.0 : counts.frames_matched / counts.frames_total;
    return {doa_err, k};
}

std::pair<double, double> segment_sed_metrics(const Tensor<double>& pred_activity,
                                              const Tensor<double>& gt_activity,
                                              std::size_t segment_frames) {
    SedCounts counts;
    accumulate_sed_counts(pred_activity, gt_activity, segment_frames, counts);
    return sed_metrics_from_counts(counts);
}

std::pair<double, double> doa_metrics(const Tensor<double>& pred_doa, const Tensor<double>& gt_doa,
                                      const Tensor<double>& pred_activity,
                                      const Tensor<double>& gt_activity) {
    DoaCounts counts;
    accumulate_doa_counts(pred_doa, gt_doa, pred_activity, gt_activity, counts);
    return doa_metrics_from_counts(counts);
}

void seld_scores(double er, double f, double doa_err, double k, double& s_sed, double& s_doa,
                 double& s_seld) {
    s_sed = (er + (1.0 - f)) / 2.0;
    s_doa = (doa_err / 180.0 + (1.0 - k)) / 2.0;
    s_seld = (s_sed + s_doa) / 2.0;
}

MetricReport make_report(const SedCounts& sed, const DoaCounts& doa) {
    MetricReport r;
    std::tie(r.er, r.f) = sed_metrics_from_counts(sed);
    std::tie(r.doa_err, r.k) = doa_metrics_from_counts(doa);
    seld_scores(r.er, r.f, r.doa_err, r.k, r.s_sed, r.s_doa, r.s_seld);
    return r;
}

namespace {
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}
}  // namespace

std::string MetricReport::to_text() const {
    std::string out;
    out += "ER " + fmt(er) + "\n";
    out += "F " + fmt(f) + "\n";
    out += "DOA_err " + fmt(doa_err) + "\n";
    out += "K " + fmt(k) + "\n";
    out += "S_SED " + fmt(s_sed) + "\n";
    out += "S_DOA " + fmt(s_doa) + "\n";
    out += "S_SELD " + fmt(s_seld) + "\n";
    return out;
}

std::string MetricReport::csv_header() { return "ER,F,DOA_err,K,S_SED,S_DOA,S_SELD"; }

std::string MetricReport::to_csv_row() const {
    return fmt(er) + "," + fmt(f) + "," + fmt(doa_err) + "," + fmt(k) + "," + fmt(s_sed) + "," +
           fmt(s_doa) + "," + fmt(s_seld);
}

}  // namespace qseld
