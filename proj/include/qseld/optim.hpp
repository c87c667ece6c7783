#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "qseld/qnn.hpp"
#include "qseld/tensor.hpp"

namespace qseld {

template <typename T>
struct LossResult {
    double value = 0.0;
    Tensor<T> grad;
};

/// Mean binary cross-entropy over all elements. Predictions are clamped to
/// [1e-7, 1 - 1e-7]; the gradient is zero where the clamp is active.
template <typename T>
LossResult<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (!pred.same_shape(target)) {
        throw std::invalid_argument("bce_loss: shape mismatch " + pred.shape_str() + " vs " +
                                    target.shape_str());
    }
    constexpr double kEps = 1e-7;
    const std::size_t n = pred.numel();
    LossResult<T> res;
    res.grad = Tensor<T>(pred.shape());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p_raw = static_cast<double>(pred[i]);
        const bool clamped = p_raw < kEps || p_raw > 1.0 - kEps;
        const double p = std::min(std::max(p_raw, kEps), 1.0 - kEps);
        const double t = static_cast<double>(target[i]);
        acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
        res.grad[i] = clamped ? T(0)
                              : static_cast<T>((p - t) / (p * (1.0 - p)) /
                                               static_cast<double>(n));
    }
    res.value = acc / static_cast<double>(n);
    return res;
}

/// MSE over the 3 coordinates of every (frame, class) pair active in the
/// ground-truth mask; inactive pairs contribute nothing (and receive zero
/// gradient). An all-inactive mask yields loss 0.
///
/// pred and target share a shape whose trailing dim is 3N; the mask shares
/// the leading dims with trailing dim N.
template <typename T>
LossResult<T> masked_mse_loss(const Tensor<T>& pred, const Tensor<T>& target,
                              const Tensor<T>& mask) {
    if (!pred.same_shape(target)) {
        throw std::invalid_argument("masked_mse_loss: pred/target shape mismatch " +
                                    pred.shape_str() + " vs " + target.shape_str());
    }
    if (mask.ndim() != pred.ndim() || pred.dim(pred.ndim() - 1) != 3 * mask.dim(mask.ndim() - 1)) {
        throw std::invalid_argument("masked_mse_loss: mask shape " + mask.shape_str() +
                                    " does not pair with pred " + pred.shape_str());
    }
    const std::size_t N = mask.dim(mask.ndim() - 1);
    const std::size_t rows = mask.numel() / N;
    LossResult<T> res;
    res.grad = Tensor<T>(pred.shape());

    std::size_t active = 0;
    for (std::size_t i = 0; i < mask.numel(); ++i) {
        if (mask[i] > T(0.5)) ++active;
    }
    if (active == 0) {
        res.value = 0.0;
        return res;
    }
    const double denom = 3.0 * static_cast<double>(active);
    double acc = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const T* mrow = mask.data() + r * N;
        const T* prow = pred.data() + r * 3 * N;
        const T* trow = target.data() + r * 3 * N;
        T* grow = res.grad.data() + r * 3 * N;
        for (std::size_t c = 0; c < N; ++c) {
            if (mrow[c] <= T(0.5)) continue;
            for (std::size_t d = 0; d < 3; ++d) {
                const double diff =
                    static_cast<double>(prow[3 * c + d]) - static_cast<double>(trow[3 * c + d]);
                acc += diff * diff;
                grow[3 * c + d] = static_cast<T>(2.0 * diff / denom);
            }
        }
    }
    res.value = acc / denom;
    return res;
}

/// Joint SELD training loss: L_SED + lambda * L_DOA.
template <typename T>
struct CombinedLoss {
    double value = 0.0;
    double sed = 0.0;
    double doa = 0.0;
    Tensor<T> grad_sed;
    Tensor<T> grad_doa;
};

template <typename T>
CombinedLoss<T> combined_loss(const Tensor<T>& sed_pred, const Tensor<T>& sed_target,
                              const Tensor<T>& doa_pred, const Tensor<T>& doa_target,
                              double doa_weight) {
    if (doa_weight < 0.0) throw std::invalid_argument("combined_loss: doa_weight must be >= 0");
    CombinedLoss<T> out;
    LossResult<T> sed = bce_loss(sed_pred, sed_target);
    LossResult<T> doa = masked_mse_loss(doa_pred, doa_target, sed_target);
    out.sed = sed.value;
    out.doa = doa.value;
    out.value = sed.value + doa_weight * doa.value;
    out.grad_sed = std::move(sed.grad);
    out.grad_doa = std::move(doa.grad);
    for (std::size_t i = 0; i < out.grad_doa.numel(); ++i) {
        out.grad_doa[i] *= static_cast<T>(doa_weight);
    }
    return out;
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment tensors mirror the parameter list the
/// optimizer was built with; the step aborts (state untouched) on any
/// non-finite gradient.
template <typename T>
class Adam {
public:
    Adam(const std::vector<ParamRef<T>>& params, AdamConfig config = {}) : config_(config) {
        for (const auto& p : params) {
            m_.push_back(Tensor<T>(p.value->shape()));
            v_.push_back(Tensor<T>(p.value->shape()));
        }
    }

    const AdamConfig& config() const { return config_; }
    std::uint64_t step_count() const { return step_; }

    void step(const std::vector<ParamRef<T>>& params) {
        if (params.size() != m_.size()) {
            throw std::invalid_argument("adam: parameter list size changed");
        }
        for (const auto& p : params) {
            for (std::size_t i = 0; i < p.grad->numel(); ++i) {
                if (!std::isfinite(static_cast<double>((*p.grad)[i]))) {
                    throw std::runtime_error("adam: non-finite gradient in " + p.name +
                                             "; step aborted");
                }
            }
        }
        ++step_;
        const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            Tensor<T>& value = *params[k].value;
            const Tensor<T>& grad = *params[k].grad;
            Tensor<T>& m = m_[k];
            Tensor<T>& v = v_[k];
            for (std::size_t i = 0; i < value.numel(); ++i) {
                const double g = static_cast<double>(grad[i]);
                const double mi = config_.beta1 * static_cast<double>(m[i]) +
                                  (1.0 - config_.beta1) * g;
                const double vi = config_.beta2 * static_cast<double>(v[i]) +
                                  (1.0 - config_.beta2) * g * g;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                value[i] -= static_cast<T>(config_.lr * mhat / (std::sqrt(vhat) + config_.eps));
            }
        }
    }

private:
    AdamConfig config_;
    std::uint64_t step_ = 0;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::vector<GradCheckEntry> per_param;
};

/// Central-difference gradient check over an arbitrary parameter list.
///
/// `compute_grads` must zero and refill every grad tensor; `eval_loss`
/// re-evaluates the scalar loss at the current parameter values. Relative
/// error per element is |a - n| / max(|a|, |n|, 1e-8). Doubles only: the
/// h = 1e-5 stencil is meaningless in single precision.
inline GradCheckReport gradcheck(const std::vector<ParamRef<double>>& params,
                                 const std::function<double()>& eval_loss,
                                 const std::function<void()>& compute_grads, double h = 1e-5) {
    compute_grads();
    std::vector<Tensor<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(*p.grad);

    GradCheckReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor<double>& value = *params[k].value;
        GradCheckEntry entry{params[k].name, 0.0};
        for (std::size_t i = 0; i < value.numel(); ++i) {
            const double saved = value[i];
            value[i] = saved + h;
            const double lp = eval_loss();
            value[i] = saved - h;
            const double lm = eval_loss();
            value[i] = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic[k][i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            if (rel > entry.max_rel_err) entry.max_rel_err = rel;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = params[k].name + "[" + std::to_string(i) + "]";
            }
        }
        report.per_param.push_back(std::move(entry));
    }
    return report;
}

}  // namespace qseld
