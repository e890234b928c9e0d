#include "vr/optim.hpp"

#include <cmath>

#include "vr/common.hpp"

namespace vr {

double lr_schedule(int step, int total_steps, double peak_lr, double warmup_fraction) {
    if (total_steps < 1) throw ValueError("schedule needs at least one step");
    if (step < 0 || step > total_steps) {
        throw ValueError("schedule step " + std::to_string(step) + " outside [0, " +
                         std::to_string(total_steps) + "]");
    }
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
        throw ValueError("warmup fraction must lie in [0, 1)");
    }
    const double warmup_steps = warmup_fraction * total_steps;
    if (warmup_steps > 0.0 && step < warmup_steps) {
        return peak_lr * step / warmup_steps;
    }
    const double progress = (step - warmup_steps) / (total_steps - warmup_steps);
    return peak_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

double clip_global_norm(std::vector<Tensor>& params, double max_norm) {
    double sq = 0.0;
    for (Tensor& p : params) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (Tensor& p : params) {
            if (!p.has_grad()) continue;
            for (double& g : p.grad()) g *= scale;
        }
    }
    return norm;
}

AdamW::AdamW(std::vector<Tensor> params, double weight_decay, double beta1, double beta2,
             double eps)
    : params_(std::move(params)),
      weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
    if (!(beta1_ >= 0.0 && beta1_ < 1.0 && beta2_ >= 0.0 && beta2_ < 1.0)) {
        throw ValueError("betas must lie in [0, 1)");
    }
    if (!(eps_ > 0.0)) throw ValueError("optimizer eps must be positive");
    if (weight_decay_ < 0.0) throw ValueError("weight decay must be nonnegative");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        m_.emplace_back(static_cast<size_t>(p.size()), 0.0);
        v_.emplace_back(static_cast<size_t>(p.size()), 0.0);
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        std::vector<double>& data = p.values();
        std::vector<double>& m = m_[i];
        std::vector<double>& v = v_[i];
        const bool has = p.has_grad();
        const std::vector<double>* grad = has ? &p.grad() : nullptr;
        for (size_t j = 0; j < data.size(); ++j) {
            const double g = has ? (*grad)[j] : 0.0;
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            data[j] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * data[j]);
        }
    }
}

void AdamW::zero_grad() {
    for (Tensor& p : params_) p.clear_grad();
}

}  // namespace vr
