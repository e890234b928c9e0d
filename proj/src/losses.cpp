#include "vr/losses.hpp"

#include <cmath>

#include "vr/common.hpp"
#include "vr/ops.hpp"

namespace vr {

AlignmentSampler::AlignmentSampler(double prob, uint64_t seed) : p(prob), rng(seed) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ValueError("alignment probability must lie in [0,1], got " + std::to_string(p));
    }
}

bool AlignmentSampler::draw() {
    return rng.bernoulli(p);
}

Tensor bcm_alignment_loss(const Tensor& z_t, const Tensor& h, bool indicator) {
    if (z_t.shape() != h.shape()) {
        throw ShapeError("alignment loss shape mismatch " + Tensor::shape_str(z_t.shape()) +
                         " vs " + Tensor::shape_str(h.shape()));
    }
    Tensor diff = indicator ? ops::sub(ops::stop_gradient(z_t), h)
                            : ops::sub(z_t, ops::stop_gradient(h));
    return ops::mean_all(ops::abs_elems(diff));
}

Tensor project_teacher_attention(const Tensor& a_t, const std::vector<int>& indices,
                                 int grid_len) {
    const int s = a_t.rows(), n = a_t.cols();
    if (static_cast<int>(indices.size()) != n) {
        throw ShapeError("projection: " + std::to_string(indices.size()) +
                         " indices for " + std::to_string(n) + " attention columns");
    }
    std::vector<char> seen(static_cast<size_t>(grid_len), 0);
    for (int j : indices) {
        if (j < 0 || j >= grid_len) {
            throw ValueError("projection index " + std::to_string(j) + " outside grid of " +
                             std::to_string(grid_len));
        }
        if (seen[static_cast<size_t>(j)]) {
            throw ValueError("duplicate projection index " + std::to_string(j));
        }
        seen[static_cast<size_t>(j)] = 1;
    }
    Tensor out = Tensor::zeros({s, grid_len});
    for (int i = 0; i < s; ++i) {
        for (int k = 0; k < n; ++k) {
            out.at(i, indices[static_cast<size_t>(k)]) = a_t.at(i, k);
        }
    }
    return out;
}

Tensor attention_kl(const Tensor& a_hat_t, const Tensor& student_dist, double eps) {
    if (a_hat_t.shape() != student_dist.shape()) {
        throw ShapeError("attention kl shape mismatch " + Tensor::shape_str(a_hat_t.shape()) +
                         " vs " + Tensor::shape_str(student_dist.shape()));
    }
    if (!(eps > 0.0)) throw ValueError("attention kl eps must be positive");
    auto check_rows = [&](const Tensor& t, const char* what) {
        const int m = t.rows(), n = t.cols();
        for (int i = 0; i < m; ++i) {
            double sum = 0.0;
            for (int j = 0; j < n; ++j) {
                const double v = t.at(i, j);
                if (v < 0.0) {
                    throw ValueError(std::string(what) + " attention has a negative entry");
                }
                sum += v;
            }
            if (std::fabs(sum - 1.0) > 1e-6) {
                throw ValueError(std::string(what) + " attention row " + std::to_string(i) +
                                 " is not normalized");
            }
        }
    };
    check_rows(a_hat_t, "target");
    check_rows(student_dist, "student");
    return ops::kl_shifted(a_hat_t, student_dist, eps);
}

Tensor dac_loss(const Tensor& z_s, const Tensor& z_t, const Tensor& a_hat_t,
                const Tensor& student_dist, const LossWeights& weights, double eps,
                FeatureLoss feature_loss) {
    Tensor diff = ops::sub(z_s, ops::stop_gradient(z_t));
    Tensor feat = (feature_loss == FeatureLoss::L1) ? ops::mean_all(ops::abs_elems(diff))
                                                    : ops::mean_all(ops::mul(diff, diff));
    Tensor attn = attention_kl(a_hat_t, student_dist, eps);
    return ops::add(ops::scale(feat, weights.lambda_feat), ops::scale(attn, weights.lambda_attn));
}

Tensor stage_loss(const Tensor& ce, const Tensor& aux, int stage, const LossWeights& weights) {
    if (stage == 1) return ops::add(ce, ops::scale(aux, weights.lambda_bcm));
    if (stage == 2) return ops::add(ce, ops::scale(aux, weights.lambda_dac));
    throw ValueError("stage must be 1 or 2, got " + std::to_string(stage));
}

Tensor cross_entropy_answer(const Tensor& logits, int target) {
    if (logits.rows() != 1) {
        throw ShapeError("answer logits must be a single row, got " +
                         Tensor::shape_str(logits.shape()));
    }
    return ops::cross_entropy_logits(logits, {target});
}

}  // namespace vr
