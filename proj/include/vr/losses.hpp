#pragma once

#include <vector>

#include "vr/rng.hpp"
#include "vr/tensor.hpp"

namespace vr {

struct LossWeights {
    double lambda_bcm = 0.1;
    double lambda_dac = 0.1;
    double lambda_feat = 1.0;
    double lambda_attn = 1.0;
};

enum class FeatureLoss { L1, MSE };

// One Bernoulli draw per optimization step decides which side of the
// alignment loss keeps its gradient.
struct AlignmentSampler {
    double p = 0.5;
    Rng rng;

    AlignmentSampler(double prob, uint64_t seed);
    bool draw();
};

// Mean |Z_T - H| with the gradient stochastically routed: indicator true
// trains H against a detached Z_T, false trains Z_T against a detached H.
// The value is the same either way.
Tensor bcm_alignment_loss(const Tensor& z_t, const Tensor& h, bool indicator);

// Scatters the teacher's [S, N] box attention into the [S, L] global grid:
// column k goes to global column indices[k], all other entries exactly zero.
// Built as a constant: the teacher side of the KL is never differentiated.
Tensor project_teacher_attention(const Tensor& a_t, const std::vector<int>& indices, int grid_len);

// sum_{i,j} (t+eps) * log((t+eps)/(s+eps)) over [S, L] maps
Tensor attention_kl(const Tensor& a_hat_t, const Tensor& student_dist, double eps);

// lambda_feat * dist(Z_S, sg(Z_T)) + lambda_attn * attention_kl
Tensor dac_loss(const Tensor& z_s, const Tensor& z_t, const Tensor& a_hat_t,
                const Tensor& student_dist, const LossWeights& weights, double eps,
                FeatureLoss feature_loss = FeatureLoss::L1);

// stage 1: ce + lambda_bcm * aux; stage 2: ce + lambda_dac * aux
Tensor stage_loss(const Tensor& ce, const Tensor& aux, int stage, const LossWeights& weights);

// -log softmax(logits)[target] for a single answer position
Tensor cross_entropy_answer(const Tensor& logits, int target);

}  // namespace vr
