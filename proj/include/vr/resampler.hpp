#pragma once

#include <vector>

#include "vr/tensor.hpp"
#include "vr/vision.hpp"

namespace vr {

// Shared shape of the two single-layer cross-attention resamplers.
struct ResamplerConfig {
    int dim = 64;
    int heads = 8;
    int slots = 8;

    void validate() const;
    int head_dim() const { return dim / heads; }
};

// Teacher: S static learnable queries attend over the box-local features.
// Queries double as the per-head query vectors; only key/value/output
// projections exist, mirroring the score formula Q K^T / sqrt(d_head).
struct TeacherParams {
    Tensor queries;  // [S, D]
    Tensor wk, wv, wo;  // [D, D]
    Tensor ln_gain, ln_bias;  // [D]

    std::vector<Tensor> all();
};

// Student: dynamic queries phi(H) attend over the full feature map.
// static_queries is an ablation alternative to the latent states: feeding it
// through phi yields static learned queries instead of dynamic ones. It is
// untouched (and untrained) in the default configuration.
struct StudentParams {
    Tensor phi;  // [D, D], maps latent states to queries
    Tensor static_queries;  // [S, D]
    Tensor wk, wv, wo;  // [D, D]
    Tensor ln_gain, ln_bias;  // [D]

    std::vector<Tensor> all();
};

struct TeacherOutput {
    Tensor z;     // [S, D]
    Tensor attn;  // [S, N], rows sum to 1
};

struct StudentOutput {
    Tensor z;           // [S, D]
    Tensor attn;        // [S, L], rows sum to 1
    Tensor raw_logits;  // [S, L] head-averaged scores, kept for tempered softmax
};

TeacherParams init_teacher(uint64_t seed, const ResamplerConfig& cfg);
StudentParams init_student(uint64_t seed, const ResamplerConfig& cfg);

TeacherOutput bcm_forward(const RegionFeatures& f_local, const TeacherParams& params,
                          const ResamplerConfig& cfg);
StudentOutput dac_forward(const Tensor& latent_states, const FeatureMap& fmap,
                          const StudentParams& params, const ResamplerConfig& cfg);

// softmax over the retained scores with temperature tau; tau=1 reproduces
// the attention map itself
Tensor student_distribution(const Tensor& raw_logits, double tau);

}  // namespace vr
