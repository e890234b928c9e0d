#include "vr/resampler.hpp"

#include <cmath>

#include "vr/common.hpp"
#include "vr/ops.hpp"

namespace vr {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;

struct CrossAttnOut {
    Tensor out;          // [S, D] after output projection, before layer norm
    Tensor mean_scores;  // [S, N] scaled scores averaged over heads
};

// Multi-head cross-attention of queries over feats. The distillation map is
// the softmax of the head-averaged scores, so one canonical row-stochastic
// matrix describes all heads.
CrossAttnOut cross_attend(const Tensor& queries, const Tensor& feats, const Tensor& wk,
                          const Tensor& wv, const Tensor& wo, int heads) {
    const int dim = queries.cols();
    const int dh = dim / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor k = ops::matmul(feats, wk);
    Tensor v = ops::matmul(feats, wv);
    std::vector<Tensor> head_outs;
    Tensor score_sum;
    for (int h = 0; h < heads; ++h) {
        const int c0 = h * dh, c1 = (h + 1) * dh;
        Tensor qh = ops::slice_cols(queries, c0, c1);
        Tensor kh = ops::slice_cols(k, c0, c1);
        Tensor vh = ops::slice_cols(v, c0, c1);
        Tensor scores = ops::scale(ops::matmul_nt(qh, kh), inv_sqrt);
        score_sum = (h == 0) ? scores : ops::add(score_sum, scores);
        Tensor ah = ops::softmax_rows(scores, 1.0);
        head_outs.push_back(ops::matmul(ah, vh));
    }
    CrossAttnOut r;
    r.out = ops::matmul(ops::concat_cols(head_outs), wo);
    r.mean_scores = ops::scale(score_sum, 1.0 / heads);
    return r;
}

}  // namespace

void ResamplerConfig::validate() const {
    if (dim < 1 || heads < 1 || dim % heads != 0) {
        throw ValueError("resampler width " + std::to_string(dim) +
                         " not divisible into " + std::to_string(heads) + " heads");
    }
    if (slots < 1) throw ValueError("resampler needs at least one slot");
}

std::vector<Tensor> TeacherParams::all() {
    return {queries, wk, wv, wo, ln_gain, ln_bias};
}

std::vector<Tensor> StudentParams::all() {
    return {phi, static_queries, wk, wv, wo, ln_gain, ln_bias};
}

TeacherParams init_teacher(uint64_t seed, const ResamplerConfig& cfg) {
    cfg.validate();
    Rng rng(seed);
    TeacherParams p;
    p.queries = Tensor::randn({cfg.slots, cfg.dim}, rng, kInitStd, true);
    p.wk = Tensor::randn({cfg.dim, cfg.dim}, rng, kInitStd, true);
    p.wv = Tensor::randn({cfg.dim, cfg.dim}, rng, kInitStd, true);
    p.wo = Tensor::randn({cfg.dim, cfg.dim}, rng, kInitStd, true);
    p.ln_gain = Tensor::full({cfg.dim}, 1.0, true);
    p.ln_bias = Tensor::zeros({cfg.dim}, true);
    return p;
}

StudentParams init_student(uint64_t seed, const ResamplerConfig& cfg) {
    cfg.validate();
    Rng rng(seed);
    StudentParams p;
    p.phi = Tensor::randn({cfg.dim, cfg.dim}, rng, kInitStd, true);
    p.static_queries = Tensor::randn({cfg.slots, cfg.dim}, rng, kInitStd, true);
    p.wk = Tensor::randn({cfg.dim, cfg.dim}, rng, kInitStd, true);
    p.wv = Tensor::randn({cfg.dim, cfg.dim}, rng, kInitStd, true);
    p.wo = Tensor::randn({cfg.dim, cfg.dim}, rng, kInitStd, true);
    p.ln_gain = Tensor::full({cfg.dim}, 1.0, true);
    p.ln_bias = Tensor::zeros({cfg.dim}, true);
    return p;
}

TeacherOutput bcm_forward(const RegionFeatures& f_local, const TeacherParams& params,
                          const ResamplerConfig& cfg) {
    cfg.validate();
    if (!f_local.features.defined() || f_local.features.rows() < 1) {
        throw ValueError("teacher needs a region with at least one patch");
    }
    if (f_local.features.cols() != cfg.dim) {
        throw ShapeError("region width " + std::to_string(f_local.features.cols()) +
                         " does not match resampler width " + std::to_string(cfg.dim));
    }
    auto ca = cross_attend(params.queries, f_local.features, params.wk, params.wv, params.wo,
                           cfg.heads);
    TeacherOutput out;
    out.z = ops::layer_norm(ca.out, params.ln_gain, params.ln_bias, kLnEps);
    out.attn = ops::softmax_rows(ca.mean_scores, 1.0);
    return out;
}

StudentOutput dac_forward(const Tensor& latent_states, const FeatureMap& fmap,
                          const StudentParams& params, const ResamplerConfig& cfg) {
    cfg.validate();
    if (latent_states.rank() != 2 || latent_states.cols() != cfg.dim) {
        throw ShapeError("latent states " + Tensor::shape_str(latent_states.shape()) +
                         " do not match resampler width " + std::to_string(cfg.dim));
    }
    if (fmap.features.cols() != cfg.dim) {
        throw ShapeError("feature map width " + std::to_string(fmap.features.cols()) +
                         " does not match resampler width " + std::to_string(cfg.dim));
    }
    Tensor q_dyn = ops::matmul(latent_states, params.phi);
    auto ca = cross_attend(q_dyn, fmap.features, params.wk, params.wv, params.wo, cfg.heads);
    StudentOutput out;
    out.z = ops::layer_norm(ca.out, params.ln_gain, params.ln_bias, kLnEps);
    out.raw_logits = ca.mean_scores;
    out.attn = ops::softmax_rows(ca.mean_scores, 1.0);
    return out;
}

Tensor student_distribution(const Tensor& raw_logits, double tau) {
    return ops::softmax_rows(raw_logits, tau);
}

}  // namespace vr
