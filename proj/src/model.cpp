#include "vr/model.hpp"

#include <cmath>
#include <cstdlib>

#include "vr/common.hpp"
#include "vr/kernels.hpp"
#include "vr/ops.hpp"
#include "vr/rng.hpp"

namespace vr {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kMaskedScore = -1e9;

std::vector<int> iota(int n, int start = 0) {
    std::vector<int> v(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] = start + i;
    return v;
}

// 0 on and below the diagonal, a large negative constant above it. Added to
// scores before the row softmax; exp(-1e9 + s) underflows to exactly zero,
// so masked positions carry no weight at all.
Tensor causal_mask(int t) {
    Tensor mask = Tensor::zeros({t, t});
    for (int i = 0; i < t; ++i)
        for (int j = i + 1; j < t; ++j) mask.at(i, j) = kMaskedScore;
    return mask;
}

Tensor causal_self_attention(const Tensor& x, const LayerParams& p, int heads) {
    const int t = x.rows();
    const int d = x.cols();
    const int hd = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    Tensor q = ops::matmul(x, p.wq);
    Tensor k = ops::matmul(x, p.wk);
    Tensor v = ops::matmul(x, p.wv);
    Tensor mask = causal_mask(t);
    std::vector<Tensor> head_outs;
    head_outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = ops::slice_cols(q, h * hd, (h + 1) * hd);
        Tensor kh = ops::slice_cols(k, h * hd, (h + 1) * hd);
        Tensor vh = ops::slice_cols(v, h * hd, (h + 1) * hd);
        Tensor scores = ops::add(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt), mask);
        Tensor attn = ops::softmax_rows(scores, 1.0);
        head_outs.push_back(ops::matmul(attn, vh));
    }
    return ops::matmul(ops::concat_cols(head_outs), p.wo);
}

// --- value-level decode helpers -----------------------------------------
// These mirror the ops layer formula for formula (same accumulation order),
// so cached decoding agrees with a full re-forward far inside the 1e-5
// equivalence budget.

void row_matmul(const std::vector<double>& x, const Tensor& w, std::vector<double>& out) {
    out.assign(static_cast<size_t>(w.cols()), 0.0);
    kernels::matmul_nn(x.data(), w.values().data(), out.data(), 1, w.rows(), w.cols());
}

void row_layer_norm(const std::vector<double>& x, const Tensor& gain, const Tensor& bias,
                    std::vector<double>& out) {
    const size_t n = x.size();
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += x[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + kLnEps);
    out.resize(n);
    for (size_t i = 0; i < n; ++i)
        out[i] = (x[i] - mean) * inv_std * gain.at(static_cast<int>(i)) +
                 bias.at(static_cast<int>(i));
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

struct LayerCache {
    std::vector<double> keys;    // position-major [t, D]
    std::vector<double> values;  // position-major [t, D]
};

// One incremental decoder step: consumes the input embedding for `pos`,
// extends the per-layer caches, returns the post-final-norm hidden row.
std::vector<double> decode_step(const BackboneParams& backbone, const ModelConfig& config,
                                std::vector<LayerCache>& caches,
                                const std::vector<double>& embedding, int pos) {
    const int d = config.dim;
    const int heads = config.heads;
    const int hd = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    std::vector<double> h(embedding);
    for (int i = 0; i < d; ++i) h[static_cast<size_t>(i)] += backbone.pos_emb.at(pos, i);

    std::vector<double> a, q, k, v, attn_out, proj, m, inner, mlp_out;
    for (int li = 0; li < config.depth; ++li) {
        const LayerParams& lp = backbone.layers[static_cast<size_t>(li)];
        LayerCache& cache = caches[static_cast<size_t>(li)];
        row_layer_norm(h, lp.ln1_gain, lp.ln1_bias, a);
        row_matmul(a, lp.wq, q);
        row_matmul(a, lp.wk, k);
        row_matmul(a, lp.wv, v);
        cache.keys.insert(cache.keys.end(), k.begin(), k.end());
        cache.values.insert(cache.values.end(), v.begin(), v.end());
        const int t = pos + 1;
        attn_out.assign(static_cast<size_t>(d), 0.0);
        std::vector<double> scores(static_cast<size_t>(t));
        std::vector<double> weights(static_cast<size_t>(t));
        for (int hI = 0; hI < heads; ++hI) {
            const int off = hI * hd;
            for (int p = 0; p < t; ++p) {
                double s = 0.0;
                const double* kp = cache.keys.data() + static_cast<size_t>(p) * d + off;
                for (int c = 0; c < hd; ++c) s += q[static_cast<size_t>(off + c)] * kp[c];
                scores[static_cast<size_t>(p)] = s * inv_sqrt;
            }
            kernels::softmax_rows(scores.data(), weights.data(), 1, t, 1.0);
            for (int p = 0; p < t; ++p) {
                const double w = weights[static_cast<size_t>(p)];
                const double* vp = cache.values.data() + static_cast<size_t>(p) * d + off;
                for (int c = 0; c < hd; ++c) attn_out[static_cast<size_t>(off + c)] += w * vp[c];
            }
        }
        row_matmul(attn_out, lp.wo, proj);
        for (int i = 0; i < d; ++i) h[static_cast<size_t>(i)] += proj[static_cast<size_t>(i)];

        row_layer_norm(h, lp.ln2_gain, lp.ln2_bias, m);
        row_matmul(m, lp.w1, inner);
        for (size_t i = 0; i < inner.size(); ++i)
            inner[i] = gelu_scalar(inner[i] + lp.b1.at(static_cast<int>(i)));
        row_matmul(inner, lp.w2, mlp_out);
        for (int i = 0; i < d; ++i)
            h[static_cast<size_t>(i)] += mlp_out[static_cast<size_t>(i)] + lp.b2.at(i);
    }
    std::vector<double> out;
    row_layer_norm(h, backbone.lnf_gain, backbone.lnf_bias, out);
    for (double x : out)
        if (!std::isfinite(x)) throw NumericError("non-finite hidden state during decode");
    return out;
}

std::vector<double> clamp_row(std::vector<double> row, double limit) {
    for (double& x : row) x = std::min(std::max(x, -limit), limit);
    return row;
}

std::vector<double> token_embedding(const BackboneParams& backbone, int token) {
    const int d = backbone.tok_emb.cols();
    std::vector<double> row(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) row[static_cast<size_t>(i)] = backbone.tok_emb.at(token, i);
    return row;
}

LayerParams init_layer(int dim, Rng& rng) {
    const double std = 0.02;
    LayerParams p;
    p.ln1_gain = Tensor::full({dim}, 1.0, true);
    p.ln1_bias = Tensor::zeros({dim}, true);
    p.wq = Tensor::randn({dim, dim}, rng, std, true);
    p.wk = Tensor::randn({dim, dim}, rng, std, true);
    p.wv = Tensor::randn({dim, dim}, rng, std, true);
    p.wo = Tensor::randn({dim, dim}, rng, std, true);
    p.ln2_gain = Tensor::full({dim}, 1.0, true);
    p.ln2_bias = Tensor::zeros({dim}, true);
    p.w1 = Tensor::randn({dim, 4 * dim}, rng, std, true);
    p.b1 = Tensor::zeros({4 * dim}, true);
    p.w2 = Tensor::randn({4 * dim, dim}, rng, std, true);
    p.b2 = Tensor::zeros({dim}, true);
    return p;
}

}  // namespace

void ModelConfig::validate() const {
    if (depth < 1) throw ValueError("depth must be >= 1");
    if (dim < 1 || heads < 1 || dim % heads != 0)
        throw ValueError("dim must be a positive multiple of heads");
    if (latent_steps < 0) throw ValueError("latent_steps must be >= 0");
    if (max_seq < 1) throw ValueError("max_seq must be >= 1");
    if (patches < 1) throw ValueError("patches must be >= 1");
    if (clamp_limit <= 0.0) throw ValueError("clamp_limit must be positive");
    resampler().validate();
}

ResamplerConfig ModelConfig::resampler() const {
    // slots stay >= 1 so the S=0 baseline keeps a uniform checkpoint schema
    return ResamplerConfig{dim, resampler_heads, std::max(1, latent_steps)};
}

SequenceLayout build_sequence(const std::vector<int>& question_tokens,
                              const ModelConfig& config, int img_count) {
    config.validate();
    if (img_count < 1) throw ValueError("image span must be non-empty");
    for (int tok : question_tokens)
        if (tok < 0 || tok >= vocab::kSize) throw ValueError("question token id out of range");
    const int s = config.latent_steps;
    // image span + question + [sovt + S slots + eovt] + answer slot
    const int total = img_count + static_cast<int>(question_tokens.size()) +
                      (s > 0 ? s + 2 : 0) + 1;
    if (total > config.max_seq)
        throw ValueError("sequence length " + std::to_string(total) + " exceeds max_seq " +
                         std::to_string(config.max_seq));

    SequenceLayout layout;
    layout.img_count = img_count;
    layout.tokens.reserve(static_cast<size_t>(total));
    for (int i = 0; i < img_count; ++i) layout.tokens.push_back(vocab::kImg);
    for (int tok : question_tokens) layout.tokens.push_back(tok);
    if (s > 0) {
        layout.sovt_position = static_cast<int>(layout.tokens.size());
        layout.tokens.push_back(vocab::kSovt);
        for (int i = 0; i < s; ++i) {
            layout.slot_positions.push_back(static_cast<int>(layout.tokens.size()));
            layout.tokens.push_back(vocab::kLvr);
        }
        layout.eovt_position = static_cast<int>(layout.tokens.size());
        layout.tokens.push_back(vocab::kEovt);
        layout.answer_position = layout.eovt_position;
    } else {
        layout.answer_position = static_cast<int>(layout.tokens.size()) - 1;
    }
    layout.tokens.push_back(vocab::kPad);  // where the answer token would sit
    return layout;
}

Model Model::init(const ModelConfig& config, uint64_t seed) {
    config.validate();
    Model m;
    m.config = config;
    m.vision = VisionParams::init(vocab::kNumColors, vocab::kNumShapes, vocab::kNumMarkers,
                                  config.patches, config.dim, splitmix64(seed));
    Rng rng(splitmix64(seed ^ 0x6261636b626f6eULL));  // distinct stream per block
    m.backbone.tok_emb = Tensor::randn({vocab::kSize, config.dim}, rng, 0.02, true);
    m.backbone.pos_emb = Tensor::randn({config.max_seq, config.dim}, rng, 0.02, true);
    for (int i = 0; i < config.depth; ++i) m.backbone.layers.push_back(init_layer(config.dim, rng));
    m.backbone.lnf_gain = Tensor::full({config.dim}, 1.0, true);
    m.backbone.lnf_bias = Tensor::zeros({config.dim}, true);
    m.backbone.unembed = Tensor::randn({config.dim, vocab::kSize}, rng, 0.02, true);
    m.bcm = init_teacher(splitmix64(seed ^ 0x7465616368ULL), config.resampler());
    m.dac = init_student(splitmix64(seed ^ 0x73747564ULL), config.resampler());
    return m;
}

std::vector<std::pair<std::string, Tensor>> Model::named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> named;
    named.emplace_back("backbone.tok_emb", backbone.tok_emb);
    named.emplace_back("backbone.pos_emb", backbone.pos_emb);
    for (size_t i = 0; i < backbone.layers.size(); ++i) {
        const LayerParams& lp = backbone.layers[i];
        const std::string prefix = "backbone.layer" + std::to_string(i) + ".";
        named.emplace_back(prefix + "ln1_gain", lp.ln1_gain);
        named.emplace_back(prefix + "ln1_bias", lp.ln1_bias);
        named.emplace_back(prefix + "wq", lp.wq);
        named.emplace_back(prefix + "wk", lp.wk);
        named.emplace_back(prefix + "wv", lp.wv);
        named.emplace_back(prefix + "wo", lp.wo);
        named.emplace_back(prefix + "ln2_gain", lp.ln2_gain);
        named.emplace_back(prefix + "ln2_bias", lp.ln2_bias);
        named.emplace_back(prefix + "w1", lp.w1);
        named.emplace_back(prefix + "b1", lp.b1);
        named.emplace_back(prefix + "w2", lp.w2);
        named.emplace_back(prefix + "b2", lp.b2);
    }
    named.emplace_back("backbone.lnf_gain", backbone.lnf_gain);
    named.emplace_back("backbone.lnf_bias", backbone.lnf_bias);
    named.emplace_back("backbone.unembed", backbone.unembed);
    named.emplace_back("bcm.queries", bcm.queries);
    named.emplace_back("bcm.wk", bcm.wk);
    named.emplace_back("bcm.wv", bcm.wv);
    named.emplace_back("bcm.wo", bcm.wo);
    named.emplace_back("bcm.ln_gain", bcm.ln_gain);
    named.emplace_back("bcm.ln_bias", bcm.ln_bias);
    named.emplace_back("dac.phi", dac.phi);
    named.emplace_back("dac.static_queries", dac.static_queries);
    named.emplace_back("dac.wk", dac.wk);
    named.emplace_back("dac.wv", dac.wv);
    named.emplace_back("dac.wo", dac.wo);
    named.emplace_back("dac.ln_gain", dac.ln_gain);
    named.emplace_back("dac.ln_bias", dac.ln_bias);
    named.emplace_back("vision.color_table", vision.color_table);
    named.emplace_back("vision.shape_table", vision.shape_table);
    named.emplace_back("vision.marker_table", vision.marker_table);
    named.emplace_back("vision.pos_table", vision.pos_table);
    return named;
}

std::vector<Tensor> Model::trainable_for_stage(int stage) const {
    if (stage != 1 && stage != 2) throw ValueError("stage must be 1 or 2");
    std::vector<Tensor> params;
    for (const auto& [name, tensor] : named_tensors()) {
        if (name.rfind("backbone.", 0) == 0) params.push_back(tensor);
        else if (stage == 1 && name.rfind("bcm.", 0) == 0) params.push_back(tensor);
        else if (stage == 2 && name.rfind("dac.", 0) == 0) params.push_back(tensor);
    }
    return params;
}

Tensor assemble_embeddings(const Model& model, const FeatureMap& fmap,
                           const SequenceLayout& layout, const Tensor& slot_fill) {
    const int t = static_cast<int>(layout.tokens.size());
    const int s = static_cast<int>(layout.slot_positions.size());
    if (fmap.features.rows() != layout.img_count)
        throw ShapeError("feature map length does not match the image span");
    if (fmap.features.cols() != model.config.dim)
        throw ShapeError("feature width does not match model width");
    if (slot_fill.defined()) {
        if (s == 0) throw ShapeError("slot fill given but layout has no latent slots");
        if (slot_fill.rows() != s || slot_fill.cols() != model.config.dim)
            throw ShapeError("slot fill must be [" + std::to_string(s) + ", " +
                             std::to_string(model.config.dim) + "], got " +
                             Tensor::shape_str(slot_fill.shape()));
    }

    std::vector<Tensor> parts;
    parts.push_back(fmap.features);
    if (s > 0) {
        // question + start-control, then the slot block, then the tail
        parts.push_back(ops::gather_rows(
            model.backbone.tok_emb,
            std::vector<int>(layout.tokens.begin() + layout.img_count,
                             layout.tokens.begin() + layout.slot_positions.front())));
        if (slot_fill.defined()) {
            parts.push_back(slot_fill);
        } else {
            parts.push_back(ops::gather_rows(model.backbone.tok_emb,
                                             std::vector<int>(static_cast<size_t>(s), vocab::kLvr)));
        }
        parts.push_back(ops::gather_rows(
            model.backbone.tok_emb,
            std::vector<int>(layout.tokens.begin() + layout.eovt_position, layout.tokens.end())));
    } else {
        parts.push_back(ops::gather_rows(
            model.backbone.tok_emb,
            std::vector<int>(layout.tokens.begin() + layout.img_count, layout.tokens.end())));
    }
    Tensor emb = ops::concat_rows(parts);
    if (emb.rows() != t) throw ShapeError("assembled embedding length mismatch");
    return emb;
}

Tensor backbone_forward(const BackboneParams& backbone, const Tensor& embeddings,
                        const ModelConfig& config) {
    const int t = embeddings.rows();
    if (t > config.max_seq) throw ValueError("sequence longer than max_seq");
    if (embeddings.cols() != config.dim) throw ShapeError("embedding width mismatch");
    Tensor x = ops::add(embeddings, ops::gather_rows(backbone.pos_emb, iota(t)));
    for (const LayerParams& lp : backbone.layers) {
        Tensor normed = ops::layer_norm(x, lp.ln1_gain, lp.ln1_bias, kLnEps);
        x = ops::add(x, causal_self_attention(normed, lp, config.heads));
        Tensor m = ops::layer_norm(x, lp.ln2_gain, lp.ln2_bias, kLnEps);
        Tensor inner = ops::gelu(ops::add_rowvec(ops::matmul(m, lp.w1), lp.b1));
        x = ops::add(x, ops::add_rowvec(ops::matmul(inner, lp.w2), lp.b2));
    }
    return ops::layer_norm(x, backbone.lnf_gain, backbone.lnf_bias, kLnEps);
}

ForwardResult forward_teacher_forced(const Model& model, const FeatureMap& fmap,
                                     const SequenceLayout& layout, const Tensor& slot_fill) {
    Tensor emb = assemble_embeddings(model, fmap, layout, slot_fill);
    Tensor hidden = backbone_forward(model.backbone, emb, model.config);
    ForwardResult result;
    result.hidden_all = hidden;
    if (!layout.slot_positions.empty()) {
        result.latent_states =
            ops::clamp_values(ops::gather_rows(hidden, layout.slot_positions),
                              -model.config.clamp_limit, model.config.clamp_limit);
    }
    result.answer_logits =
        ops::matmul(ops::gather_rows(hidden, {layout.answer_position}), model.backbone.unembed);
    return result;
}

DecodeResult coconut_decode(const Model& model, const FeatureMap& fmap,
                            const SequenceLayout& layout,
                            const std::vector<int>& answer_alphabet) {
    const ModelConfig& config = model.config;
    if (fmap.features.rows() != layout.img_count)
        throw ShapeError("feature map length does not match the image span");
    for (int tok : answer_alphabet) {
        if (tok < 0 || tok >= vocab::kSize) throw ValueError("answer alphabet id out of range");
        if (tok == vocab::kSovt || tok == vocab::kLvr || tok == vocab::kEovt)
            throw ValueError("control tokens cannot be answers");
    }

    std::vector<LayerCache> caches(static_cast<size_t>(config.depth));
    const int s = static_cast<int>(layout.slot_positions.size());
    const int prefix_end = s > 0 ? layout.sovt_position : layout.answer_position;

    std::vector<double> hidden;
    for (int pos = 0; pos <= prefix_end; ++pos) {
        std::vector<double> emb;
        if (pos < layout.img_count) {
            emb.resize(static_cast<size_t>(config.dim));
            for (int i = 0; i < config.dim; ++i) emb[static_cast<size_t>(i)] = fmap.features.at(pos, i);
        } else {
            emb = token_embedding(model.backbone, layout.tokens[static_cast<size_t>(pos)]);
        }
        hidden = decode_step(model.backbone, config, caches, emb, pos);
    }

    DecodeResult result;
    if (s > 0) {
        // latent loop: the previous position's clamped state is the next input
        std::vector<double> latent_rows;
        latent_rows.reserve(static_cast<size_t>(s * config.dim));
        for (int i = 0; i < s; ++i) {
            std::vector<double> feed = clamp_row(hidden, config.clamp_limit);
            hidden = decode_step(model.backbone, config, caches, feed, layout.slot_positions[static_cast<size_t>(i)]);
            std::vector<double> clamped = clamp_row(hidden, config.clamp_limit);
            latent_rows.insert(latent_rows.end(), clamped.begin(), clamped.end());
        }
        result.latent_states = Tensor::from({s, config.dim}, std::move(latent_rows));
        hidden = decode_step(model.backbone, config, caches,
                             token_embedding(model.backbone, vocab::kEovt), layout.eovt_position);
    }

    std::vector<double> logits;
    row_matmul(hidden, model.backbone.unembed, logits);
    int best = -1;
    double best_score = 0.0;
    auto consider = [&](int tok) {
        const double v = logits[static_cast<size_t>(tok)];
        if (!std::isfinite(v)) throw NumericError("non-finite answer logit");
        if (best < 0 || v > best_score) {
            best = tok;
            best_score = v;
        }
    };
    if (answer_alphabet.empty()) {
        for (int tok = 0; tok < vocab::kSize; ++tok)
            if (tok != vocab::kSovt && tok != vocab::kLvr && tok != vocab::kEovt) consider(tok);
    } else {
        for (int tok : answer_alphabet) consider(tok);
    }
    result.answer = best;
    return result;
}

Tensor probe_attention(const Model& model, const Tensor& latent_states, const FeatureMap& fmap) {
    if (!latent_states.defined()) throw ValueError("no latent states to probe");
    return dac_forward(latent_states, fmap, model.dac, model.config.resampler()).attn;
}

}  // namespace vr
