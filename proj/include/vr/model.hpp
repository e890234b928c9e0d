#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vr/resampler.hpp"
#include "vr/tensor.hpp"
#include "vr/vision.hpp"
#include "vr/vocab.hpp"

namespace vr {

// Decoder-only toy transformer with a latent-slot segment: S reserved
// positions between control tokens whose input embeddings are substituted
// during training and refed from hidden states during decoding.
struct ModelConfig {
    int depth = 4;
    int heads = 4;
    int dim = 64;
    int latent_steps = 8;  // S; 0 disables the latent segment entirely
    int max_seq = 128;
    int patches = 64;          // feature-map length the vision tables cover
    int resampler_heads = 8;   // heads inside the two cross-attention modules
    double clamp_limit = 1e4;  // hidden-state clamp before losses and refeed

    void validate() const;
    ResamplerConfig resampler() const;
};

struct LayerParams {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, wk, wv, wo;  // [D, D], bias-free attention
    Tensor ln2_gain, ln2_bias;
    Tensor w1, b1;  // [D, 4D], [4D]
    Tensor w2, b2;  // [4D, D], [D]
};

struct BackboneParams {
    Tensor tok_emb;  // [vocab::kSize, D]
    Tensor pos_emb;  // [max_seq, D], learned absolute positions
    std::vector<LayerParams> layers;
    Tensor lnf_gain, lnf_bias;
    Tensor unembed;  // [D, vocab::kSize], untied from tok_emb
};

// Token ids plus the positions the losses and the decoder care about.
// With latent_steps == 0 the control tokens are omitted and answer_position
// falls on the last question token (plain next-token prediction).
struct SequenceLayout {
    std::vector<int> tokens;
    int img_count = 0;
    int sovt_position = -1;
    std::vector<int> slot_positions;
    int eovt_position = -1;
    int answer_position = -1;  // logits here predict the answer token
};

SequenceLayout build_sequence(const std::vector<int>& question_tokens,
                              const ModelConfig& config, int img_count);

struct Model {
    ModelConfig config;
    VisionParams vision;  // frozen lookup tables
    BackboneParams backbone;
    TeacherParams bcm;
    StudentParams dac;

    static Model init(const ModelConfig& config, uint64_t seed);

    // Stable name -> tensor listing; the ordering is the checkpoint format.
    std::vector<std::pair<std::string, Tensor>> named_tensors() const;
    // Stage 1 trains backbone + bcm, stage 2 trains backbone + dac.
    std::vector<Tensor> trainable_for_stage(int stage) const;
};

// Input embedding matrix for a layout: feature rows for the image span,
// token embeddings elsewhere, slot rows replaced by slot_fill when defined.
Tensor assemble_embeddings(const Model& model, const FeatureMap& fmap,
                           const SequenceLayout& layout, const Tensor& slot_fill);

// Full causally-masked forward; returns post-final-norm hidden states [T, D].
Tensor backbone_forward(const BackboneParams& backbone, const Tensor& embeddings,
                        const ModelConfig& config);

struct ForwardResult {
    Tensor answer_logits;  // [1, vocab::kSize]
    Tensor latent_states;  // [S, D], clamped; undefined handle when S == 0
    Tensor hidden_all;     // [T, D]
};

ForwardResult forward_teacher_forced(const Model& model, const FeatureMap& fmap,
                                     const SequenceLayout& layout,
                                     const Tensor& slot_fill);

struct DecodeResult {
    int answer = -1;
    Tensor latent_states;  // [S, D] clamped, constant; undefined when S == 0
};

// Incremental KV-cached decoding: after the prefix, each latent slot's input
// embedding is the clamped hidden state of the previous position; then the
// end-control token is fed and the answer is the argmax over answer_alphabet
// (empty alphabet: all tokens except the three control ids). The compression
// modules are never consulted here.
DecodeResult coconut_decode(const Model& model, const FeatureMap& fmap,
                            const SequenceLayout& layout,
                            const std::vector<int>& answer_alphabet);

// Student attention rows for visualization/metrics; read-only, not part of
// the decode path.
Tensor probe_attention(const Model& model, const Tensor& latent_states,
                       const FeatureMap& fmap);

}  // namespace vr
