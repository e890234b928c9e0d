#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vr/data.hpp"
#include "vr/losses.hpp"
#include "vr/model.hpp"
#include "vr/optim.hpp"

namespace vr {

// Where the student's queries come from during stage-2 training (and during
// attention probes at eval time). The default reads the live latent states;
// the other two are ablation settings.
enum class QuerySource { LatentStates, StaticLearned, RandomGaussian };

const char* query_source_name(QuerySource q);
QuerySource query_source_from_name(const std::string& name);

struct TrainConfig {
    int stage = 1;
    int steps = 1500;
    int batch_size = 8;
    double peak_lr = 2e-3;
    double warmup_fraction = 0.03;
    double weight_decay = 0.1;
    uint64_t seed = 1;  // batching, the alignment indicator, random queries
    LossWeights weights;
    double tau = 2.0;          // distillation temperature on the student map
    double eps = 1e-8;         // KL shift
    double bernoulli_p = 0.5;  // alignment indicator rate (stage 1)
    double clip_norm = 1.0;    // global grad-norm ceiling; <= 0 disables
    FeatureLoss feature_loss = FeatureLoss::L1;
    QuerySource query_source = QuerySource::LatentStates;

    void validate() const;
};

// Stage presets; stage 2 runs shorter and at half the peak rate.
TrainConfig default_train_config(int stage);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
// Missing keys fall back to the defaults for the stage recorded in `j`
// (or `fallback_stage` when the json carries no stage).
TrainConfig train_config_from_json(const nlohmann::json& j, int fallback_stage = 1);

struct MetricsRow {
    int step = 0;
    int stage = 0;
    double ce = 0;
    double aux = 0;
    double total = 0;
    int indicator = -1;  // 0/1 in stage 1, -1 when no draw happened
};

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                       bool append = false);

// Owns the model, the optimizer over the stage's trainable set, and the RNG
// streams. One step: draw the stage-1 indicator, sample a batch uniformly
// from the train split, accumulate mean gradients sample by sample, clip,
// and apply AdamW under the warmup+cosine schedule.
class Trainer {
  public:
    Trainer(Model model, TrainConfig config, uint64_t model_seed);

    // Continues a run from its own checkpoint: parameters, optimizer
    // moments, RNG streams, and the step counter all restored.
    static Trainer resume(const std::string& checkpoint_path);

    // Runs `steps` more optimization steps (step_ + steps must stay within
    // config.steps so the schedule is well defined). Metrics rows append.
    void run(const Dataset& data, int steps);

    void save(const std::string& path);

    Model& model() { return model_; }
    const Model& model() const { return model_; }
    const TrainConfig& config() const { return config_; }
    uint64_t model_seed() const { return model_seed_; }
    int step() const { return step_; }
    const std::vector<MetricsRow>& metrics() const { return metrics_; }
    std::vector<MetricsRow> take_metrics();

    // Stage trainables with their checkpoint names, in checkpoint order.
    // static_queries only trains when it is the active query source.
    std::vector<std::pair<std::string, Tensor>> trainable_named() const;

  private:
    struct SampleLosses {
        Tensor total;
        double ce = 0, aux = 0;
    };
    SampleLosses sample_losses(const SyntheticSample& sample, bool indicator);

    Model model_;
    TrainConfig config_;
    uint64_t model_seed_;
    AdamW opt_;
    AlignmentSampler sampler_;
    Rng rng_;
    int step_ = 0;
    std::vector<MetricsRow> metrics_;
};

}  // namespace vr
