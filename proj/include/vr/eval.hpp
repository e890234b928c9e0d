#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "vr/data.hpp"
#include "vr/model.hpp"
#include "vr/train.hpp"

namespace vr {

struct EvalOptions {
    bool with_attention = true;  // ignored when the model has no latent slots
    QuerySource query_source = QuerySource::LatentStates;
    uint64_t attn_seed = 1;  // per-sample query draws for random_gaussian
};

struct TaskStats {
    int total = 0;
    int correct = 0;
};

struct EvalReport {
    int samples = 0;
    double accuracy = 0;
    bool attention_evaluated = false;
    double attention_in_box = 0;   // mean over samples of in-box student mass
    double uniform_baseline = 0;   // mean over samples of box_cells / grid_cells
    std::map<std::string, TaskStats> per_task;

    nlohmann::json to_json() const;  // schema "vr-report/1"
};

// Decodes every sample with the latent rollout and closed answer alphabet;
// optionally probes the student's attention map and measures how much mass
// lands inside the ground-truth box. Deterministic regardless of thread
// count: per-sample results are reduced in index order.
EvalReport evaluate(const Model& model, const std::vector<SyntheticSample>& samples,
                    const EvalOptions& opts = {});

// Raw [S, L] attention rows as CSV (one row per slot), plus a PGM image of
// the per-slot maps stacked vertically, each rescaled to 0..255.
void export_attention_heatmap(const Model& model, const SyntheticSample& sample,
                              const std::string& csv_path, const std::string& pgm_path,
                              const EvalOptions& opts = {});

// Parameter counts grouped by block, plus the counts active at inference.
nlohmann::json param_count_report(const Model& model);

}  // namespace vr
