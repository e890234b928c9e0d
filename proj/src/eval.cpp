#include "vr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>

#include "vr/common.hpp"
#include "vr/rng.hpp"

namespace vr {

namespace {

// query rows handed to the attention probe, mirroring the training-time
// query source so the metric describes the configuration that was trained
Tensor probe_queries(const Model& model, const Tensor& decoded_latents, const EvalOptions& opts,
                     uint64_t sample_id) {
    switch (opts.query_source) {
        case QuerySource::LatentStates: return decoded_latents;
        case QuerySource::StaticLearned: return model.dac.static_queries;
        case QuerySource::RandomGaussian: {
            Rng rng(splitmix64(opts.attn_seed ^ sample_id));
            return Tensor::randn({std::max(1, model.config.latent_steps), model.config.dim},
                                 rng, 1.0);
        }
    }
    throw ValueError("unknown query source");
}

double in_box_mass(const Tensor& attn, const std::vector<int>& box_indices) {
    const int s = attn.rows();
    double mean = 0;
    for (int i = 0; i < s; ++i) {
        double row = 0;
        for (int j : box_indices) row += attn.at(i, j);
        mean += row;
    }
    return mean / s;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
    nlohmann::json per;
    for (const auto& [name, st] : per_task) {
        per[name] = {{"total", st.total},
                     {"correct", st.correct},
                     {"accuracy", st.total ? static_cast<double>(st.correct) / st.total : 0.0}};
    }
    nlohmann::json j{
        {"schema", "vr-report/1"},
        {"samples", samples},
        {"accuracy", accuracy},
        {"per_task", per},
    };
    if (attention_evaluated) {
        j["attention_in_box"] = attention_in_box;
        j["uniform_baseline"] = uniform_baseline;
    }
    return j;
}

EvalReport evaluate(const Model& model, const std::vector<SyntheticSample>& samples,
                    const EvalOptions& opts) {
    model.config.validate();
    const int n = static_cast<int>(samples.size());
    const bool do_attn = opts.with_attention && model.config.latent_steps > 0;

    std::vector<int> hit(n, 0);
    std::vector<double> in_box(n, 0.0), uniform(n, 0.0);
    std::vector<std::exception_ptr> errors(n);

#ifdef VR_OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int i = 0; i < n; ++i) {
        try {
            const SyntheticSample& s = samples[i];
            FeatureMap fmap = encode_image(s.image, model.vision);
            SequenceLayout layout = build_sequence(s.question, model.config, s.image.patches());
            DecodeResult dec =
                coconut_decode(model, fmap, layout, vocab::answer_tokens(s.task));
            hit[i] = dec.answer == s.answer ? 1 : 0;
            if (do_attn) {
                Tensor queries = probe_queries(model, dec.latent_states, opts, s.sample_id);
                Tensor attn = probe_attention(model, queries, fmap);
                std::vector<int> box = box_to_patch_indices(s.gt_box, fmap.grid_h, fmap.grid_w);
                in_box[i] = in_box_mass(attn, box);
                uniform[i] = static_cast<double>(box.size()) /
                             (static_cast<double>(fmap.grid_h) * fmap.grid_w);
            }
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (int i = 0; i < n; ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);

    EvalReport report;
    report.samples = n;
    report.attention_evaluated = do_attn;
    int correct = 0;
    double box_sum = 0, unif_sum = 0;
    for (int i = 0; i < n; ++i) {
        correct += hit[i];
        box_sum += in_box[i];
        unif_sum += uniform[i];
        TaskStats& st = report.per_task[vocab::task_name(samples[i].task)];
        st.total += 1;
        st.correct += hit[i];
    }
    report.accuracy = n ? static_cast<double>(correct) / n : 0.0;
    if (do_attn && n) {
        report.attention_in_box = box_sum / n;
        report.uniform_baseline = unif_sum / n;
    }
    return report;
}

void export_attention_heatmap(const Model& model, const SyntheticSample& sample,
                              const std::string& csv_path, const std::string& pgm_path,
                              const EvalOptions& opts) {
    if (model.config.latent_steps == 0)
        throw ValueError("model has no latent slots, nothing to export");
    FeatureMap fmap = encode_image(sample.image, model.vision);
    SequenceLayout layout = build_sequence(sample.question, model.config, sample.image.patches());
    DecodeResult dec = coconut_decode(model, fmap, layout, vocab::answer_tokens(sample.task));
    Tensor queries = probe_queries(model, dec.latent_states, opts, sample.sample_id);
    Tensor attn = probe_attention(model, queries, fmap);
    const int s = attn.rows(), l = attn.cols();

    std::ofstream csv(csv_path, std::ios::out | std::ios::trunc);
    if (!csv) throw IoError("cannot open: " + csv_path);
    char buf[64];
    for (int i = 0; i < s; ++i) {
        for (int j = 0; j < l; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", attn.at(i, j));
            csv << buf << (j + 1 < l ? "," : "\n");
        }
    }
    if (!csv) throw IoError("failed writing: " + csv_path);

    // slot maps stacked vertically, each rescaled to its own 0..255 range
    std::ofstream pgm(pgm_path, std::ios::out | std::ios::trunc);
    if (!pgm) throw IoError("cannot open: " + pgm_path);
    pgm << "P2\n" << fmap.grid_w << ' ' << s * fmap.grid_h << "\n255\n";
    for (int i = 0; i < s; ++i) {
        double lo = attn.at(i, 0), hi = attn.at(i, 0);
        for (int j = 0; j < l; ++j) {
            lo = std::min(lo, attn.at(i, j));
            hi = std::max(hi, attn.at(i, j));
        }
        for (int r = 0; r < fmap.grid_h; ++r) {
            for (int c = 0; c < fmap.grid_w; ++c) {
                int v = 0;
                if (hi > lo)
                    v = static_cast<int>(
                        std::lround((attn.at(i, r * fmap.grid_w + c) - lo) / (hi - lo) * 255.0));
                pgm << v << (c + 1 < fmap.grid_w ? ' ' : '\n');
            }
        }
    }
    if (!pgm) throw IoError("failed writing: " + pgm_path);
}

nlohmann::json param_count_report(const Model& model) {
    std::map<std::string, int64_t> blocks;
    int64_t total = 0;
    for (const auto& [name, tensor] : model.named_tensors()) {
        const std::string block = name.substr(0, name.find('.'));
        const int64_t n = static_cast<int64_t>(tensor.values().size());
        blocks[block] += n;
        total += n;
    }
    nlohmann::json j{{"schema", "vr-params/1"}, {"total", total}};
    for (const auto& [block, n] : blocks) j["blocks"][block] = n;
    // the compression modules never run in the decode path
    j["inference_active"] = blocks["backbone"] + blocks["vision"];
    j["inference_inactive"] = blocks["bcm"] + blocks["dac"];
    return j;
}

}  // namespace vr
