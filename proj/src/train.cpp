#include "vr/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vr/checkpoint.hpp"
#include "vr/common.hpp"
#include "vr/ops.hpp"

namespace vr {

namespace {

constexpr uint64_t kBatchStream = 0x62617463680a5eedULL;
constexpr uint64_t kIndicatorStream = 0x696e64696361746fULL;

std::array<uint64_t, 4> state_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4) throw ParseError("rng state must be a 4-word array");
    std::array<uint64_t, 4> s{};
    for (size_t i = 0; i < 4; ++i) s[i] = j[i].get<uint64_t>();
    return s;
}

nlohmann::json state_to_json(const std::array<uint64_t, 4>& s) {
    return nlohmann::json{s[0], s[1], s[2], s[3]};
}

}  // namespace

const char* query_source_name(QuerySource q) {
    switch (q) {
        case QuerySource::LatentStates: return "latent_states";
        case QuerySource::StaticLearned: return "static_learned";
        case QuerySource::RandomGaussian: return "random_gaussian";
    }
    throw ValueError("unknown query source");
}

QuerySource query_source_from_name(const std::string& name) {
    if (name == "latent_states") return QuerySource::LatentStates;
    if (name == "static_learned") return QuerySource::StaticLearned;
    if (name == "random_gaussian") return QuerySource::RandomGaussian;
    throw ValueError("unknown query source: " + name);
}

void TrainConfig::validate() const {
    if (stage != 1 && stage != 2) throw ValueError("stage must be 1 or 2");
    if (steps < 1) throw ValueError("steps must be positive");
    if (batch_size < 1) throw ValueError("batch_size must be positive");
    if (!(peak_lr > 0)) throw ValueError("peak_lr must be positive");
    if (!(warmup_fraction >= 0 && warmup_fraction < 1))
        throw ValueError("warmup_fraction must lie in [0, 1)");
    if (!(weight_decay >= 0)) throw ValueError("weight_decay must be non-negative");
    if (!(tau > 0)) throw ValueError("tau must be positive");
    if (!(eps > 0)) throw ValueError("eps must be positive");
    if (!(bernoulli_p >= 0 && bernoulli_p <= 1))
        throw ValueError("bernoulli_p must lie in [0, 1]");
    if (!(weights.lambda_bcm >= 0 && weights.lambda_dac >= 0 && weights.lambda_feat >= 0 &&
          weights.lambda_attn >= 0))
        throw ValueError("loss weights must be non-negative");
}

TrainConfig default_train_config(int stage) {
    if (stage != 1 && stage != 2) throw ValueError("stage must be 1 or 2");
    TrainConfig cfg;
    cfg.stage = stage;
    if (stage == 2) {
        cfg.steps = 500;
        cfg.peak_lr = 1e-3;  // half the stage-1 rate
    }
    return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    return nlohmann::json{
        {"stage", cfg.stage},
        {"steps", cfg.steps},
        {"batch_size", cfg.batch_size},
        {"peak_lr", cfg.peak_lr},
        {"warmup_fraction", cfg.warmup_fraction},
        {"weight_decay", cfg.weight_decay},
        {"seed", cfg.seed},
        {"lambda_bcm", cfg.weights.lambda_bcm},
        {"lambda_dac", cfg.weights.lambda_dac},
        {"lambda_feat", cfg.weights.lambda_feat},
        {"lambda_attn", cfg.weights.lambda_attn},
        {"tau", cfg.tau},
        {"eps", cfg.eps},
        {"bernoulli_p", cfg.bernoulli_p},
        {"clip_norm", cfg.clip_norm},
        {"feature_loss", cfg.feature_loss == FeatureLoss::MSE ? "mse" : "l1"},
        {"query_source", query_source_name(cfg.query_source)},
    };
}

TrainConfig train_config_from_json(const nlohmann::json& j, int fallback_stage) {
    if (!j.is_object()) throw ParseError("train config must be a json object");
    const int stage = j.value("stage", fallback_stage);
    TrainConfig cfg = default_train_config(stage);
    cfg.steps = j.value("steps", cfg.steps);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.peak_lr = j.value("peak_lr", cfg.peak_lr);
    cfg.warmup_fraction = j.value("warmup_fraction", cfg.warmup_fraction);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.weights.lambda_bcm = j.value("lambda_bcm", cfg.weights.lambda_bcm);
    cfg.weights.lambda_dac = j.value("lambda_dac", cfg.weights.lambda_dac);
    cfg.weights.lambda_feat = j.value("lambda_feat", cfg.weights.lambda_feat);
    cfg.weights.lambda_attn = j.value("lambda_attn", cfg.weights.lambda_attn);
    cfg.tau = j.value("tau", cfg.tau);
    cfg.eps = j.value("eps", cfg.eps);
    cfg.bernoulli_p = j.value("bernoulli_p", cfg.bernoulli_p);
    cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
    if (j.contains("feature_loss")) {
        const std::string fl = j.at("feature_loss").get<std::string>();
        if (fl == "l1") cfg.feature_loss = FeatureLoss::L1;
        else if (fl == "mse") cfg.feature_loss = FeatureLoss::MSE;
        else throw ParseError("feature_loss must be 'l1' or 'mse'");
    }
    if (j.contains("query_source"))
        cfg.query_source = query_source_from_name(j.at("query_source").get<std::string>());
    cfg.validate();
    return cfg;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                       bool append) {
    std::ofstream out(path, append ? (std::ios::out | std::ios::app)
                                   : (std::ios::out | std::ios::trunc));
    if (!out) throw IoError("cannot open metrics file: " + path);
    if (!append) out << "step,stage,ce,aux,total,indicator\n";
    char buf[128];
    for (const MetricsRow& r : rows) {
        out << r.step << ',' << r.stage << ',';
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", r.ce, r.aux, r.total);
        out << buf << ',' << r.indicator << '\n';
    }
    if (!out) throw IoError("failed writing metrics file: " + path);
}

Trainer::Trainer(Model model, TrainConfig config, uint64_t model_seed)
    : model_(std::move(model)),
      config_(config),
      model_seed_(model_seed),
      opt_({}, config.weight_decay),
      sampler_(config.bernoulli_p, splitmix64(config.seed ^ kIndicatorStream)),
      rng_(splitmix64(config.seed ^ kBatchStream)) {
    config_.validate();
    model_.config.validate();
    std::vector<Tensor> params;
    for (auto& [name, tensor] : trainable_named()) {
        (void)name;
        params.push_back(tensor);
    }
    opt_ = AdamW(std::move(params), config_.weight_decay);
}

std::vector<std::pair<std::string, Tensor>> Trainer::trainable_named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (auto& [name, tensor] : model_.named_tensors()) {
        const bool backbone = name.rfind("backbone.", 0) == 0;
        const bool bcm = name.rfind("bcm.", 0) == 0;
        const bool dac = name.rfind("dac.", 0) == 0;
        bool take = backbone;
        if (config_.stage == 1) take = take || bcm;
        if (config_.stage == 2) take = take || dac;
        // the static query matrix only participates when it is in use,
        // otherwise weight decay would silently walk an inert parameter
        if (name == "dac.static_queries" && config_.query_source != QuerySource::StaticLearned)
            take = false;
        if (take) out.emplace_back(name, tensor);
    }
    return out;
}

Trainer::SampleLosses Trainer::sample_losses(const SyntheticSample& sample, bool indicator) {
    const ModelConfig& mc = model_.config;
    const int s_steps = mc.latent_steps;
    FeatureMap fmap = encode_image(sample.image, model_.vision);
    SequenceLayout layout = build_sequence(sample.question, mc, sample.image.patches());

    SampleLosses out;
    if (s_steps == 0) {
        // baseline: no latent segment, plain answer prediction
        ForwardResult fwd = forward_teacher_forced(model_, fmap, layout, Tensor());
        Tensor ce = cross_entropy_answer(fwd.answer_logits, sample.answer);
        out.ce = ce.item();
        out.aux = 0.0;
        out.total = ce;
        return out;
    }

    const ResamplerConfig rcfg = mc.resampler();
    if (config_.stage == 1) {
        // teacher-forced slots: the box-compressed summaries drive the
        // backbone, and the alignment term pulls slot states toward them
        RegionFeatures region = roi_gather(fmap, sample.gt_box);
        TeacherOutput teacher = bcm_forward(region, model_.bcm, rcfg);
        ForwardResult fwd = forward_teacher_forced(model_, fmap, layout, teacher.z);
        Tensor ce = cross_entropy_answer(fwd.answer_logits, sample.answer);
        Tensor aux;
        if (config_.weights.lambda_bcm != 0) {
            Tensor z_t = ops::clamp_values(teacher.z, -mc.clamp_limit, mc.clamp_limit);
            aux = bcm_alignment_loss(z_t, fwd.latent_states, indicator);
        } else {
            aux = Tensor::scalar(0.0);  // keep the graph free of the loss entirely
        }
        out.ce = ce.item();
        out.aux = aux.item();
        out.total = stage_loss(ce, aux, 1, config_.weights);
        return out;
    }

    // stage 2: first pass reads raw slot embeddings to produce the latent
    // states, the student compresses the full map under their guidance, and
    // the second pass answers from the student's summaries
    RegionFeatures region = roi_gather(fmap, sample.gt_box);
    TeacherOutput teacher = bcm_forward(region, model_.bcm, rcfg);
    ForwardResult probe = forward_teacher_forced(model_, fmap, layout, Tensor());

    Tensor queries;
    switch (config_.query_source) {
        case QuerySource::LatentStates: queries = probe.latent_states; break;
        case QuerySource::StaticLearned: queries = model_.dac.static_queries; break;
        case QuerySource::RandomGaussian:
            queries = Tensor::randn({s_steps, mc.dim}, rng_, 1.0);
            break;
    }
    StudentOutput student = dac_forward(queries, fmap, model_.dac, rcfg);

    Tensor aux;
    if (config_.weights.lambda_feat == 0 && config_.weights.lambda_attn == 0) {
        aux = Tensor::scalar(0.0);
    } else {
        Tensor a_hat = project_teacher_attention(
            Tensor::from({s_steps, static_cast<int>(region.indices.size())},
                         teacher.attn.values()),
            region.indices, fmap.grid_h * fmap.grid_w);
        Tensor dist = student_distribution(student.raw_logits, config_.tau);
        aux = dac_loss(student.z, teacher.z, a_hat, dist, config_.weights, config_.eps,
                       config_.feature_loss);
    }

    ForwardResult fwd = forward_teacher_forced(model_, fmap, layout, student.z);
    Tensor ce = cross_entropy_answer(fwd.answer_logits, sample.answer);
    out.ce = ce.item();
    out.aux = aux.item();
    out.total = stage_loss(ce, aux, 2, config_.weights);
    return out;
}

void Trainer::run(const Dataset& data, int steps) {
    if (steps < 0) throw ValueError("steps must be non-negative");
    if (step_ + steps > config_.steps)
        throw ValueError("run would pass the configured step horizon");
    const std::vector<int> train_idx = split_indices(data, Split::Train);
    if (train_idx.empty()) throw ValueError("dataset has no training samples");

    for (int k = 0; k < steps; ++k) {
        const double lr =
            lr_schedule(step_, config_.steps, config_.peak_lr, config_.warmup_fraction);
        // the indicator is drawn every stage-1 step, before the batch, so
        // the random streams line up across configurations
        bool indicator = false;
        if (config_.stage == 1) indicator = sampler_.draw();

        opt_.zero_grad();
        double ce_sum = 0, aux_sum = 0, total_sum = 0;
        std::vector<uint64_t> batch_ids;
        batch_ids.reserve(config_.batch_size);
        for (int b = 0; b < config_.batch_size; ++b) {
            const int pick = train_idx[rng_.below(static_cast<int>(train_idx.size()))];
            const SyntheticSample& sample = data.samples[pick];
            batch_ids.push_back(sample.sample_id);
            SampleLosses losses = sample_losses(sample, indicator);
            ops::scale(losses.total, 1.0 / config_.batch_size).backward();
            ce_sum += losses.ce;
            aux_sum += losses.aux;
            total_sum += losses.total.item();
        }
        const double ce = ce_sum / config_.batch_size;
        const double aux = aux_sum / config_.batch_size;
        const double total = total_sum / config_.batch_size;
        if (!std::isfinite(total) || !std::isfinite(ce) || !std::isfinite(aux)) {
            std::ostringstream msg;
            msg << "non-finite loss at stage " << config_.stage << " step " << step_
                << " (ce=" << ce << ", aux=" << aux << ", total=" << total << "); batch ids:";
            for (uint64_t id : batch_ids) msg << ' ' << id;
            throw NumericError(msg.str());
        }

        std::vector<Tensor> params = opt_.params();
        clip_global_norm(params, config_.clip_norm);
        opt_.step(lr);

        MetricsRow row;
        row.step = step_;
        row.stage = config_.stage;
        row.ce = ce;
        row.aux = aux;
        row.total = total;
        row.indicator = config_.stage == 1 ? (indicator ? 1 : 0) : -1;
        metrics_.push_back(row);
        ++step_;
    }
}

std::vector<MetricsRow> Trainer::take_metrics() {
    std::vector<MetricsRow> out;
    out.swap(metrics_);
    return out;
}

void Trainer::save(const std::string& path) {
    nlohmann::json header;
    header["schema"] = "vr-ckpt/1";
    header["stage"] = config_.stage;
    header["step"] = step_;
    header["model"] = model_config_to_json(model_.config);
    header["model_seed"] = model_seed_;
    header["train"] = train_config_to_json(config_);
    header["rng_trainer"] = state_to_json(rng_.state());
    header["rng_sampler"] = state_to_json(sampler_.rng.state());
    header["opt_steps"] = opt_.step_count();

    // moment buffers ride along under reserved name prefixes
    auto named = trainable_named();
    std::vector<NamedTensor> extra;
    extra.reserve(named.size() * 2);
    for (size_t i = 0; i < named.size(); ++i) {
        const Tensor& p = named[i].second;
        extra.push_back(NamedTensor{"opt.m." + named[i].first, p.shape(),
                                    opt_.first_moments()[i]});
        extra.push_back(NamedTensor{"opt.v." + named[i].first, p.shape(),
                                    opt_.second_moments()[i]});
    }
    write_checkpoint(path, model_, header, extra);
    // the writer quantized the copies; mirror that into the live moments so
    // continuing in-process matches reloading the file
    for (size_t i = 0; i < named.size(); ++i) {
        opt_.first_moments()[i] = extra[2 * i].values;
        opt_.second_moments()[i] = extra[2 * i + 1].values;
    }
}

Trainer Trainer::resume(const std::string& checkpoint_path) {
    LoadedCheckpoint loaded = read_checkpoint(checkpoint_path);
    if (!loaded.header.contains("train"))
        throw ParseError("checkpoint has no training section, cannot resume");
    TrainConfig cfg =
        train_config_from_json(loaded.header.at("train"), loaded.header.value("stage", 1));
    const uint64_t model_seed = loaded.header.value("model_seed", static_cast<uint64_t>(0));

    Trainer t(std::move(loaded.model), cfg, model_seed);
    t.step_ = loaded.header.value("step", 0);
    t.opt_.set_step_count(loaded.header.value("opt_steps", static_cast<int64_t>(0)));
    if (loaded.header.contains("rng_trainer"))
        t.rng_.set_state(state_from_json(loaded.header.at("rng_trainer")));
    if (loaded.header.contains("rng_sampler"))
        t.sampler_.rng.set_state(state_from_json(loaded.header.at("rng_sampler")));

    auto named = t.trainable_named();
    for (size_t i = 0; i < named.size(); ++i) {
        auto m_it = loaded.extra.find("opt.m." + named[i].first);
        auto v_it = loaded.extra.find("opt.v." + named[i].first);
        if (m_it == loaded.extra.end() || v_it == loaded.extra.end())
            throw ParseError("optimizer state missing for: " + named[i].first);
        if (m_it->second.values.size() != t.opt_.first_moments()[i].size() ||
            v_it->second.values.size() != t.opt_.second_moments()[i].size())
            throw ParseError("optimizer state size mismatch for: " + named[i].first);
        t.opt_.first_moments()[i] = m_it->second.values;
        t.opt_.second_moments()[i] = v_it->second.values;
    }
    return t;
}

}  // namespace vr
