// Command-line workbench: dataset generation, two-stage training with
// checkpoint/resume, evaluation reports, attention heatmap export, and
// one-axis ablation sweeps.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vr/checkpoint.hpp"
#include "vr/common.hpp"
#include "vr/eval.hpp"
#include "vr/train.hpp"

using nlohmann::json;

namespace {

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw vr::IoError("cannot open config file: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw vr::ParseError(std::string("config is not valid json: ") + e.what());
    }
}

// --set key=value; dotted keys pick a section (model., stage1., stage2.),
// bare keys land in the active stage section. Values parse as json when
// possible and fall back to plain strings (so feature_loss=mse works).
void apply_override(json& cfg, const std::string& kv, const std::string& active_section) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        throw vr::ValueError("--set expects key=value, got: " + kv);
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    for (const char* section : {"model.", "stage1.", "stage2."}) {
        if (key.rfind(section, 0) == 0) {
            std::string sec(section, std::strlen(section) - 1);
            cfg[sec][key.substr(std::strlen(section))] = value;
            return;
        }
    }
    if (key == "model_seed") {
        cfg["model_seed"] = value;
        return;
    }
    if (active_section.empty())
        throw vr::ValueError("unqualified --set key needs a stage context: " + key);
    cfg[active_section][key] = value;
}

json effective_config(const std::string& config_path, const std::vector<std::string>& sets,
                      const std::string& active_section) {
    json cfg = load_config_file(config_path);
    if (!cfg.is_object()) throw vr::ParseError("config root must be a json object");
    for (const std::string& kv : sets) apply_override(cfg, kv, active_section);
    return cfg;
}

uint64_t pick_model_seed(const json& cfg) {
    if (const char* env = std::getenv("VR_SEED")) return std::strtoull(env, nullptr, 10);
    return cfg.value("model_seed", static_cast<uint64_t>(1));
}

vr::TrainConfig stage_config(const json& cfg, int stage) {
    const char* key = stage == 1 ? "stage1" : "stage2";
    vr::TrainConfig tc =
        vr::train_config_from_json(cfg.contains(key) ? cfg.at(key) : json::object(), stage);
    if (tc.stage != stage) throw vr::ValueError("stage mismatch in config section");
    if (const char* env = std::getenv("VR_SEED")) tc.seed = std::strtoull(env, nullptr, 10);
    return tc;
}

std::vector<vr::SyntheticSample> split_samples(const vr::Dataset& ds, vr::Split split) {
    std::vector<vr::SyntheticSample> out;
    for (int i : vr::split_indices(ds, split)) out.push_back(ds.samples[i]);
    return out;
}

void finish_training(vr::Trainer& trainer, const vr::Dataset& ds, const std::string& out_path,
                     const std::string& metrics_path, bool metrics_append) {
    const int remaining = trainer.config().steps - trainer.step();
    if (remaining < 0) throw vr::ValueError("checkpoint is already past its step horizon");
    std::fprintf(stderr, "stage %d: %d steps to run (at step %d of %d)\n",
                 trainer.config().stage, remaining, trainer.step(), trainer.config().steps);
    trainer.run(ds, remaining);
    trainer.save(out_path);
    if (!metrics_path.empty())
        vr::write_metrics_csv(metrics_path, trainer.metrics(), metrics_append);
    const auto& m = trainer.metrics();
    if (!m.empty())
        std::fprintf(stderr, "final: ce=%.4f aux=%.4f total=%.4f\n", m.back().ce, m.back().aux,
                     m.back().total);
    std::fprintf(stderr, "saved %s\n", out_path.c_str());
}

struct GenArgs {
    std::string out;
    uint64_t count = 5000;
    uint64_t seed = 1;
    int grid_h = 8, grid_w = 8;
    double trap_rate = 0.8;
    std::string task_mix;
};

void run_gen(const GenArgs& a) {
    vr::GenConfig cfg;
    cfg.seed = a.seed;
    cfg.count = a.count;
    cfg.grid_h = a.grid_h;
    cfg.grid_w = a.grid_w;
    cfg.trap_rate = a.trap_rate;
    if (!a.task_mix.empty()) {
        std::istringstream ss(a.task_mix);
        std::string part;
        std::vector<double> mix;
        while (std::getline(ss, part, ',')) mix.push_back(std::stod(part));
        if (mix.size() != 3) throw vr::ValueError("--task-mix expects three comma weights");
        cfg.task_mix = {mix[0], mix[1], mix[2]};
    }
    vr::generate_dataset(a.out, cfg);
    std::fprintf(stderr, "wrote %llu samples to %s\n",
                 static_cast<unsigned long long>(a.count), a.out.c_str());
}

struct TrainArgs {
    std::string config_path, data_path, out_path, metrics_path, resume_path;
    std::vector<std::string> sets;
};

void run_train_stage1(const TrainArgs& a) {
    vr::Dataset ds = vr::load_dataset(a.data_path);
    if (!a.resume_path.empty()) {
        vr::Trainer trainer = vr::Trainer::resume(a.resume_path);
        if (trainer.config().stage != 1)
            throw vr::ValueError("checkpoint is not a stage-1 run");
        finish_training(trainer, ds, a.out_path, a.metrics_path, true);
        return;
    }
    json cfg = effective_config(a.config_path, a.sets, "stage1");
    const uint64_t seed = pick_model_seed(cfg);
    vr::ModelConfig mc = vr::model_config_from_json(
        cfg.contains("model") ? cfg.at("model") : json::object());
    vr::Trainer trainer(vr::Model::init(mc, seed), stage_config(cfg, 1), seed);
    finish_training(trainer, ds, a.out_path, a.metrics_path, false);
}

void run_train_stage2(const TrainArgs& a) {
    vr::Dataset ds = vr::load_dataset(a.data_path);
    vr::LoadedCheckpoint loaded = vr::read_checkpoint(a.resume_path);
    const int from_stage = loaded.header.value("stage", 0);
    if (from_stage == 2) {
        // continuing an interrupted stage-2 run; its stored config wins
        vr::Trainer trainer = vr::Trainer::resume(a.resume_path);
        finish_training(trainer, ds, a.out_path, a.metrics_path, true);
        return;
    }
    if (from_stage != 1)
        throw vr::ValueError("stage 2 starts from a stage-1 or stage-2 checkpoint");
    json cfg = effective_config(a.config_path, a.sets, "stage2");
    const uint64_t seed = loaded.header.value("model_seed", static_cast<uint64_t>(1));
    vr::Trainer trainer(std::move(loaded.model), stage_config(cfg, 2), seed);
    finish_training(trainer, ds, a.out_path, a.metrics_path, false);
}

struct EvalArgs {
    std::string ckpt, data_path, split = "test", report_path;
    bool no_attention = false;
    std::string query_source;
    uint64_t attn_seed = 1;
};

vr::EvalOptions eval_options(const vr::LoadedCheckpoint& loaded, const EvalArgs& a) {
    vr::EvalOptions opts;
    opts.with_attention = !a.no_attention;
    opts.attn_seed = a.attn_seed;
    // default the probe to whatever query source the checkpoint trained with
    if (loaded.header.contains("train") && loaded.header.at("train").contains("query_source"))
        opts.query_source = vr::query_source_from_name(
            loaded.header.at("train").at("query_source").get<std::string>());
    if (!a.query_source.empty())
        opts.query_source = vr::query_source_from_name(a.query_source);
    return opts;
}

void run_eval(const EvalArgs& a) {
    vr::LoadedCheckpoint loaded = vr::read_checkpoint(a.ckpt);
    vr::Dataset ds = vr::load_dataset(a.data_path);
    const vr::Split split = vr::split_from_name(a.split);
    std::vector<vr::SyntheticSample> samples = split_samples(ds, split);
    vr::EvalReport report = vr::evaluate(loaded.model, samples, eval_options(loaded, a));

    json j = report.to_json();
    j["split"] = a.split;
    j["checkpoint"] = a.ckpt;
    j["params"] = vr::param_count_report(loaded.model);
    if (!a.report_path.empty()) {
        std::ofstream out(a.report_path);
        if (!out) throw vr::IoError("cannot open report file: " + a.report_path);
        out << j.dump(2) << '\n';
    }
    std::printf("%s\n", j.dump().c_str());
    if (report.attention_evaluated)
        std::fprintf(stderr, "accuracy %.4f on %d samples; attention in box %.4f (uniform %.4f)\n",
                     report.accuracy, report.samples, report.attention_in_box,
                     report.uniform_baseline);
    else
        std::fprintf(stderr, "accuracy %.4f on %d samples\n", report.accuracy, report.samples);
}

struct ExportArgs {
    std::string ckpt, data_path, out_prefix;
    uint64_t sample_id = 0;
    std::string query_source;
    uint64_t attn_seed = 1;
};

void run_export(const ExportArgs& a) {
    vr::LoadedCheckpoint loaded = vr::read_checkpoint(a.ckpt);
    vr::Dataset ds = vr::load_dataset(a.data_path);
    const vr::SyntheticSample* sample = nullptr;
    for (const auto& s : ds.samples)
        if (s.sample_id == a.sample_id) sample = &s;
    if (!sample) throw vr::ValueError("sample id not present in dataset");
    EvalArgs ea;
    ea.query_source = a.query_source;
    ea.attn_seed = a.attn_seed;
    vr::export_attention_heatmap(loaded.model, *sample, a.out_prefix + ".csv",
                                 a.out_prefix + ".pgm", eval_options(loaded, ea));
    std::fprintf(stderr, "wrote %s.csv and %s.pgm\n", a.out_prefix.c_str(),
                 a.out_prefix.c_str());
}

struct AblateArgs {
    std::string config_path, data_path, out_path, axis;
    std::string values;  // comma separated
    std::vector<std::string> sets;
};

void run_ablate(const AblateArgs& a) {
    static const std::vector<std::string> kAxes = {"latent_steps", "bernoulli_p", "tau",
                                                   "lambda_feat", "lambda_attn", "query_source"};
    bool known = false;
    for (const auto& ax : kAxes) known = known || ax == a.axis;
    if (!known) throw vr::ValueError("unknown ablation axis: " + a.axis);

    std::vector<std::string> values;
    std::istringstream ss(a.values);
    std::string part;
    while (std::getline(ss, part, ',')) values.push_back(part);
    if (values.empty()) throw vr::ValueError("--values is empty");

    vr::Dataset ds = vr::load_dataset(a.data_path);
    std::vector<vr::SyntheticSample> test = split_samples(ds, vr::Split::Test);

    std::ofstream out(a.out_path, std::ios::out | std::ios::trunc);
    if (!out) throw vr::IoError("cannot open: " + a.out_path);
    out << "axis,value,accuracy,attention_in_box,uniform_baseline,final_ce\n";

    for (const std::string& value : values) {
        json cfg = effective_config(a.config_path, a.sets, "");
        if (a.axis == "latent_steps") cfg["model"]["latent_steps"] = std::stoi(value);
        else if (a.axis == "bernoulli_p") cfg["stage1"]["bernoulli_p"] = std::stod(value);
        else if (a.axis == "query_source") cfg["stage2"]["query_source"] = value;
        else cfg["stage2"][a.axis] = std::stod(value);

        const uint64_t seed = pick_model_seed(cfg);
        vr::ModelConfig mc = vr::model_config_from_json(
            cfg.contains("model") ? cfg.at("model") : json::object());
        std::fprintf(stderr, "[ablate %s=%s] stage 1\n", a.axis.c_str(), value.c_str());
        vr::Trainer t1(vr::Model::init(mc, seed), stage_config(cfg, 1), seed);
        t1.run(ds, t1.config().steps);
        double final_ce = t1.metrics().back().ce;

        vr::Model model = t1.model();
        if (mc.latent_steps > 0) {
            std::fprintf(stderr, "[ablate %s=%s] stage 2\n", a.axis.c_str(), value.c_str());
            vr::Trainer t2(std::move(model), stage_config(cfg, 2), seed);
            t2.run(ds, t2.config().steps);
            final_ce = t2.metrics().back().ce;
            model = t2.model();
        }

        vr::EvalOptions opts;
        opts.query_source = stage_config(cfg, 2).query_source;
        vr::EvalReport rep = vr::evaluate(model, test, opts);
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f,%.6f", a.axis.c_str(),
                      value.c_str(), rep.accuracy, rep.attention_in_box, rep.uniform_baseline,
                      final_ce);
        out << buf << '\n';
        out.flush();
        std::fprintf(stderr, "[ablate %s=%s] accuracy %.4f attention_in_box %.4f\n",
                     a.axis.c_str(), value.c_str(), rep.accuracy, rep.attention_in_box);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent visual reasoning workbench"};
    app.require_subcommand(1);

    GenArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen_cmd->add_option("--out", gen.out, "output .vrds path")->required();
    gen_cmd->add_option("--count", gen.count, "number of samples");
    gen_cmd->add_option("--seed", gen.seed, "generator seed");
    gen_cmd->add_option("--grid-h", gen.grid_h, "grid height");
    gen_cmd->add_option("--grid-w", gen.grid_w, "grid width");
    gen_cmd->add_option("--trap-rate", gen.trap_rate, "fraction with misleading context");
    gen_cmd->add_option("--task-mix", gen.task_mix, "three comma-separated task weights");

    TrainArgs t1, t2;
    CLI::App* t1_cmd = app.add_subcommand("train-stage1", "train backbone with box-teacher slots");
    t1_cmd->add_option("--config", t1.config_path, "json config file");
    t1_cmd->add_option("--data", t1.data_path, "dataset path")->required();
    t1_cmd->add_option("--out", t1.out_path, "checkpoint output path")->required();
    t1_cmd->add_option("--metrics", t1.metrics_path, "per-step csv path");
    t1_cmd->add_option("--resume", t1.resume_path, "continue a stage-1 checkpoint");
    t1_cmd->add_option("--set", t1.sets, "override config values (key=value)");

    CLI::App* t2_cmd = app.add_subcommand("train-stage2", "distill the student compressor");
    t2_cmd->add_option("--config", t2.config_path, "json config file");
    t2_cmd->add_option("--data", t2.data_path, "dataset path")->required();
    t2_cmd->add_option("--out", t2.out_path, "checkpoint output path")->required();
    t2_cmd->add_option("--metrics", t2.metrics_path, "per-step csv path");
    t2_cmd->add_option("--resume", t2.resume_path, "stage-1 checkpoint to start from, or a stage-2 checkpoint to continue")
        ->required();
    t2_cmd->add_option("--set", t2.sets, "override config values (key=value)");

    EvalArgs ev;
    CLI::App* ev_cmd = app.add_subcommand("eval", "measure accuracy and attention grounding");
    ev_cmd->add_option("--ckpt", ev.ckpt, "checkpoint path")->required();
    ev_cmd->add_option("--data", ev.data_path, "dataset path")->required();
    ev_cmd->add_option("--split", ev.split, "train / val / test");
    ev_cmd->add_option("--report", ev.report_path, "write the full json report here");
    ev_cmd->add_flag("--no-attention", ev.no_attention, "skip the attention probe");
    ev_cmd->add_option("--query-source", ev.query_source,
                       "latent_states / static_learned / random_gaussian");
    ev_cmd->add_option("--attn-seed", ev.attn_seed, "seed for random_gaussian probes");

    ExportArgs ex;
    CLI::App* ex_cmd = app.add_subcommand("export-attn", "dump one sample's attention maps");
    ex_cmd->add_option("--ckpt", ex.ckpt, "checkpoint path")->required();
    ex_cmd->add_option("--data", ex.data_path, "dataset path")->required();
    ex_cmd->add_option("--sample-id", ex.sample_id, "sample id to visualize")->required();
    ex_cmd->add_option("--out-prefix", ex.out_prefix, "writes <prefix>.csv and <prefix>.pgm")
        ->required();
    ex_cmd->add_option("--query-source", ex.query_source, "override the probe's query source");
    ex_cmd->add_option("--attn-seed", ex.attn_seed, "seed for random_gaussian probes");

    AblateArgs ab;
    CLI::App* ab_cmd = app.add_subcommand("ablate", "sweep one knob through both stages");
    ab_cmd->add_option("--config", ab.config_path, "json config file");
    ab_cmd->add_option("--data", ab.data_path, "dataset path")->required();
    ab_cmd->add_option("--axis", ab.axis,
                       "latent_steps / bernoulli_p / tau / lambda_feat / lambda_attn / query_source")
        ->required();
    ab_cmd->add_option("--values", ab.values, "comma-separated values")->required();
    ab_cmd->add_option("--out", ab.out_path, "csv of per-value results")->required();
    ab_cmd->add_option("--set", ab.sets, "override config values (key=value)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(gen_cmd)) run_gen(gen);
        else if (app.got_subcommand(t1_cmd)) run_train_stage1(t1);
        else if (app.got_subcommand(t2_cmd)) run_train_stage2(t2);
        else if (app.got_subcommand(ev_cmd)) run_eval(ev);
        else if (app.got_subcommand(ex_cmd)) run_export(ex);
        else if (app.got_subcommand(ab_cmd)) run_ablate(ab);
    } catch (const vr::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const vr::ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return 2;
    } catch (const vr::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 2;
    } catch (const vr::ShapeError& e) {
        std::fprintf(stderr, "shape error: %s\n", e.what());
        return 1;
    } catch (const vr::ValueError& e) {
        std::fprintf(stderr, "invalid argument: %s\n", e.what());
        return 1;
    }
    return 0;
}
