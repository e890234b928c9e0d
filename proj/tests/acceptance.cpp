// Release gate: each criterion below prints exactly one [PASS]/[FAIL] line.
// The binary exits non-zero when any criterion fails, so the suite can run
// under ctest while a human scans the lines.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "vr/checkpoint.hpp"
#include "vr/eval.hpp"
#include "vr/gradcheck.hpp"
#include "vr/losses.hpp"
#include "vr/ops.hpp"
#include "vr/resampler.hpp"
#include "vr/train.hpp"

using namespace vr;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// deep copy: a Trainer mutates the model it is given, so branching several
// training runs off one starting point needs value-level clones
Model clone_model(const Model& src) {
    Model dst = Model::init(src.config, 0);
    auto from = src.named_tensors();
    auto to = dst.named_tensors();
    for (size_t i = 0; i < from.size(); ++i) to[i].second.values() = from[i].second.values();
    return dst;
}

Dataset make_dataset(const GenConfig& gen) {
    Dataset ds;
    ds.header.grid_h = gen.grid_h;
    ds.header.grid_w = gen.grid_w;
    ds.header.seed = gen.seed;
    ds.header.count = gen.count;
    ds.header.task_mix = gen.task_mix;
    ds.header.trap_rate = gen.trap_rate;
    for (uint64_t i = 0; i < gen.count; ++i) ds.samples.push_back(generate_sample(gen, i));
    return ds;
}

std::vector<SyntheticSample> take_split(const Dataset& ds, Split s, size_t cap) {
    std::vector<SyntheticSample> out;
    for (int i : split_indices(ds, s)) {
        out.push_back(ds.samples[i]);
        if (out.size() >= cap) break;
    }
    return out;
}

// ---------------------------------------------------------------- shared
// trained artifacts reused across the pipeline criteria
struct Shared {
    Dataset data;
    std::vector<SyntheticSample> test_samples;
    Model after_stage1;  // S=8 model, stage 1 done
    Model after_stage2;  // S=8 model, both stages done
    EvalReport report_s8;
    bool pipeline_ready = false;
    double pipeline_seconds = 0;
};

// --------------------------------------------------------- criterion 1
// finite differences confirm the analytic gradients across the op set and
// through a full model slice, within the time budget
bool criterion_gradients(Shared&, std::string& detail) {
    const double t0 = now_s();
    Rng rng(2024);
    double worst = 0;
    auto check = [&](const char* what, const std::function<double(const Tensor&)>& f,
                     const Tensor& x, double step) {
        Tensor probe = x;
        probe.clear_grad();
        // analytic gradient via a fresh graph evaluation
        f(probe);
        std::vector<double> analytic = probe.grad_values();
        std::vector<double> numeric = finite_diff_gradient(
            [&](const Tensor& v) {
                Tensor c = v;
                Tensor saved = c;  // forward value only
                double out = f(saved);
                saved.clear_grad();
                return out;
            },
            x, step);
        const double err = max_relative_error(analytic, numeric);
        worst = std::max(worst, err);
        if (err >= 1e-4) detail += std::string(" ") + what + " err " + std::to_string(err);
    };

    Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
    Tensor b = Tensor::randn({4, 5}, rng, 1.0);
    Tensor c = Tensor::randn({3, 5}, rng, 1.0);
    check("matmul-chain",
          [&](const Tensor& x) {
              Tensor loss = ops::mean_all(ops::mul(ops::matmul(x, b), c));
              loss.backward();
              return loss.item();
          },
          a, 1e-5);

    Tensor nt = Tensor::randn({5, 4}, rng, 1.0, true);
    check("matmul-nt",
          [&](const Tensor& x) {
              Tensor loss = ops::sum_all(ops::gelu(ops::matmul_nt(a, x)));
              loss.backward();
              return loss.item();
          },
          nt, 1e-5);

    Tensor sm = Tensor::randn({4, 6}, rng, 1.0, true);
    Tensor target = ops::softmax_rows(Tensor::randn({4, 6}, rng, 1.0), 1.0);
    check("softmax-kl",
          [&](const Tensor& x) {
              Tensor loss = ops::kl_shifted(target, ops::softmax_rows(x, 2.0), 1e-8);
              loss.backward();
              return loss.item();
          },
          sm, 1e-5);

    Tensor ln_x = Tensor::randn({3, 8}, rng, 1.0, true);
    Tensor gain = Tensor::randn({8}, rng, 0.5, true);
    Tensor bias = Tensor::randn({8}, rng, 0.5);
    check("layer-norm-x",
          [&](const Tensor& x) {
              Tensor loss = ops::mean_all(ops::mul(ops::layer_norm(x, gain, bias, 1e-5),
                                                   ops::layer_norm(x, gain, bias, 1e-5)));
              loss.backward();
              return loss.item();
          },
          ln_x, 1e-5);
    check("layer-norm-gain",
          [&](const Tensor& g) {
              Tensor y = ops::layer_norm(ln_x, g, bias, 1e-5);
              Tensor loss = ops::mean_all(ops::mul(y, y));
              loss.backward();
              return loss.item();
          },
          gain, 1e-5);

    Tensor logits = Tensor::randn({2, 10}, rng, 1.0, true);
    check("cross-entropy",
          [&](const Tensor& x) {
              Tensor loss = ops::cross_entropy_logits(x, {3, 7});
              loss.backward();
              return loss.item();
          },
          logits, 1e-5);

    // through both compression modules
    const ResamplerConfig rcfg{8, 2, 3};
    TeacherParams teacher = init_teacher(5, rcfg);
    StudentParams student = init_student(6, rcfg);
    Tensor feats = Tensor::randn({5, 8}, rng, 1.0);
    FeatureMap fmap{feats, 1, 5};
    check("teacher-queries",
          [&](const Tensor& q) {
              TeacherParams local = teacher;
              local.queries = q;
              TeacherOutput out = bcm_forward(RegionFeatures{feats, {0, 1, 2, 3, 4}}, local, rcfg);
              Tensor loss = ops::mean_all(ops::mul(out.z, out.z));
              loss.backward();
              return loss.item();
          },
          teacher.queries, 1e-5);
    Tensor h = Tensor::randn({3, 8}, rng, 1.0, true);
    Tensor kl_target = ops::softmax_rows(Tensor::randn({3, 5}, rng, 1.0), 1.0);
    check("student-latents",
          [&](const Tensor& x) {
              StudentOutput out = dac_forward(x, fmap, student, rcfg);
              Tensor loss = ops::add(
                  ops::mean_all(ops::mul(out.z, out.z)),
                  ops::kl_shifted(kl_target, student_distribution(out.raw_logits, 2.0), 1e-8));
              loss.backward();
              return loss.item();
          },
          h, 1e-5);

    // full slice: answer loss through a one-layer model w.r.t. an attention
    // projection and the slot fill
    ModelConfig mc;
    mc.depth = 1;
    mc.heads = 2;
    mc.dim = 8;
    mc.latent_steps = 2;
    mc.max_seq = 24;
    mc.patches = 4;
    mc.resampler_heads = 2;
    Model model = Model::init(mc, 77);
    GenConfig gen;
    gen.grid_h = 2;
    gen.grid_w = 2;
    gen.count = 1;
    SyntheticSample sample = generate_sample(gen, 0);
    FeatureMap sample_map = encode_image(sample.image, model.vision);
    SequenceLayout layout = build_sequence(sample.question, mc, 4);
    // the answer loss sits near ln(vocab), so central differences on weights
    // with near-zero gradient need a larger step to keep cancellation noise
    // under the relative-error floor; the objective is smooth, truncation
    // error at this step measures ~1e-5
    check("model-wq",
          [&](const Tensor& wq) {
              Model local = model;
              local.backbone.layers[0].wq = wq;
              Tensor fill = Tensor::zeros({2, 8});
              ForwardResult fwd = forward_teacher_forced(local, sample_map, layout, fill);
              Tensor loss = cross_entropy_answer(fwd.answer_logits, sample.answer);
              loss.backward();
              return loss.item();
          },
          model.backbone.layers[0].wq, 1e-3);
    Tensor fill = Tensor::randn({2, 8}, rng, 1.0, true);
    check("model-slot-fill",
          [&](const Tensor& x) {
              ForwardResult fwd = forward_teacher_forced(model, sample_map, layout, x);
              Tensor loss = cross_entropy_answer(fwd.answer_logits, sample.answer);
              loss.backward();
              return loss.item();
          },
          fill, 1e-3);

    const double elapsed = now_s() - t0;
    {
        std::ostringstream ss;
        ss << "worst rel err " << worst << ", " << elapsed << "s";
        detail = ss.str() + detail;
    }
    return worst < 1e-4 && elapsed < 120.0;
}

// --------------------------------------------------------- criterion 2
// both attention modules agree with an independent straight-loop oracle

void oracle_softmax_row(std::vector<double>& row) {
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double sum = 0;
    for (double& v : row) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : row) v /= sum;
}

struct OracleOut {
    std::vector<std::vector<double>> z, attn, raw;
};

// shared math of both modules: per-head attention for the output path plus
// head-averaged scores for the distillation map, then Wo and layer norm
OracleOut oracle_resampler(const std::vector<std::vector<double>>& queries,
                           const std::vector<std::vector<double>>& feats,
                           const std::vector<std::vector<double>>& wk,
                           const std::vector<std::vector<double>>& wv,
                           const std::vector<std::vector<double>>& wo,
                           const std::vector<double>& ln_g, const std::vector<double>& ln_b,
                           int heads) {
    const int s = static_cast<int>(queries.size());
    const int n = static_cast<int>(feats.size());
    const int d = static_cast<int>(queries[0].size());
    const int hd = d / heads;
    auto matvec = [&](const std::vector<std::vector<double>>& m,
                      const std::vector<double>& x) {
        std::vector<double> y(m[0].size(), 0.0);
        for (size_t i = 0; i < m.size(); ++i)
            for (size_t j = 0; j < y.size(); ++j) y[j] += x[i] * m[i][j];
        return y;
    };
    std::vector<std::vector<double>> keys(n), vals(n);
    for (int i = 0; i < n; ++i) {
        keys[i] = matvec(wk, feats[i]);
        vals[i] = matvec(wv, feats[i]);
    }
    OracleOut out;
    out.z.assign(s, std::vector<double>(d, 0.0));
    out.attn.assign(s, std::vector<double>(n, 0.0));
    out.raw.assign(s, std::vector<double>(n, 0.0));
    for (int i = 0; i < s; ++i) {
        std::vector<double> concat(d, 0.0);
        for (int head = 0; head < heads; ++head) {
            std::vector<double> scores(n, 0.0);
            for (int j = 0; j < n; ++j) {
                double dot = 0;
                for (int k = 0; k < hd; ++k)
                    dot += queries[i][head * hd + k] * keys[j][head * hd + k];
                scores[j] = dot / std::sqrt(static_cast<double>(hd));
                out.raw[i][j] += scores[j] / heads;
            }
            oracle_softmax_row(scores);
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < hd; ++k) concat[head * hd + k] += scores[j] * vals[j][head * hd + k];
        }
        out.attn[i] = out.raw[i];
        oracle_softmax_row(out.attn[i]);
        std::vector<double>ugly = matvec(wo, concat);
        double mean = 0;
        for (double v : ugly) mean += v;
        mean /= d;
        double var = 0;
        for (double v : ugly) var += (v - mean) * (v - mean);
        var /= d;
        for (int k = 0; k < d; ++k)
            out.z[i][k] = (ugly[k] - mean) / std::sqrt(var + 1e-5) * ln_g[k] + ln_b[k];
    }
    return out;
}

std::vector<std::vector<double>> rows_of(const Tensor& t) {
    std::vector<std::vector<double>> out(t.rows(), std::vector<double>(t.cols()));
    for (int i = 0; i < t.rows(); ++i)
        for (int j = 0; j < t.cols(); ++j) out[i][j] = t.at(i, j);
    return out;
}

bool criterion_attention_oracle(Shared&, std::string& detail) {
    Rng rng(99);
    double worst = 0;
    int trials = 0;
    for (int heads : {1, 2, 4}) {
        for (int rep = 0; rep < 6; ++rep) {
            const int d = heads * (1 + rng.below(8 / heads));
            const int s = 1 + rng.below(8);
            const int n = 1 + rng.below(8);
            ResamplerConfig cfg{d, heads, s};
            TeacherParams tp = init_teacher(rng.next_u64(), cfg);
            StudentParams sp = init_student(rng.next_u64(), cfg);
            Tensor feats = Tensor::randn({n, d}, rng, 1.0);
            Tensor h = Tensor::randn({s, d}, rng, 1.0);
            std::vector<int> idx(n);
            for (int i = 0; i < n; ++i) idx[i] = i;

            TeacherOutput t_out = bcm_forward(RegionFeatures{feats, idx}, tp, cfg);
            OracleOut t_ref = oracle_resampler(rows_of(tp.queries), rows_of(feats),
                                               rows_of(tp.wk), rows_of(tp.wv), rows_of(tp.wo),
                                               tp.ln_gain.values(), tp.ln_bias.values(), heads);
            StudentOutput s_out = dac_forward(h, FeatureMap{feats, 1, n}, sp, cfg);
            // student queries are the projected latent states
            std::vector<std::vector<double>> q = rows_of(h);
            auto phi = rows_of(sp.phi);
            std::vector<std::vector<double>> qp(s, std::vector<double>(d, 0.0));
            for (int i = 0; i < s; ++i)
                for (int k = 0; k < d; ++k)
                    for (int j = 0; j < d; ++j) qp[i][j] += q[i][k] * phi[k][j];
            OracleOut s_ref = oracle_resampler(qp, rows_of(feats), rows_of(sp.wk),
                                               rows_of(sp.wv), rows_of(sp.wo),
                                               sp.ln_gain.values(), sp.ln_bias.values(), heads);

            auto cmp = [&](const Tensor& got, const std::vector<std::vector<double>>& want) {
                for (int i = 0; i < got.rows(); ++i)
                    for (int j = 0; j < got.cols(); ++j)
                        worst = std::max(worst, std::abs(got.at(i, j) - want[i][j]));
            };
            cmp(t_out.z, t_ref.z);
            cmp(t_out.attn, t_ref.attn);
            cmp(s_out.z, s_ref.z);
            cmp(s_out.attn, s_ref.attn);
            cmp(s_out.raw_logits, s_ref.raw);
            ++trials;
        }
    }
    std::ostringstream ss;
    ss << trials << " random configs, worst abs diff " << worst;
    detail = ss.str();
    return worst <= 1e-8;
}

// --------------------------------------------------------- criterion 3
// scattering box attention into the grid conserves mass exactly
bool criterion_projection(Shared&, std::string& detail) {
    Rng rng(7);
    double worst_sum = 0;
    bool zeros_exact = true, copies_exact = true;
    for (int trial = 0; trial < 1000; ++trial) {
        const int l = 2 + rng.below(63);
        const int n = 1 + rng.below(l);
        const int s = 1 + rng.below(8);
        std::vector<int> all(l);
        for (int i = 0; i < l; ++i) all[i] = i;
        // random strictly-increasing subset of size n
        for (int i = l - 1; i > 0; --i) std::swap(all[i], all[rng.below(i + 1)]);
        std::vector<int> idx(all.begin(), all.begin() + n);
        std::sort(idx.begin(), idx.end());

        Tensor a = ops::softmax_rows(Tensor::randn({s, n}, rng, 1.0), 1.0);
        Tensor proj = project_teacher_attention(a, idx, l);
        for (int i = 0; i < s; ++i) {
            double sum = 0;
            std::vector<bool> in_region(l, false);
            for (int k = 0; k < n; ++k) {
                in_region[idx[k]] = true;
                if (proj.at(i, idx[k]) != a.at(i, k)) copies_exact = false;
            }
            for (int j = 0; j < l; ++j) {
                sum += proj.at(i, j);
                if (!in_region[j] && proj.at(i, j) != 0.0) zeros_exact = false;
            }
            worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        }
    }
    std::ostringstream ss;
    ss << "1000 trials, worst row-mass drift " << worst_sum << ", off-region zeros "
       << (zeros_exact ? "exact" : "NOT exact") << ", copies "
       << (copies_exact ? "bitwise" : "NOT bitwise");
    detail = ss.str();
    return worst_sum <= 1e-9 && zeros_exact && copies_exact;
}

// --------------------------------------------------------- criterion 4
// the stochastic alignment loss: value is branch-independent, the stopped
// side gets no gradient, and the indicator is a fair coin
bool criterion_alignment(Shared&, std::string& detail) {
    Rng rng(13);
    bool value_equal = true, routing_ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        Tensor z = Tensor::randn({4, 6}, rng, 1.0, true);
        Tensor h = Tensor::randn({4, 6}, rng, 1.0, true);
        Tensor a = bcm_alignment_loss(z, h, true);
        Tensor b = bcm_alignment_loss(z, h, false);
        if (a.item() != b.item()) value_equal = false;

        z.clear_grad();
        h.clear_grad();
        a.backward();  // indicator true: the teacher side is detached
        for (double g : z.grad_values())
            if (g != 0.0) routing_ok = false;
        bool h_live = false;
        for (double g : h.grad_values()) h_live = h_live || g != 0.0;
        routing_ok = routing_ok && h_live;

        z.clear_grad();
        h.clear_grad();
        b.backward();
        for (double g : h.grad_values())
            if (g != 0.0) routing_ok = false;
        bool z_live = false;
        for (double g : z.grad_values()) z_live = z_live || g != 0.0;
        routing_ok = routing_ok && z_live;
    }

    AlignmentSampler sampler(0.5, 123);
    int ones = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) ones += sampler.draw() ? 1 : 0;
    const double freq = static_cast<double>(ones) / draws;

    std::ostringstream ss;
    ss << "values " << (value_equal ? "equal" : "DIFFER") << ", routing "
       << (routing_ok ? "clean" : "LEAKS") << ", p=0.5 frequency " << freq;
    detail = ss.str();
    return value_equal && routing_ok && freq >= 0.48 && freq <= 0.52;
}

// --------------------------------------------------------- criterion 5
// the compression modules carry no inference-time responsibility: deleting
// their tensors from a checkpoint changes no decoded answer
bool criterion_inference_inactivity(Shared&, std::string& detail) {
    ModelConfig mc;
    mc.depth = 2;
    mc.heads = 2;
    mc.dim = 16;
    mc.latent_steps = 4;
    mc.max_seq = 48;
    mc.patches = 16;
    mc.resampler_heads = 2;
    GenConfig gen;
    gen.grid_h = 4;
    gen.grid_w = 4;
    gen.count = 5000;  // the hash split leaves roughly a tenth for testing
    gen.seed = 555;
    Dataset ds = make_dataset(gen);

    TrainConfig tc = default_train_config(1);
    tc.steps = 30;
    tc.batch_size = 4;
    Trainer trainer(Model::init(mc, 917), tc, 917);
    trainer.run(ds, 30);

    std::vector<SyntheticSample> samples = take_split(ds, Split::Test, 500);
    // top up from val if the hash split leaves test short of 500
    if (samples.size() < 500) {
        auto extra = take_split(ds, Split::Val, 500 - samples.size());
        samples.insert(samples.end(), extra.begin(), extra.end());
    }

    auto decode_all = [&](const Model& m) {
        std::vector<int> answers;
        for (const auto& s : samples) {
            FeatureMap fmap = encode_image(s.image, m.vision);
            SequenceLayout layout = build_sequence(s.question, m.config, s.image.patches());
            answers.push_back(coconut_decode(m, fmap, layout, vocab::answer_tokens(s.task)).answer);
        }
        return answers;
    };
    std::vector<int> before = decode_all(trainer.model());

    const std::string full = "/tmp/vr_accept_full.ckpt";
    const std::string cut = "/tmp/vr_accept_cut.ckpt";
    trainer.save(full);
    {
        std::ifstream in(full, std::ios::binary);
        const uint64_t hlen = read_u64(in);
        std::string header(hlen, '\0');
        in.read(header.data(), static_cast<std::streamsize>(hlen));
        std::vector<NamedTensor> kept;
        for (auto& nt : read_vrtf(in))
            if (nt.name.rfind("bcm.", 0) != 0 && nt.name.rfind("dac.", 0) != 0 &&
                nt.name.rfind("opt.", 0) != 0)
                kept.push_back(std::move(nt));
        std::ofstream out(cut, std::ios::binary | std::ios::trunc);
        write_u64(out, hlen);
        out.write(header.data(), static_cast<std::streamsize>(hlen));
        write_vrtf(out, kept);
    }
    LoadedCheckpoint stripped = read_checkpoint(cut);
    const bool blocks_gone = !stripped.has_block("bcm.") && !stripped.has_block("dac.");
    std::vector<int> after = decode_all(stripped.model);
    std::remove(full.c_str());
    std::remove(cut.c_str());

    int changed = 0;
    for (size_t i = 0; i < before.size(); ++i) changed += before[i] != after[i];

    nlohmann::json params = param_count_report(trainer.model());
    std::ostringstream ss;
    ss << samples.size() << " decodes, " << changed
       << " changed after stripping; params active " << params.at("inference_active")
       << " / inactive " << params.at("inference_inactive") << " of " << params.at("total");
    detail = ss.str();
    return changed == 0 && blocks_gone && samples.size() == 500;
}

// --------------------------------------------------------- criterion 6
// the full desk-scale pipeline: latent slots plus distilled grounding beat
// a no-slot baseline by ten accuracy points, and the student's attention
// concentrates inside the ground-truth box
bool criterion_pipeline(Shared& shared, std::string& detail) {
    const double t0 = now_s();
    GenConfig gen;  // 8x8 grid, trap rate 0.8
    gen.count = 5000;
    shared.data = make_dataset(gen);
    shared.test_samples = take_split(shared.data, Split::Test, 1u << 30);

    ModelConfig mc;  // defaults: depth 4, dim 64, 8 latent slots
    TrainConfig s1 = default_train_config(1);
    Trainer t1(Model::init(mc, 1), s1, 1);
    t1.run(shared.data, s1.steps);
    shared.after_stage1 = clone_model(t1.model());

    TrainConfig s2 = default_train_config(2);
    Trainer t2(clone_model(shared.after_stage1), s2, 1);
    t2.run(shared.data, s2.steps);
    shared.after_stage2 = clone_model(t2.model());

    ModelConfig mc0 = mc;
    mc0.latent_steps = 0;
    TrainConfig base = default_train_config(1);
    base.steps = s1.steps + s2.steps;  // same update budget, no latent segment
    Trainer tb(Model::init(mc0, 1), base, 1);
    tb.run(shared.data, base.steps);

    shared.report_s8 = evaluate(shared.after_stage2, shared.test_samples);
    EvalReport report_s0 = evaluate(tb.model(), shared.test_samples);
    const double elapsed = now_s() - t0;
    shared.pipeline_seconds = elapsed;
    shared.pipeline_ready = true;

    std::ostringstream ss;
    ss << "accuracy " << shared.report_s8.accuracy << " vs baseline " << report_s0.accuracy
       << " (need +0.10); attention in box " << shared.report_s8.attention_in_box
       << " vs uniform " << shared.report_s8.uniform_baseline << " (need 2x); "
       << shared.test_samples.size() << " test samples; " << elapsed << "s";
    detail = ss.str();
    return shared.report_s8.accuracy >= report_s0.accuracy + 0.10 &&
           shared.report_s8.attention_in_box >= 2.0 * shared.report_s8.uniform_baseline &&
           elapsed < 1800.0;
}

// --------------------------------------------------------- criterion 7
// ablation directions: random queries collapse accuracy to chance, removing
// the attention term weakens grounding, more slots do not hurt
bool criterion_ablations(Shared& shared, std::string& detail) {
    if (!shared.pipeline_ready) {
        detail = "pipeline criterion did not run";
        return false;
    }

    TrainConfig s2g = default_train_config(2);
    s2g.query_source = QuerySource::RandomGaussian;
    Trainer tg(clone_model(shared.after_stage1), s2g, 1);
    tg.run(shared.data, s2g.steps);
    EvalOptions go;
    go.query_source = QuerySource::RandomGaussian;
    EvalReport gauss = evaluate(tg.model(), shared.test_samples, go);

    TrainConfig s2n = default_train_config(2);
    s2n.weights.lambda_attn = 0.0;
    Trainer tn(clone_model(shared.after_stage1), s2n, 1);
    tn.run(shared.data, s2n.steps);
    EvalReport noattn = evaluate(tn.model(), shared.test_samples);

    ModelConfig mc1;
    mc1.latent_steps = 1;
    TrainConfig s1 = default_train_config(1);
    Trainer a1(Model::init(mc1, 1), s1, 1);
    a1.run(shared.data, s1.steps);
    TrainConfig s2 = default_train_config(2);
    Trainer a2(a1.model(), s2, 1);
    a2.run(shared.data, s2.steps);
    EvalReport single = evaluate(a2.model(), shared.test_samples);

    const double chance = 0.25;  // every question has a four-token alphabet
    const bool gauss_ok = std::abs(gauss.accuracy - chance) <= 0.05;
    const bool attn_ok = noattn.attention_in_box < shared.report_s8.attention_in_box;
    const bool slots_ok = shared.report_s8.accuracy >= single.accuracy;

    std::ostringstream ss;
    ss << "random queries " << gauss.accuracy << " (chance 0.25 +- 0.05); in-box without "
       << "attention loss " << noattn.attention_in_box << " vs " << shared.report_s8.attention_in_box
       << "; one slot " << single.accuracy << " vs eight " << shared.report_s8.accuracy;
    detail = ss.str();
    return gauss_ok && attn_ok && slots_ok;
}

// --------------------------------------------------------- criterion 8
// training is reproducible bit for bit, and an interrupted run resumed from
// its checkpoint lands on the identical file
bool criterion_determinism(Shared&, std::string& detail) {
    ModelConfig mc;
    mc.depth = 2;
    mc.heads = 2;
    mc.dim = 16;
    mc.latent_steps = 4;
    mc.max_seq = 48;
    mc.patches = 16;
    mc.resampler_heads = 2;
    GenConfig gen;
    gen.grid_h = 4;
    gen.grid_w = 4;
    gen.count = 80;
    gen.seed = 31;
    Dataset ds = make_dataset(gen);

    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };

    TrainConfig tc = default_train_config(1);
    tc.steps = 12;
    tc.batch_size = 4;
    tc.seed = 3;

    const std::string pa = "/tmp/vr_accept_da.ckpt", pb = "/tmp/vr_accept_db.ckpt";
    for (int which = 0; which < 2; ++which) {
        Trainer t(Model::init(mc, 441), tc, 441);
        t.run(ds, 12);
        t.save(which == 0 ? pa : pb);
    }
    const bool repro = slurp(pa) == slurp(pb);

    const std::string mid = "/tmp/vr_accept_mid.ckpt", fin = "/tmp/vr_accept_fin.ckpt";
    Trainer straight(Model::init(mc, 441), tc, 441);
    straight.run(ds, 6);
    straight.save(mid);
    straight.run(ds, 6);
    straight.save(fin);
    Trainer resumed = Trainer::resume(mid);
    resumed.run(ds, 6);
    const std::string fin2 = "/tmp/vr_accept_fin2.ckpt";
    resumed.save(fin2);
    const bool resume_ok = slurp(fin) == slurp(fin2);

    for (const auto& p : {pa, pb, mid, fin, fin2}) std::remove(p.c_str());
    std::ostringstream ss;
    ss << "identical reruns " << (repro ? "bitwise equal" : "DIFFER") << "; resume "
       << (resume_ok ? "bitwise equal" : "DIFFERS");
    detail = ss.str();
    return repro && resume_ok;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<bool(Shared&, std::string&)> run;
    };
    const std::vector<Criterion> criteria = {
        {"analytic gradients match finite differences", criterion_gradients},
        {"attention modules match the independent oracle", criterion_attention_oracle},
        {"box-to-grid projection conserves attention mass", criterion_projection},
        {"stochastic alignment routes gradients cleanly", criterion_alignment},
        {"compression modules are inference-inactive", criterion_inference_inactivity},
        {"latent pipeline beats the no-slot baseline with grounded attention",
         criterion_pipeline},
        {"ablations move in the expected directions", criterion_ablations},
        {"training is deterministic and resumable bitwise", criterion_determinism},
    };

    Shared shared;
    int failures = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        std::string detail;
        bool ok = false;
        const double t0 = now_s();
        try {
            ok = criteria[i].run(shared, detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] criterion %zu: %s (%.1fs) -- %s\n", ok ? "PASS" : "FAIL", i + 1,
                    criteria[i].name, now_s() - t0, detail.c_str());
        std::fflush(stdout);
        failures += ok ? 0 : 1;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures;
}
