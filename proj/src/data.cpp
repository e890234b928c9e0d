#include "vr/data.hpp"

#include <algorithm>
#include <json.hpp>

#include "vr/common.hpp"

namespace vr {

namespace {

using nlohmann::json;

BoundingBox cell_box(int r, int c, int grid_h, int grid_w) {
    BoundingBox b;
    b.x0 = static_cast<double>(c) / grid_w;
    b.x1 = static_cast<double>(c + 1) / grid_w;
    b.y0 = static_cast<double>(r) / grid_h;
    b.y1 = static_cast<double>(r + 1) / grid_h;
    return b;
}

BoundingBox union_box(const BoundingBox& a, const BoundingBox& b) {
    return {std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1),
            std::max(a.y1, b.y1)};
}

// a different id from the same alphabet
int other_id(Rng& rng, int avoid, int alphabet) {
    int v = static_cast<int>(rng.below(alphabet - 1));
    return v + (v >= avoid ? 1 : 0);
}

void check_mix(const std::array<double, 3>& mix) {
    double total = 0.0;
    for (double p : mix) {
        if (!(p >= 0.0)) throw ValueError("task mix proportions must be non-negative");
        total += p;
    }
    if (!(total > 0.0)) throw ValueError("task mix proportions sum to zero");
}

vocab::TaskKind pick_task(Rng& rng, const std::array<double, 3>& mix) {
    double total = mix[0] + mix[1] + mix[2];
    const double u = rng.uniform() * total;
    if (u < mix[0]) return vocab::TaskKind::UniqueShapeColor;
    if (u < mix[0] + mix[1]) return vocab::TaskKind::MarkedCellShape;
    return vocab::TaskKind::MarkedPairRelation;
}

// Reassigns distractor shapes until no shape other than `unique` occurs
// exactly once; otherwise "the unique shape" would be ambiguous.
void break_shape_singletons(PatchImage& img, int skip_pos, int unique) {
    const int L = img.patches();
    while (true) {
        std::array<int, vocab::kNumShapes> count{};
        for (int j = 0; j < L; ++j) {
            if (j != skip_pos) count[static_cast<size_t>(img.shape[j])]++;
        }
        int singleton = -1;
        for (int s = 0; s < vocab::kNumShapes; ++s) {
            if (s != unique && count[static_cast<size_t>(s)] == 1) singleton = s;
        }
        if (singleton < 0) return;
        int target = -1;
        for (int s = 0; s < vocab::kNumShapes; ++s) {
            if (s == unique || s == singleton) continue;
            if (target < 0 || count[static_cast<size_t>(s)] > count[static_cast<size_t>(target)])
                target = s;
        }
        for (int j = 0; j < L; ++j) {
            if (j != skip_pos && img.shape[j] == singleton) {
                img.shape[j] = target;
                break;
            }
        }
    }
}

json sample_to_json(const SyntheticSample& s) {
    json rec;
    rec["id"] = s.sample_id;
    rec["task"] = vocab::task_name(s.task);
    rec["color"] = s.image.color;
    rec["shape"] = s.image.shape;
    rec["marker"] = s.image.marker;
    rec["q"] = s.question;
    rec["a"] = s.answer;
    rec["box"] = {s.gt_box.x0, s.gt_box.y0, s.gt_box.x1, s.gt_box.y1};
    return rec;
}

}  // namespace

SyntheticSample generate_sample(const GenConfig& cfg, uint64_t sample_id) {
    if (cfg.grid_h < 2 || cfg.grid_w < 2) throw ValueError("grid must be at least 2x2");
    check_mix(cfg.task_mix);
    Rng rng(cfg.seed ^ sample_id);

    SyntheticSample s;
    s.sample_id = sample_id;
    s.task = pick_task(rng, cfg.task_mix);
    const int gh = cfg.grid_h, gw = cfg.grid_w, L = gh * gw;
    PatchImage& img = s.image;
    img.grid_h = gh;
    img.grid_w = gw;
    img.color.assign(static_cast<size_t>(L), 0);
    img.shape.assign(static_cast<size_t>(L), 0);
    img.marker.assign(static_cast<size_t>(L), 0);

    const bool trapped = rng.bernoulli(cfg.trap_rate);

    switch (s.task) {
        case vocab::TaskKind::UniqueShapeColor: {
            const int us = static_cast<int>(rng.below(vocab::kNumShapes));
            const int ac = static_cast<int>(rng.below(vocab::kNumColors));
            const int upos = static_cast<int>(rng.below(L));
            // trap: flood distractors with a dominant color that is not the
            // answer, so a majority-color vote misses
            const int dc = trapped ? other_id(rng, ac, vocab::kNumColors) : -1;
            for (int j = 0; j < L; ++j) {
                if (j == upos) continue;
                img.shape[j] = other_id(rng, us, vocab::kNumShapes);
                if (trapped && rng.bernoulli(0.7)) {
                    img.color[j] = dc;
                } else {
                    img.color[j] = static_cast<int>(rng.below(vocab::kNumColors));
                }
            }
            img.shape[static_cast<size_t>(upos)] = us;
            img.color[static_cast<size_t>(upos)] = ac;
            break_shape_singletons(img, upos, us);
            s.gt_box = cell_box(upos / gw, upos % gw, gh, gw);
            s.answer = vocab::color_token(ac);
            break;
        }
        case vocab::TaskKind::MarkedCellShape: {
            const int as = static_cast<int>(rng.below(vocab::kNumShapes));
            const int mpos = static_cast<int>(rng.below(L));
            // trap: a dominant distractor shape pulls a majority-shape vote
            // away from the marked cell's shape
            const int ds = trapped ? other_id(rng, as, vocab::kNumShapes) : -1;
            for (int j = 0; j < L; ++j) {
                img.color[j] = static_cast<int>(rng.below(vocab::kNumColors));
                if (j == mpos) continue;
                if (trapped && rng.bernoulli(0.7)) {
                    img.shape[j] = ds;
                } else {
                    img.shape[j] = static_cast<int>(rng.below(vocab::kNumShapes));
                }
            }
            img.shape[static_cast<size_t>(mpos)] = as;
            img.marker[static_cast<size_t>(mpos)] = 1;
            s.gt_box = cell_box(mpos / gw, mpos % gw, gh, gw);
            s.answer = vocab::shape_token(as);
            break;
        }
        case vocab::TaskKind::MarkedPairRelation: {
            for (int j = 0; j < L; ++j) {
                img.color[j] = static_cast<int>(rng.below(vocab::kNumColors));
                img.shape[j] = static_cast<int>(rng.below(vocab::kNumShapes));
            }
            const int rel = static_cast<int>(rng.below(4));
            int r1, c1, r2, c2;  // first mark at (r1,c1), second at (r2,c2)
            if (rel <= 1) {
                const int r = static_cast<int>(rng.below(gh));
                const int c = static_cast<int>(rng.below(gw - 1));
                r1 = r2 = r;
                if (rel == 0) {  // first is left of second
                    c1 = c, c2 = c + 1;
                } else {  // right
                    c1 = c + 1, c2 = c;
                }
            } else {
                const int r = static_cast<int>(rng.below(gh - 1));
                const int c = static_cast<int>(rng.below(gw));
                c1 = c2 = c;
                if (rel == 2) {  // above
                    r1 = r, r2 = r + 1;
                } else {  // below
                    r1 = r + 1, r2 = r;
                }
            }
            img.marker[static_cast<size_t>(r1 * gw + c1)] = 1;
            img.marker[static_cast<size_t>(r2 * gw + c2)] = 2;
            s.gt_box = union_box(cell_box(r1, c1, gh, gw), cell_box(r2, c2, gh, gw));
            s.answer = vocab::relation_token(rel);
            break;
        }
    }
    s.question = vocab::question_tokens(s.task);
    return s;
}

void generate_dataset(const std::string& path, const GenConfig& cfg) {
    if (cfg.count < 1) throw ValueError("dataset count must be at least 1");
    check_mix(cfg.task_mix);
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");

    json header;
    header["schema"] = "vrds/1";
    header["grid_h"] = cfg.grid_h;
    header["grid_w"] = cfg.grid_w;
    header["colors"] = vocab::kNumColors;
    header["shapes"] = vocab::kNumShapes;
    header["markers"] = vocab::kNumMarkers;
    header["seed"] = cfg.seed;
    header["count"] = cfg.count;
    header["task_mix"] = cfg.task_mix;
    header["trap_rate"] = cfg.trap_rate;
    out << header.dump() << "\n";

    for (uint64_t id = 0; id < cfg.count; ++id) {
        out << sample_to_json(generate_sample(cfg, id)).dump() << "\n";
    }
    out.flush();
    if (!out) throw IoError("write to " + path + " failed");
}

void validate_sample(const DatasetHeader& header, const SyntheticSample& s) {
    const int L = header.grid_h * header.grid_w;
    const PatchImage& img = s.image;
    auto fail = [&](const std::string& why) {
        throw ParseError("sample " + std::to_string(s.sample_id) + ": " + why);
    };
    if (img.grid_h != header.grid_h || img.grid_w != header.grid_w) fail("grid mismatch");
    if (static_cast<int>(img.color.size()) != L || static_cast<int>(img.shape.size()) != L ||
        static_cast<int>(img.marker.size()) != L) {
        fail("attribute arrays do not cover the grid");
    }
    for (int j = 0; j < L; ++j) {
        if (img.color[j] < 0 || img.color[j] >= header.colors) fail("color id out of alphabet");
        if (img.shape[j] < 0 || img.shape[j] >= header.shapes) fail("shape id out of alphabet");
        if (img.marker[j] < 0 || img.marker[j] >= header.markers)
            fail("marker id out of alphabet");
    }
    for (int t : s.question) {
        if (t < 0 || t >= vocab::kSize) fail("question token out of vocabulary");
    }
    const auto& answers = vocab::answer_tokens(s.task);
    if (std::find(answers.begin(), answers.end(), s.answer) == answers.end()) {
        fail("answer token outside the template's answer alphabet");
    }

    std::vector<int> evidence;
    try {
        validate_box(s.gt_box);
        evidence = box_to_patch_indices(s.gt_box, header.grid_h, header.grid_w);
    } catch (const ValueError& e) {
        fail(e.what());
    }

    // the boxed cells must decide the answer on their own
    switch (s.task) {
        case vocab::TaskKind::UniqueShapeColor: {
            if (evidence.size() != 1) fail("unique-shape box must cover exactly one cell");
            const int j = evidence[0];
            int occurrences = 0;
            for (int k = 0; k < L; ++k) {
                if (img.shape[k] == img.shape[j]) ++occurrences;
            }
            if (occurrences != 1) fail("boxed shape is not unique in the image");
            for (int other = 0; other < header.shapes; ++other) {
                if (other == img.shape[j]) continue;
                int n = 0;
                for (int k = 0; k < L; ++k) n += (img.shape[k] == other);
                if (n == 1) fail("a second shape also occurs exactly once");
            }
            if (s.answer != vocab::color_token(img.color[j])) {
                fail("answer does not match the unique cell's color");
            }
            break;
        }
        case vocab::TaskKind::MarkedCellShape: {
            if (evidence.size() != 1) fail("marked-cell box must cover exactly one cell");
            const int j = evidence[0];
            if (img.marker[j] != 1) fail("boxed cell is not the marked cell");
            for (int k = 0; k < L; ++k) {
                if (k != j && img.marker[k] != 0) fail("stray marker outside the box");
            }
            if (s.answer != vocab::shape_token(img.shape[j])) {
                fail("answer does not match the marked cell's shape");
            }
            break;
        }
        case vocab::TaskKind::MarkedPairRelation: {
            if (evidence.size() != 2) fail("relation box must cover exactly two cells");
            int first = -1, second = -1;
            for (int j : evidence) {
                if (img.marker[j] == 1) first = j;
                if (img.marker[j] == 2) second = j;
            }
            if (first < 0 || second < 0) fail("relation box must contain both marks");
            for (int k = 0; k < L; ++k) {
                if (k != first && k != second && img.marker[k] != 0) {
                    fail("stray marker outside the box");
                }
            }
            const int r1 = first / header.grid_w, col1 = first % header.grid_w;
            const int r2 = second / header.grid_w, col2 = second % header.grid_w;
            int rel;
            if (r1 == r2 && col1 + 1 == col2) {
                rel = 0;
            } else if (r1 == r2 && col1 == col2 + 1) {
                rel = 1;
            } else if (col1 == col2 && r1 + 1 == r2) {
                rel = 2;
            } else if (col1 == col2 && r1 == r2 + 1) {
                rel = 3;
            } else {
                fail("marked cells are not adjacent");
                return;
            }
            if (s.answer != vocab::relation_token(rel)) {
                fail("answer does not match the marks' relative position");
            }
            break;
        }
    }
}

DatasetReader::DatasetReader(const std::string& path) : in_(path) {
    if (!in_) throw IoError("cannot open " + path + " for reading");
    std::string line;
    if (!std::getline(in_, line)) throw ParseError("dataset file is empty");
    line_no_ = 1;
    json h;
    try {
        h = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError("line 1: bad header: " + std::string(e.what()));
    }
    try {
        const std::string schema = h.at("schema").get<std::string>();
        if (schema != "vrds/1") {
            throw ParseError("unsupported dataset schema version '" + schema +
                             "', expected vrds/1");
        }
        header_.schema = schema;
        header_.grid_h = h.at("grid_h").get<int>();
        header_.grid_w = h.at("grid_w").get<int>();
        header_.colors = h.at("colors").get<int>();
        header_.shapes = h.at("shapes").get<int>();
        header_.markers = h.at("markers").get<int>();
        header_.seed = h.at("seed").get<uint64_t>();
        header_.count = h.at("count").get<uint64_t>();
        const auto mix = h.at("task_mix").get<std::vector<double>>();
        if (mix.size() != 3) throw ParseError("task_mix must have three entries");
        std::copy(mix.begin(), mix.end(), header_.task_mix.begin());
        header_.trap_rate = h.at("trap_rate").get<double>();
    } catch (const json::exception& e) {
        throw ParseError("line 1: bad header: " + std::string(e.what()));
    }
    if (header_.grid_h < 2 || header_.grid_w < 2) {
        throw ParseError("line 1: header grid must be at least 2x2");
    }
    if (header_.colors > vocab::kNumColors || header_.shapes > vocab::kNumShapes ||
        header_.markers > vocab::kNumMarkers) {
        throw ParseError("line 1: header alphabets exceed the fixed vocabulary");
    }
}

std::optional<SyntheticSample> DatasetReader::next() {
    std::string line;
    if (!std::getline(in_, line)) return std::nullopt;
    ++line_no_;
    const std::string where = "line " + std::to_string(line_no_) + ": ";
    json rec;
    try {
        rec = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(where + "bad record: " + std::string(e.what()));
    }
    SyntheticSample s;
    try {
        s.sample_id = rec.at("id").get<uint64_t>();
        s.task = vocab::task_from_name(rec.at("task").get<std::string>());
        s.image.grid_h = header_.grid_h;
        s.image.grid_w = header_.grid_w;
        s.image.color = rec.at("color").get<std::vector<int>>();
        s.image.shape = rec.at("shape").get<std::vector<int>>();
        s.image.marker = rec.at("marker").get<std::vector<int>>();
        s.question = rec.at("q").get<std::vector<int>>();
        s.answer = rec.at("a").get<int>();
        const auto box = rec.at("box").get<std::vector<double>>();
        if (box.size() != 4) throw ParseError("box must have four coordinates");
        s.gt_box = {box[0], box[1], box[2], box[3]};
    } catch (const json::exception& e) {
        throw ParseError(where + "bad record: " + std::string(e.what()));
    } catch (const ValueError& e) {
        throw ParseError(where + e.what());
    }
    try {
        validate_sample(header_, s);
    } catch (const ParseError& e) {
        throw ParseError(where + e.what());
    }
    return s;
}

Dataset load_dataset(const std::string& path) {
    DatasetReader reader(path);
    Dataset ds;
    ds.header = reader.header();
    while (auto s = reader.next()) ds.samples.push_back(std::move(*s));
    return ds;
}

Split split_for(uint64_t sample_id) {
    const uint64_t h = splitmix64(sample_id) % 10;
    if (h < 8) return Split::Train;
    return h == 8 ? Split::Val : Split::Test;
}

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        default: return "test";
    }
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw ValueError("unknown split name: " + name);
}

std::vector<int> split_indices(const Dataset& ds, Split s) {
    std::vector<int> out;
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        if (split_for(ds.samples[i].sample_id) == s) out.push_back(static_cast<int>(i));
    }
    return out;
}

}  // namespace vr
