#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "vr/vision.hpp"
#include "vr/vocab.hpp"

namespace vr {

// One perception task instance. The grounding box is known by construction:
// it tightly covers the evidence cells and the answer is decidable from the
// boxed content alone.
struct SyntheticSample {
    uint64_t sample_id = 0;
    vocab::TaskKind task = vocab::TaskKind::UniqueShapeColor;
    PatchImage image;
    std::vector<int> question;
    int answer = 0;
    BoundingBox gt_box;
};

struct DatasetHeader {
    std::string schema = "vrds/1";
    int grid_h = 8;
    int grid_w = 8;
    int colors = vocab::kNumColors;
    int shapes = vocab::kNumShapes;
    int markers = vocab::kNumMarkers;
    uint64_t seed = 1;
    uint64_t count = 0;
    std::array<double, 3> task_mix{0.5, 0.25, 0.25};
    double trap_rate = 0.8;
};

struct GenConfig {
    uint64_t seed = 1;
    uint64_t count = 1000;
    int grid_h = 8;
    int grid_w = 8;
    // unique-shape color / marked-cell shape / marked-pair relation
    std::array<double, 3> task_mix{0.5, 0.25, 0.25};
    // fraction of samples whose distractors push a majority-vote prior
    // toward a wrong answer
    double trap_rate = 0.8;
};

// Deterministic: the sample stream depends only on (seed ^ sample_id), so
// generation can be sharded and regenerated byte-for-byte.
SyntheticSample generate_sample(const GenConfig& cfg, uint64_t sample_id);
void generate_dataset(const std::string& path, const GenConfig& cfg);

// Streaming reader over a .vrds file: JSON header line, then one JSON record
// per line. Every record is validated structurally (alphabets, shapes, box)
// and semantically (the box really contains deciding evidence).
class DatasetReader {
  public:
    explicit DatasetReader(const std::string& path);
    const DatasetHeader& header() const { return header_; }
    std::optional<SyntheticSample> next();

  private:
    std::ifstream in_;
    DatasetHeader header_;
    size_t line_no_ = 0;
};

struct Dataset {
    DatasetHeader header;
    std::vector<SyntheticSample> samples;
};

Dataset load_dataset(const std::string& path);

// split membership hashes the id only, so it is stable across seeds/counts
enum class Split { Train, Val, Test };
Split split_for(uint64_t sample_id);
const char* split_name(Split s);
Split split_from_name(const std::string& name);
std::vector<int> split_indices(const Dataset& ds, Split s);

// throws ParseError when a record violates dataset invariants
void validate_sample(const DatasetHeader& header, const SyntheticSample& s);

}  // namespace vr
