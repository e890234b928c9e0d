#pragma once

#include <array>
#include <string>
#include <vector>

namespace vr::vocab {

// Fixed token alphabet. Order is part of the dataset format: ids are stored
// in .vrds files and checkpoints, so entries must never be reordered.
enum Token : int {
    kPad = 0,
    kImg,    // placeholder for image-feature positions
    kSovt,   // opens the latent span
    kLvr,    // one per latent slot
    kEovt,   // closes the latent span; its logits answer the question
    kColor,
    kOf,
    kUnique,
    kShape,
    kAt,
    kMarked,
    kCell,
    kRelation,
    kFirst,
    kMark,
    kTo,
    kSecond,
    kQmark,
    kRed,
    kGreen,
    kBlue,
    kYellow,
    kCircle,
    kSquare,
    kTriangle,
    kStar,
    kLeft,
    kRight,
    kAbove,
    kBelow,
    kCount
};

constexpr int kSize = kCount;
constexpr int kNumColors = 4;
constexpr int kNumShapes = 4;
constexpr int kNumMarkers = 3;  // none / first mark / second mark

const char* token_name(int id);

constexpr int color_token(int color_id) { return kRed + color_id; }
constexpr int shape_token(int shape_id) { return kCircle + shape_id; }
constexpr int relation_token(int rel_id) { return kLeft + rel_id; }

enum class TaskKind { UniqueShapeColor, MarkedCellShape, MarkedPairRelation };
constexpr int kNumTasks = 3;

const std::string& task_name(TaskKind k);
TaskKind task_from_name(const std::string& name);  // ValueError on unknown

// fixed question token sequence for a template
const std::vector<int>& question_tokens(TaskKind k);
// closed answer alphabet for a template (4 tokens each)
const std::vector<int>& answer_tokens(TaskKind k);

}  // namespace vr::vocab
