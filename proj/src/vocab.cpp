#include "vr/vocab.hpp"

#include "vr/common.hpp"

namespace vr::vocab {

namespace {

const char* kNames[kCount] = {
    "<pad>",  "<img>",  "<sovt>", "<lvr>",     "<eovt>", "color", "of",    "unique",
    "shape",  "at",     "marked", "cell",      "relation", "first", "mark", "to",
    "second", "?",      "red",    "green",     "blue",   "yellow", "circle", "square",
    "triangle", "star", "left",   "right",     "above",  "below",
};

const std::string kTaskNames[kNumTasks] = {"unique_shape_color", "marked_cell_shape",
                                           "marked_pair_relation"};

}  // namespace

const char* token_name(int id) {
    if (id < 0 || id >= kCount) throw ValueError("token id " + std::to_string(id) + " out of range");
    return kNames[id];
}

const std::string& task_name(TaskKind k) {
    return kTaskNames[static_cast<int>(k)];
}

TaskKind task_from_name(const std::string& name) {
    for (int i = 0; i < kNumTasks; ++i) {
        if (kTaskNames[i] == name) return static_cast<TaskKind>(i);
    }
    throw ValueError("unknown task name: " + name);
}

const std::vector<int>& question_tokens(TaskKind k) {
    static const std::vector<int> q[kNumTasks] = {
        {kColor, kOf, kUnique, kShape, kQmark},
        {kShape, kAt, kMarked, kCell, kQmark},
        {kRelation, kOf, kFirst, kMark, kTo, kSecond, kMark, kQmark},
    };
    return q[static_cast<int>(k)];
}

const std::vector<int>& answer_tokens(TaskKind k) {
    static const std::vector<int> a[kNumTasks] = {
        {kRed, kGreen, kBlue, kYellow},
        {kCircle, kSquare, kTriangle, kStar},
        {kLeft, kRight, kAbove, kBelow},
    };
    return a[static_cast<int>(k)];
}

}  // namespace vr::vocab
