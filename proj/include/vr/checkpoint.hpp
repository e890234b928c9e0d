#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vr/model.hpp"
#include "vr/tensor_io.hpp"

namespace vr {

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Checkpoint file: u64 header length, JSON header (must carry "schema":
// "vr-ckpt/1" and a "model" config object), then the tensor container with
// the model parameters plus any extra tensors (optimizer moments).
//
// Saving quantizes every value to float32 and writes the quantized values
// back into the live tensors, so a process that keeps training after a save
// is bitwise identical to one that reloads the file and continues.
void write_checkpoint(const std::string& path, const Model& model, const nlohmann::json& header,
                      std::vector<NamedTensor>& extra);

struct LoadedCheckpoint {
    nlohmann::json header;
    Model model;
    std::set<std::string> present;               // model tensor names found in the file
    std::map<std::string, NamedTensor> extra;    // non-model tensors (optimizer state)

    bool has_block(const std::string& prefix) const;  // all tensors of a prefix present
};

// Reconstructs the model from the stored config and fills every tensor
// found by name. Missing model tensors are tolerated (they keep their
// seeded init) and reported through `present`, so parameter blocks can be
// stripped from a file and the rest still loads.
LoadedCheckpoint read_checkpoint(const std::string& path);

}  // namespace vr
