#include "vr/checkpoint.hpp"

#include <fstream>

#include "vr/common.hpp"

namespace vr {

namespace {

constexpr uint64_t kMaxHeaderLen = 16u << 20;

void quantize_tensor(Tensor& t) {
    for (double& v : t.values()) v = quantize_f32(v);
}

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& config) {
    return nlohmann::json{{"depth", config.depth},
                          {"heads", config.heads},
                          {"dim", config.dim},
                          {"latent_steps", config.latent_steps},
                          {"max_seq", config.max_seq},
                          {"patches", config.patches},
                          {"resampler_heads", config.resampler_heads},
                          {"clamp_limit", config.clamp_limit}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig config;
    config.depth = j.value("depth", config.depth);
    config.heads = j.value("heads", config.heads);
    config.dim = j.value("dim", config.dim);
    config.latent_steps = j.value("latent_steps", config.latent_steps);
    config.max_seq = j.value("max_seq", config.max_seq);
    config.patches = j.value("patches", config.patches);
    config.resampler_heads = j.value("resampler_heads", config.resampler_heads);
    config.clamp_limit = j.value("clamp_limit", config.clamp_limit);
    config.validate();
    return config;
}

void write_checkpoint(const std::string& path, const Model& model, const nlohmann::json& header,
                      std::vector<NamedTensor>& extra) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);

    std::vector<NamedTensor> tensors;
    for (auto& [name, tensor] : model.named_tensors()) {
        Tensor live = tensor;
        quantize_tensor(live);  // write-through: memory now equals the file
        tensors.push_back(NamedTensor{name, live.shape(), live.values()});
    }
    for (NamedTensor& t : extra) {
        for (double& v : t.values) v = quantize_f32(v);
        tensors.push_back(t);
    }

    const std::string head = header.dump();
    write_u64(out, head.size());
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    write_vrtf(out, tensors);
    if (!out) throw IoError("checkpoint write failed: " + path);
}

bool LoadedCheckpoint::has_block(const std::string& prefix) const {
    bool any = false;
    for (const auto& [name, tensor] : model.named_tensors()) {
        if (name.rfind(prefix, 0) != 0) continue;
        any = true;
        if (present.find(name) == present.end()) return false;
    }
    return any;
}

LoadedCheckpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    const uint64_t head_len = read_u64(in);
    if (head_len == 0 || head_len > kMaxHeaderLen) {
        throw ParseError("checkpoint header length " + std::to_string(head_len) +
                         " is implausible");
    }
    std::string head(head_len, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head_len));
    if (!in) throw ParseError("checkpoint header truncated");

    LoadedCheckpoint loaded;
    try {
        loaded.header = nlohmann::json::parse(head);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    if (loaded.header.value("schema", "") != "vr-ckpt/1") {
        throw ParseError("unsupported checkpoint schema");
    }
    if (!loaded.header.contains("model")) throw ParseError("checkpoint header lacks model config");
    ModelConfig config;
    try {
        config = model_config_from_json(loaded.header["model"]);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad model config in checkpoint: ") + e.what());
    }
    const uint64_t model_seed = loaded.header.value("model_seed", 0ull);
    loaded.model = Model::init(config, model_seed);

    std::vector<NamedTensor> stored = read_vrtf(in);
    std::map<std::string, Tensor> by_name;
    for (auto& [name, tensor] : loaded.model.named_tensors()) by_name.emplace(name, tensor);
    for (NamedTensor& t : stored) {
        auto it = by_name.find(t.name);
        if (it == by_name.end()) {
            loaded.extra.emplace(t.name, std::move(t));
            continue;
        }
        Tensor dst = it->second;
        if (t.shape != dst.shape()) {
            throw ParseError("checkpoint tensor " + t.name + " has shape " +
                             Tensor::shape_str(t.shape) + ", model expects " +
                             Tensor::shape_str(dst.shape()));
        }
        dst.values() = t.values;
        loaded.present.insert(t.name);
    }
    return loaded;
}

}  // namespace vr
