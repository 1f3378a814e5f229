#pragma once

// Checkpoint files: binary container (see binfile.hpp) with magic DFKDCKPT.
// The JSON header carries the model kind, its config, provenance, and the
// tensor directory; the payload stores each tensor as raw float64. Teacher
// checkpoints additionally carry the feature statistics (per-feature mean
// and biased variance of the final hidden state over the training split).

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfkd/binfile.hpp"
#include "dfkd/errors.hpp"
#include "dfkd/models.hpp"

namespace dfkd {

constexpr const char* kCheckpointMagic = "DFKDCKPT";

struct Provenance {
    uint64_t seed = 0;
    uint64_t epochs = 0;
};

inline void to_json(nlohmann::json& j, const Provenance& p) {
    j = {{"seed", p.seed}, {"epochs", p.epochs}};
}

inline void from_json(const nlohmann::json& j, Provenance& p) {
    j.at("seed").get_to(p.seed);
    j.at("epochs").get_to(p.epochs);
}

struct TeacherCheckpoint {
    SeqModelConfig config;
    SeqModelParams params;
    std::vector<double> meta_mean; // length H
    std::vector<double> meta_var;  // length H, elementwise >= 0
    Provenance provenance;

    void validate() const {
        if (meta_mean.size() != config.hidden_dim || meta_var.size() != config.hidden_dim)
            throw dimension_error("teacher metadata length does not match hidden_dim");
        for (double v : meta_var)
            if (v < 0.0) throw contract_error("teacher metadata variance has negative entries");
    }
};

struct StudentCheckpoint {
    SeqModelConfig config;
    SeqModelParams params;
    Provenance provenance;
};

struct GeneratorCheckpoint {
    GeneratorConfig config;
    GeneratorParams params;
    Provenance provenance;
};

namespace detail {

inline void expect_shape(const std::string& name, const std::vector<double>& values, const Shape& shape) {
    if (values.size() != shape_numel(shape))
        throw dimension_error("checkpoint tensor '" + name + "' has " + std::to_string(values.size()) +
                              " values, expected " + shape_str(shape));
}

inline std::vector<binfile::F64Array> tensor_arrays(const std::vector<NamedTensor>& named) {
    std::vector<binfile::F64Array> arrays;
    arrays.reserve(named.size());
    for (const auto& [name, t] : named) arrays.push_back({name, &t.data()});
    return arrays;
}

inline nlohmann::json tensor_directory(const std::vector<NamedTensor>& named) {
    nlohmann::json dir = nlohmann::json::array();
    for (const auto& [name, t] : named) dir.push_back({{"name", name}, {"shape", t.shape()}});
    return dir;
}

inline Tensor take_tensor(binfile::Contents& c, const std::string& name, Shape shape, bool requires_grad) {
    auto it = c.f64.find(name);
    if (it == c.f64.end()) throw format_error("checkpoint is missing tensor '" + name + "'");
    expect_shape(name, it->second, shape);
    return Tensor::from_data(std::move(shape), std::move(it->second), requires_grad);
}

} // namespace detail

inline void save_checkpoint(const std::string& path, const TeacherCheckpoint& ckpt) {
    ckpt.validate();
    nlohmann::json header = {{"kind", "teacher"},
                             {"config", ckpt.config},
                             {"provenance", ckpt.provenance},
                             {"tensors", detail::tensor_directory(ckpt.params.named())},
                             {"has_metadata", true},
                             {"param_count", ckpt.params.param_count()}};
    auto arrays = detail::tensor_arrays(ckpt.params.named());
    arrays.push_back({"meta.mean", &ckpt.meta_mean});
    arrays.push_back({"meta.var", &ckpt.meta_var});
    binfile::write(path, kCheckpointMagic, std::move(header), arrays);
}

inline void save_checkpoint(const std::string& path, const StudentCheckpoint& ckpt) {
    nlohmann::json header = {{"kind", "student"},
                             {"config", ckpt.config},
                             {"provenance", ckpt.provenance},
                             {"tensors", detail::tensor_directory(ckpt.params.named())},
                             {"has_metadata", false},
                             {"param_count", ckpt.params.param_count()}};
    binfile::write(path, kCheckpointMagic, std::move(header), detail::tensor_arrays(ckpt.params.named()));
}

inline void save_checkpoint(const std::string& path, const GeneratorCheckpoint& ckpt) {
    nlohmann::json header = {{"kind", "generator"},
                             {"config", ckpt.config},
                             {"provenance", ckpt.provenance},
                             {"tensors", detail::tensor_directory(ckpt.params.named())},
                             {"has_metadata", false},
                             {"param_count", ckpt.params.param_count()}};
    binfile::write(path, kCheckpointMagic, std::move(header), detail::tensor_arrays(ckpt.params.named()));
}

inline nlohmann::json checkpoint_header(const std::string& path) {
    return binfile::read_header(path, kCheckpointMagic);
}

namespace detail {

inline SeqModelParams load_seq_params(binfile::Contents& c, const SeqModelConfig& cfg, bool requires_grad) {
    const size_t in = cfg.input_dim + cfg.hidden_dim, h = cfg.hidden_dim, m = cfg.num_beams;
    SeqModelParams p;
    p.w_update = take_tensor(c, "gru.update.w", {in, h}, requires_grad);
    p.b_update = take_tensor(c, "gru.update.b", {h}, requires_grad);
    p.w_reset = take_tensor(c, "gru.reset.w", {in, h}, requires_grad);
    p.b_reset = take_tensor(c, "gru.reset.b", {h}, requires_grad);
    p.w_cand = take_tensor(c, "gru.cand.w", {in, h}, requires_grad);
    p.b_cand = take_tensor(c, "gru.cand.b", {h}, requires_grad);
    p.w_head = take_tensor(c, "head.w", {h, m}, requires_grad);
    p.b_head = take_tensor(c, "head.b", {m}, requires_grad);
    return p;
}

} // namespace detail

inline TeacherCheckpoint load_teacher(const std::string& path, bool requires_grad = false) {
    auto c = binfile::read(path, kCheckpointMagic);
    const std::string kind = c.header.value("kind", "");
    if (kind != "teacher" || !c.header.value("has_metadata", false))
        throw metadata_missing_error("'" + path + "' is a " + (kind.empty() ? "unknown" : kind) +
                                     " checkpoint; a teacher with feature statistics is required");
    TeacherCheckpoint ckpt;
    ckpt.config = c.header.at("config").get<SeqModelConfig>();
    ckpt.provenance = c.header.value("provenance", Provenance{});
    ckpt.params = detail::load_seq_params(c, ckpt.config, requires_grad);
    auto mean_it = c.f64.find("meta.mean");
    auto var_it = c.f64.find("meta.var");
    if (mean_it == c.f64.end() || var_it == c.f64.end())
        throw metadata_missing_error("'" + path + "': teacher checkpoint lacks meta.mean/meta.var arrays");
    ckpt.meta_mean = std::move(mean_it->second);
    ckpt.meta_var = std::move(var_it->second);
    ckpt.validate();
    return ckpt;
}

// Loads either a teacher or a student for evaluation; metadata is ignored.
inline StudentCheckpoint load_seq_model(const std::string& path, bool requires_grad = false) {
    auto c = binfile::read(path, kCheckpointMagic);
    const std::string kind = c.header.value("kind", "");
    if (kind != "teacher" && kind != "student")
        throw format_error("'" + path + "' holds a " + (kind.empty() ? "unknown" : kind) +
                           " checkpoint, expected a sequence model");
    StudentCheckpoint ckpt;
    ckpt.config = c.header.at("config").get<SeqModelConfig>();
    ckpt.provenance = c.header.value("provenance", Provenance{});
    ckpt.params = detail::load_seq_params(c, ckpt.config, requires_grad);
    return ckpt;
}

inline GeneratorCheckpoint load_generator(const std::string& path, bool requires_grad = false) {
    auto c = binfile::read(path, kCheckpointMagic);
    if (c.header.value("kind", "") != "generator")
        throw format_error("'" + path + "' is not a generator checkpoint");
    GeneratorCheckpoint ckpt;
    ckpt.config = c.header.at("config").get<GeneratorConfig>();
    ckpt.provenance = c.header.value("provenance", Provenance{});
    auto& cfg = ckpt.config;
    const size_t frame = cfg.obs_len * cfg.feature_dim;
    ckpt.params.w1 = detail::take_tensor(c, "fc1.w", {cfg.noise_dim, cfg.hidden_dim}, requires_grad);
    ckpt.params.b1 = detail::take_tensor(c, "fc1.b", {cfg.hidden_dim}, requires_grad);
    ckpt.params.w2 = detail::take_tensor(c, "fc2.w", {cfg.hidden_dim, frame}, requires_grad);
    ckpt.params.b2 = detail::take_tensor(c, "fc2.b", {frame}, requires_grad);
    return ckpt;
}

} // namespace dfkd
