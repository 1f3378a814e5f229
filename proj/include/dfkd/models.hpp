#pragma once

// Sequence model (single-layer GRU + shared affine head) used for both the
// teacher and the student, and the two-layer feedforward generator that
// turns Gaussian noise into LiDAR-like frame sequences.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dfkd/errors.hpp"
#include "dfkd/rng.hpp"
#include "dfkd/tensor.hpp"

namespace dfkd {

struct SeqModelConfig {
    size_t input_dim = 32;  // D
    size_t hidden_dim = 128; // teacher default; students use 32
    size_t num_beams = 64;  // M
    size_t obs_len = 8;     // L
    size_t horizon = 3;     // V

    size_t seq_len() const { return obs_len + horizon; }
    size_t num_heads() const { return horizon + 1; }

    void validate() const {
        if (!input_dim || !hidden_dim || !num_beams || !obs_len)
            throw parameter_error("SeqModelConfig: all dimensions must be positive");
    }

    bool operator==(const SeqModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const SeqModelConfig& c) {
    j = {{"input_dim", c.input_dim}, {"hidden_dim", c.hidden_dim}, {"num_beams", c.num_beams},
         {"obs_len", c.obs_len},     {"horizon", c.horizon}};
}

inline void from_json(const nlohmann::json& j, SeqModelConfig& c) {
    j.at("input_dim").get_to(c.input_dim);
    j.at("hidden_dim").get_to(c.hidden_dim);
    j.at("num_beams").get_to(c.num_beams);
    j.at("obs_len").get_to(c.obs_len);
    j.at("horizon").get_to(c.horizon);
}

struct GeneratorConfig {
    size_t noise_dim = 500;
    size_t hidden_dim = 64;
    size_t obs_len = 8;
    size_t feature_dim = 32;
    size_t horizon = 3;

    void validate() const {
        if (!noise_dim || !hidden_dim || !obs_len || !feature_dim)
            throw parameter_error("GeneratorConfig: all dimensions must be positive");
    }

    bool operator==(const GeneratorConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const GeneratorConfig& c) {
    j = {{"noise_dim", c.noise_dim}, {"hidden_dim", c.hidden_dim}, {"obs_len", c.obs_len},
         {"feature_dim", c.feature_dim}, {"horizon", c.horizon}};
}

inline void from_json(const nlohmann::json& j, GeneratorConfig& c) {
    j.at("noise_dim").get_to(c.noise_dim);
    j.at("hidden_dim").get_to(c.hidden_dim);
    j.at("obs_len").get_to(c.obs_len);
    j.at("feature_dim").get_to(c.feature_dim);
    j.at("horizon").get_to(c.horizon);
}

using NamedTensor = std::pair<std::string, Tensor>;

namespace detail {

inline Tensor init_affine(Rng& rng, Shape shape, size_t fan_in, bool requires_grad) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = rng.uniform(-bound, bound);
    return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

} // namespace detail

// Gate weights map the concatenated [x ; h] (or [x ; r*h] for the candidate)
// through (D+H) x H affine layers; the head is a shared H x M readout.
struct SeqModelParams {
    Tensor w_update, b_update;
    Tensor w_reset, b_reset;
    Tensor w_cand, b_cand;
    Tensor w_head, b_head;

    static SeqModelParams init(const SeqModelConfig& cfg, uint64_t seed, bool requires_grad = true) {
        cfg.validate();
        Rng rng(derive_seed(seed, "seq-model-init"));
        const size_t in = cfg.input_dim + cfg.hidden_dim, h = cfg.hidden_dim, m = cfg.num_beams;
        SeqModelParams p;
        p.w_update = detail::init_affine(rng, {in, h}, in, requires_grad);
        p.b_update = detail::init_affine(rng, {h}, in, requires_grad);
        p.w_reset = detail::init_affine(rng, {in, h}, in, requires_grad);
        p.b_reset = detail::init_affine(rng, {h}, in, requires_grad);
        p.w_cand = detail::init_affine(rng, {in, h}, in, requires_grad);
        p.b_cand = detail::init_affine(rng, {h}, in, requires_grad);
        p.w_head = detail::init_affine(rng, {h, m}, h, requires_grad);
        p.b_head = detail::init_affine(rng, {m}, h, requires_grad);
        return p;
    }

    std::vector<NamedTensor> named() const {
        return {{"gru.update.w", w_update}, {"gru.update.b", b_update},
                {"gru.reset.w", w_reset},   {"gru.reset.b", b_reset},
                {"gru.cand.w", w_cand},     {"gru.cand.b", b_cand},
                {"head.w", w_head},         {"head.b", b_head}};
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& [name, t] : named()) n += t.size();
        return n;
    }

    // Deep copy with gradient tracking switched off; used to freeze the
    // teacher (and generator) during distillation.
    SeqModelParams frozen() const {
        SeqModelParams p;
        p.w_update = w_update.detach();
        p.b_update = b_update.detach();
        p.w_reset = w_reset.detach();
        p.b_reset = b_reset.detach();
        p.w_cand = w_cand.detach();
        p.b_cand = b_cand.detach();
        p.w_head = w_head.detach();
        p.b_head = b_head.detach();
        return p;
    }
};

struct GeneratorParams {
    Tensor w1, b1, w2, b2;

    static GeneratorParams init(const GeneratorConfig& cfg, uint64_t seed, bool requires_grad = true) {
        cfg.validate();
        Rng rng(derive_seed(seed, "generator-init"));
        const size_t frame = cfg.obs_len * cfg.feature_dim;
        GeneratorParams p;
        p.w1 = detail::init_affine(rng, {cfg.noise_dim, cfg.hidden_dim}, cfg.noise_dim, requires_grad);
        p.b1 = detail::init_affine(rng, {cfg.hidden_dim}, cfg.noise_dim, requires_grad);
        p.w2 = detail::init_affine(rng, {cfg.hidden_dim, frame}, cfg.hidden_dim, requires_grad);
        p.b2 = detail::init_affine(rng, {frame}, cfg.hidden_dim, requires_grad);
        return p;
    }

    std::vector<NamedTensor> named() const {
        return {{"fc1.w", w1}, {"fc1.b", b1}, {"fc2.w", w2}, {"fc2.b", b2}};
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& [name, t] : named()) n += t.size();
        return n;
    }

    GeneratorParams frozen() const {
        GeneratorParams p;
        p.w1 = w1.detach();
        p.b1 = b1.detach();
        p.w2 = w2.detach();
        p.b2 = b2.detach();
        return p;
    }
};

struct SeqForwardResult {
    Tensor logits;      // [B x (V+1) x M]
    Tensor last_hidden; // [B x H], state after the final unroll step
};

// Unrolls the GRU over all L+V steps from a zero initial state. The shared
// head reads the hidden state at steps L-1 .. L+V-1, one readout per horizon
// offset v = 0..V. Convention:
//   z = sigmoid(W_z [x;h] + b_z), r = sigmoid(W_r [x;h] + b_r)
//   hcand = tanh(W_h [x; r*h] + b_h), h' = (1-z)*h + z*hcand
inline SeqForwardResult seq_forward(const SeqModelParams& params, const SeqModelConfig& cfg,
                                    const Tensor& x) {
    if (x.ndim() != 3 || x.dim(1) != cfg.seq_len() || x.dim(2) != cfg.input_dim)
        throw dimension_error("seq_forward: expected [B x " + std::to_string(cfg.seq_len()) + " x " +
                              std::to_string(cfg.input_dim) + "], got " + shape_str(x.shape()));
    const size_t batch = x.dim(0);
    Tensor h = Tensor::zeros({batch, cfg.hidden_dim});
    std::vector<Tensor> head_logits;
    head_logits.reserve(cfg.num_heads());
    for (size_t t = 0; t < cfg.seq_len(); ++t) {
        Tensor xt = time_slice(x, t);
        Tensor xh = concat_cols(xt, h);
        Tensor z = sigmoid(add_rowvec(matmul(xh, params.w_update), params.b_update));
        Tensor r = sigmoid(add_rowvec(matmul(xh, params.w_reset), params.b_reset));
        Tensor xrh = concat_cols(xt, mul(r, h));
        Tensor hcand = tanh(add_rowvec(matmul(xrh, params.w_cand), params.b_cand));
        // h' = (1-z)*h + z*hcand
        h = add(mul(add_const(neg(z), 1.0), h), mul(z, hcand));
        if (t + 1 >= cfg.obs_len)
            head_logits.push_back(add_rowvec(matmul(h, params.w_head), params.b_head));
    }
    return {stack_steps(head_logits), h};
}

// noise [B x noise_dim] -> frames [B x (L+V) x D]; hidden ReLU, output tanh,
// then V all-zero future frames appended.
inline Tensor generator_forward(const GeneratorParams& params, const GeneratorConfig& cfg,
                                const Tensor& noise) {
    if (noise.ndim() != 2 || noise.dim(1) != cfg.noise_dim)
        throw dimension_error("generator_forward: expected [B x " + std::to_string(cfg.noise_dim) +
                              "], got " + shape_str(noise.shape()));
    Tensor hidden = relu(add_rowvec(matmul(noise, params.w1), params.b1));
    Tensor flat = tanh(add_rowvec(matmul(hidden, params.w2), params.b2));
    return pad_frames(flat, cfg.obs_len, cfg.horizon, cfg.feature_dim);
}

inline Tensor sample_noise(Rng& rng, size_t batch, size_t noise_dim) {
    std::vector<double> data(batch * noise_dim);
    for (double& v : data) v = rng.normal();
    return Tensor::from_data({batch, noise_dim}, std::move(data));
}

// Checksum over parameter bytes, used by the frozen-model tests and for
// model identity strings in reports.
inline uint64_t params_checksum(const std::vector<NamedTensor>& named) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& [name, t] : named) {
        h = fnv1a_bytes(name.data(), name.size(), h);
        h = fnv1a_bytes(t.data().data(), t.data().size() * sizeof(double), h);
    }
    return h;
}

} // namespace dfkd
