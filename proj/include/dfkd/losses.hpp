#pragma once

// Loss functions for generator inversion and student distillation.
//
// The models emit V+1 heads of M logits. Each loss below is defined for a
// single M-way output and averaged uniformly over the heads, so a [B x M]
// tensor and a [B x (V+1) x M] tensor are both accepted; the head count is
// inferred from the shape. Natural logarithms throughout.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfkd/errors.hpp"
#include "dfkd/tensor.hpp"

namespace dfkd {

struct GeneratorLossWeights {
    double alpha = 1e-4; // activation term
    double beta = 1e-2;  // entropy term

    void validate() const {
        if (alpha < 0.0 || beta < 0.0)
            throw parameter_error("GeneratorLossWeights: alpha and beta must be nonnegative");
    }
};

inline void to_json(nlohmann::json& j, const GeneratorLossWeights& w) {
    j = {{"alpha", w.alpha}, {"beta", w.beta}};
}

inline void from_json(const nlohmann::json& j, GeneratorLossWeights& w) {
    GeneratorLossWeights d;
    w.alpha = j.value("alpha", d.alpha);
    w.beta = j.value("beta", d.beta);
}

enum class GeneratorLossKind { weighted, metadata_only, activation_only, entropy_only };
enum class StudentLossKind { kl, mse };

inline const char* to_string(GeneratorLossKind k) {
    switch (k) {
        case GeneratorLossKind::weighted: return "weighted";
        case GeneratorLossKind::metadata_only: return "metadata_only";
        case GeneratorLossKind::activation_only: return "activation_only";
        case GeneratorLossKind::entropy_only: return "entropy_only";
    }
    return "?";
}

inline GeneratorLossKind generator_loss_kind_from(const std::string& s) {
    if (s == "weighted") return GeneratorLossKind::weighted;
    if (s == "metadata_only" || s == "metadata") return GeneratorLossKind::metadata_only;
    if (s == "activation_only" || s == "activation") return GeneratorLossKind::activation_only;
    if (s == "entropy_only" || s == "entropy") return GeneratorLossKind::entropy_only;
    throw parameter_error("unknown generator loss kind '" + s + "'");
}

inline const char* to_string(StudentLossKind k) { return k == StudentLossKind::kl ? "kl" : "mse"; }

inline StudentLossKind student_loss_kind_from(const std::string& s) {
    if (s == "kl") return StudentLossKind::kl;
    if (s == "mse") return StudentLossKind::mse;
    throw parameter_error("unknown student loss kind '" + s + "' (expected kl or mse)");
}

// Distillation knobs. temperature is optional at this level: the KL loss
// needs one (validated below), the MSE loss ignores it.
struct KDConfig {
    std::optional<double> temperature; // typical default 5 when distilling with KL
    double gamma = 0.7;                // KD mixing weight
    StudentLossKind student_loss = StudentLossKind::kl;
    GeneratorLossKind generator_loss = GeneratorLossKind::weighted;
    GeneratorLossWeights weights;

    void validate_for_student() const {
        if (student_loss == StudentLossKind::kl) {
            if (!temperature) throw parameter_error("KL student loss requires a temperature");
            if (*temperature <= 0.0) throw parameter_error("temperature must be positive");
        }
        if (gamma < 0.0 || gamma > 1.0) throw parameter_error("gamma must lie in [0, 1]");
        weights.validate();
    }
};

inline void to_json(nlohmann::json& j, const KDConfig& c) {
    j = {{"gamma", c.gamma},
         {"student_loss", to_string(c.student_loss)},
         {"generator_loss", to_string(c.generator_loss)},
         {"weights", c.weights}};
    if (c.temperature) j["temperature"] = *c.temperature;
}

inline void from_json(const nlohmann::json& j, KDConfig& c) {
    KDConfig d;
    if (j.contains("temperature") && !j["temperature"].is_null())
        c.temperature = j["temperature"].get<double>();
    c.gamma = j.value("gamma", d.gamma);
    if (j.contains("student_loss")) c.student_loss = student_loss_kind_from(j["student_loss"].get<std::string>());
    if (j.contains("generator_loss"))
        c.generator_loss = generator_loss_kind_from(j["generator_loss"].get<std::string>());
    c.weights = j.value("weights", d.weights);
}

namespace detail {

inline size_t check_logits_pair(const Tensor& a, const Tensor& b, const char* name) {
    if (a.shape() != b.shape())
        throw dimension_error(std::string(name) + ": logit shapes differ, " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
    if (a.ndim() < 2) throw dimension_error(std::string(name) + ": expected at least [B x M] logits");
    return a.shape().back();
}

inline Tensor mse(const Tensor& a, const Tensor& b) { return mean_all(square(sub(a, b))); }

} // namespace detail

// Feature-statistics mismatch between the teacher's activations on synthetic
// data and the stored training-time statistics:
//   MSE(mean_ref, batch mean) + MSE(var_ref, batch var)
inline Tensor metadata_loss(const Tensor& features, const std::vector<double>& mean_ref,
                            const std::vector<double>& var_ref) {
    if (features.ndim() != 2)
        throw dimension_error("metadata_loss: expected [B x H] features, got " + shape_str(features.shape()));
    const size_t h = features.dim(1);
    if (mean_ref.size() != h || var_ref.size() != h)
        throw dimension_error("metadata_loss: reference statistics have length " +
                              std::to_string(mean_ref.size()) + "/" + std::to_string(var_ref.size()) +
                              ", features have " + std::to_string(h));
    if (features.dim(0) < 2)
        throw contract_error("metadata_loss: batch of at least 2 needed for a meaningful variance");
    auto [batch_mean, batch_var] = moments(features);
    Tensor mu = Tensor::from_data({h}, mean_ref);
    Tensor var = Tensor::from_data({h}, var_ref);
    return add(detail::mse(mu, batch_mean), detail::mse(var, batch_var));
}

// Negative mean per-sample activation norm: -(1/B) * sum_i ||feat_i||_2.
// Minimizing it drives the teacher toward strong responses.
inline Tensor activation_loss(const Tensor& features) {
    if (features.ndim() != 2)
        throw dimension_error("activation_loss: expected [B x H] features, got " + shape_str(features.shape()));
    return neg(mean_all(row_l2norm(features)));
}

// Mean prediction entropy -sum_i p_i log p_i at temperature 1, averaged
// over batch and heads.
inline Tensor entropy_loss(const Tensor& logits) {
    if (logits.ndim() < 2)
        throw dimension_error("entropy_loss: expected at least [B x M] logits, got " + shape_str(logits.shape()));
    Tensor lp = log_softmax(logits, 1.0);
    Tensor p = softmax(logits, 1.0);
    Tensor per_row = neg(sum_last(mul(p, lp)));
    return mean_all(per_row);
}

// Combined generator objective: metadata + alpha * activation + beta *
// entropy; the *_only kinds return the bare term so ablations share one
// entry point.
inline Tensor generator_loss(GeneratorLossKind kind, const GeneratorLossWeights& weights,
                             const Tensor& features, const Tensor& logits,
                             const std::vector<double>& mean_ref, const std::vector<double>& var_ref) {
    weights.validate();
    switch (kind) {
        case GeneratorLossKind::metadata_only:
            return metadata_loss(features, mean_ref, var_ref);
        case GeneratorLossKind::activation_only:
            return activation_loss(features);
        case GeneratorLossKind::entropy_only:
            return entropy_loss(logits);
        case GeneratorLossKind::weighted: {
            Tensor total = metadata_loss(features, mean_ref, var_ref);
            if (weights.alpha != 0.0) total = add(total, scale(activation_loss(features), weights.alpha));
            if (weights.beta != 0.0) total = add(total, scale(entropy_loss(logits), weights.beta));
            return total;
        }
    }
    throw parameter_error("generator_loss: unknown kind");
}

// Temperature-softened KL divergence between teacher and student logits,
//   (T^2 / B) * sum_batch sum_i p_i log(p_i / q_i)
// per head, averaged over heads. The teacher side is detached: gradients
// reach only the student logits.
inline Tensor kl_loss(const Tensor& teacher_logits, const Tensor& student_logits, double temperature) {
    if (temperature <= 0.0)
        throw parameter_error("kl_loss: temperature must be positive, got " + std::to_string(temperature));
    detail::check_logits_pair(teacher_logits, student_logits, "kl_loss");
    const size_t batch = teacher_logits.dim(0);
    const size_t rows = teacher_logits.size() / teacher_logits.shape().back();
    const size_t heads = rows / batch;
    Tensor zt = teacher_logits.detach();
    Tensor p = softmax(zt, temperature);
    Tensor lp = log_softmax(zt, temperature);
    Tensor lq = log_softmax(student_logits, temperature);
    Tensor sum = sum_all(mul(p, sub(lp, lq)));
    const double scale_factor = temperature * temperature /
                                (static_cast<double>(batch) * static_cast<double>(heads));
    return scale(sum, scale_factor);
}

// (1 / (B*M)) * sum (z_S - z_T)^2 per head, averaged over heads; equal to
// the plain mean over all logit entries. Teacher detached.
inline Tensor mse_logit_loss(const Tensor& teacher_logits, const Tensor& student_logits) {
    detail::check_logits_pair(teacher_logits, student_logits, "mse_logit_loss");
    return mean_all(square(sub(student_logits, teacher_logits.detach())));
}

// Mean negative log-likelihood of the true beams, over batch and heads.
// labels are row-major [B x heads].
inline Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.ndim() < 2)
        throw dimension_error("cross_entropy_loss: expected at least [B x M] logits");
    const size_t m = logits.shape().back();
    const size_t rows = logits.size() / m;
    if (labels.size() != rows)
        throw dimension_error("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for " +
                              std::to_string(rows) + " logit rows");
    for (int l : labels)
        if (l < 0 || static_cast<size_t>(l) >= m)
            throw contract_error("cross_entropy_loss: label " + std::to_string(l) + " outside [0, " +
                                 std::to_string(m) + ")");
    Tensor lp = log_softmax(reshape(logits, {rows, m}), 1.0);
    return neg(mean_all(pick_per_row(lp, labels)));
}

// Standard distillation objective: gamma * KL + (1 - gamma) * cross-entropy.
inline Tensor kd_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                      const std::vector<int>& labels, double gamma, double temperature) {
    if (gamma < 0.0 || gamma > 1.0)
        throw parameter_error("kd_loss: gamma must lie in [0, 1], got " + std::to_string(gamma));
    if (gamma == 1.0) return kl_loss(teacher_logits, student_logits, temperature);
    if (gamma == 0.0) return cross_entropy_loss(student_logits, labels);
    return add(scale(kl_loss(teacher_logits, student_logits, temperature), gamma),
               scale(cross_entropy_loss(student_logits, labels), 1.0 - gamma));
}

} // namespace dfkd
