#pragma once

// Training procedures: teacher pretraining with feature-statistics capture,
// generator training by knowledge inversion, data-free student training on
// synthetic batches, and the dataset-based baselines (standard KD, KD-MSE,
// student from scratch).
//
// Data-free phases have no dataset anywhere in their signatures. Their
// "epoch" is defined as 32 optimizer steps (one nominal pass of 32
// batches), which keeps epoch-denominated budgets meaningful without data.
//
// Every run is a pure function of (seed, configs): batch order, noise and
// init draws all come from streams derived from the seed, so reruns
// reproduce checkpoints bit for bit.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "dfkd/adam.hpp"
#include "dfkd/checkpoint.hpp"
#include "dfkd/evaluate.hpp"
#include "dfkd/losses.hpp"
#include "dfkd/models.hpp"
#include "dfkd/rng.hpp"
#include "dfkd/runlog.hpp"
#include "dfkd/scenario.hpp"

namespace dfkd {

constexpr size_t kStepsPerDataFreeEpoch = 32;

struct TrainConfig {
    size_t epochs = 100;
    size_t batch_size = 32;
    double lr = 1e-3;
    uint64_t seed = 1;
    bool verbose = false; // stderr progress only; never serialized

    static TrainConfig teacher_defaults() { return {100, 32, 1e-3, 1}; }
    static TrainConfig generator_defaults() { return {500, 32, 1e-3, 1}; }
    static TrainConfig df_student_defaults() { return {500, 32, 1e-3, 1}; }
    static TrainConfig kd_defaults() { return {20, 32, 1e-3, 1}; }
    static TrainConfig kd_mse_defaults() { return {40, 32, 1e-3, 1}; }
    static TrainConfig scratch_defaults() { return {100, 32, 1e-3, 1}; }

    void validate() const {
        if (!epochs || !batch_size) throw parameter_error("TrainConfig: epochs and batch size must be positive");
        if (lr <= 0.0) throw parameter_error("TrainConfig: learning rate must be positive");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"lr", c.lr}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    TrainConfig d;
    c.epochs = j.value("epochs", d.epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.lr = j.value("lr", d.lr);
    c.seed = j.value("seed", d.seed);
}

inline SeqModelConfig model_config_for(const ScenarioConfig& scenario, size_t hidden_dim) {
    SeqModelConfig cfg;
    cfg.input_dim = scenario.feature_dim;
    cfg.hidden_dim = hidden_dim;
    cfg.num_beams = scenario.array.num_beams;
    cfg.obs_len = scenario.obs_len;
    cfg.horizon = scenario.horizon;
    return cfg;
}

inline GeneratorConfig generator_config_for(const SeqModelConfig& teacher, size_t noise_dim = 500,
                                            size_t hidden_dim = 64) {
    GeneratorConfig cfg;
    cfg.noise_dim = noise_dim;
    cfg.hidden_dim = hidden_dim;
    cfg.obs_len = teacher.obs_len;
    cfg.feature_dim = teacher.input_dim;
    cfg.horizon = teacher.horizon;
    return cfg;
}

namespace detail {

inline std::chrono::steady_clock::time_point clock_start() { return std::chrono::steady_clock::now(); }

inline double clock_seconds(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// wall-clock and closing metrics live in the footer only, so the per-epoch
// records of two identical runs compare equal
inline void close_log(RunLog* log, std::chrono::steady_clock::time_point t0, nlohmann::json extra = {}) {
    if (!log) return;
    nlohmann::json footer = {{"status", "ok"}, {"wall_clock_s", clock_seconds(t0)}};
    if (!log->records.empty() && log->records.back().contains("loss"))
        footer["final_loss"] = log->records.back()["loss"];
    if (!log->records.empty() && log->records.back().contains("train_loss"))
        footer["final_loss"] = log->records.back()["train_loss"];
    if (!log->records.empty() && log->records.back().contains("val_top1"))
        footer["final_val_top1"] = log->records.back()["val_top1"];
    if (extra.is_object())
        for (auto& [k, v] : extra.items()) footer[k] = v;
    log->footer = std::move(footer);
}

inline void check_compatible(const SeqModelConfig& teacher, const SeqModelConfig& student) {
    if (teacher.input_dim != student.input_dim || teacher.num_beams != student.num_beams ||
        teacher.obs_len != student.obs_len || teacher.horizon != student.horizon)
        throw config_mismatch_error("teacher and student configs differ beyond hidden_dim");
}

inline void check_compatible(const SeqModelConfig& teacher, const GeneratorConfig& gen) {
    if (gen.feature_dim != teacher.input_dim || gen.obs_len != teacher.obs_len ||
        gen.horizon != teacher.horizon)
        throw config_mismatch_error("generator output shape does not match the teacher's input");
}

inline void check_dataset_model(const Dataset& ds, const SeqModelConfig& cfg) {
    if (ds.config.feature_dim != cfg.input_dim || ds.config.array.num_beams != cfg.num_beams ||
        ds.config.obs_len != cfg.obs_len || ds.config.horizon != cfg.horizon)
        throw config_mismatch_error("model config does not match the dataset (D/M/L/V)");
}

struct LabeledBatch {
    Tensor x;                // [B x (L+V) x D]
    std::vector<int> labels; // row-major [B x (V+1)]
};

inline LabeledBatch make_batch(const Dataset& ds, const std::vector<size_t>& idx, size_t begin,
                               size_t count) {
    LabeledBatch batch;
    batch.x = batch_frames(ds, idx, begin, count);
    const size_t heads = ds.config.horizon + 1;
    batch.labels.reserve(count * heads);
    for (size_t i = 0; i < count; ++i) {
        const Sample& s = ds.samples[idx[begin + i]];
        for (int32_t l : s.labels) batch.labels.push_back(l);
    }
    return batch;
}

// Shared supervised loop. loss_fn(batch) -> scalar loss; returns trained
// parameters. Exactly the same draw sequence regardless of what the loss
// does, so the teacher and the from-scratch student share one code path.
template <typename LossFn>
SeqModelParams supervised_train(const Dataset& ds, const SeqModelConfig& cfg, const TrainConfig& tcfg,
                                const char* init_tag, LossFn loss_fn, RunLog* log) {
    tcfg.validate();
    check_dataset_model(ds, cfg);
    std::vector<size_t> train_idx = ds.split_indices(Split::train);
    if (train_idx.empty()) throw contract_error("train split is empty");

    SeqModelParams params = SeqModelParams::init(cfg, derive_seed(tcfg.seed, init_tag));
    AdamState adam(params.named(), {tcfg.lr});
    const bool has_val = !ds.split_indices(Split::val).empty();

    for (size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        Rng order_rng(derive_seed(derive_seed(tcfg.seed, "epoch-order"), epoch));
        order_rng.shuffle(train_idx);
        double loss_sum = 0.0;
        size_t steps = 0;
        for (size_t begin = 0; begin < train_idx.size(); begin += tcfg.batch_size) {
            const size_t count = std::min(tcfg.batch_size, train_idx.size() - begin);
            LabeledBatch batch = make_batch(ds, train_idx, begin, count);
            Tensor loss = loss_fn(params, batch);
            adam.zero_grad();
            backward(loss);
            adam.step();
            loss_sum += loss.item();
            ++steps;
        }
        double val_top1 = -1.0;
        if (log || tcfg.verbose) {
            if (has_val) {
                SeqModel snapshot{cfg, params.frozen()};
                val_top1 = mean_of(topk_accuracy(batch_logits_fn(snapshot), ds, Split::val, 1));
            }
        }
        if (log) {
            nlohmann::json rec = {{"epoch", epoch},
                                  {"train_loss", loss_sum / static_cast<double>(steps)}};
            if (has_val) rec["val_top1"] = val_top1;
            log->records.push_back(std::move(rec));
        }
        if (tcfg.verbose && (epoch % std::max<size_t>(1, tcfg.epochs / 20) == 0 || epoch + 1 == tcfg.epochs)) {
            if (has_val)
                std::fprintf(stderr, "  epoch %zu/%zu  loss %.4f  val-top1 %.3f\n", epoch + 1, tcfg.epochs,
                             loss_sum / static_cast<double>(steps), val_top1);
            else
                std::fprintf(stderr, "  epoch %zu/%zu  loss %.4f\n", epoch + 1, tcfg.epochs,
                             loss_sum / static_cast<double>(steps));
        }
    }
    return params;
}

// Streaming per-feature mean and biased variance of last_hidden over the
// train split.
inline void capture_metadata(const Dataset& ds, const SeqModelConfig& cfg, const SeqModelParams& params,
                             std::vector<double>& mean_out, std::vector<double>& var_out) {
    const std::vector<size_t> idx = ds.split_indices(Split::train);
    const size_t h = cfg.hidden_dim;
    std::vector<double> sum(h, 0.0), sumsq(h, 0.0);
    size_t rows = 0;
    SeqModelParams frozen = params.frozen();
    constexpr size_t kChunk = 64;
    for (size_t begin = 0; begin < idx.size(); begin += kChunk) {
        const size_t count = std::min(kChunk, idx.size() - begin);
        Tensor hidden = seq_forward(frozen, cfg, batch_frames(ds, idx, begin, count)).last_hidden;
        const double* p = hidden.data().data();
        for (size_t i = 0; i < count; ++i)
            for (size_t j = 0; j < h; ++j) {
                sum[j] += p[i * h + j];
                sumsq[j] += p[i * h + j] * p[i * h + j];
            }
        rows += count;
    }
    mean_out.resize(h);
    var_out.resize(h);
    const double inv = 1.0 / static_cast<double>(rows);
    for (size_t j = 0; j < h; ++j) {
        mean_out[j] = sum[j] * inv;
        var_out[j] = std::max(0.0, sumsq[j] * inv - mean_out[j] * mean_out[j]);
    }
}

} // namespace detail

// Cross-entropy pretraining of the teacher; afterwards a full pass over the
// train split records the feature statistics into the checkpoint.
inline TeacherCheckpoint train_teacher(const Dataset& ds, const SeqModelConfig& cfg,
                                       const TrainConfig& tcfg, RunLog* log = nullptr) {
    const auto t0 = detail::clock_start();
    if (log)
        log->header = {{"pipeline", "teacher"}, {"model", cfg}, {"train", tcfg},
                       {"param_count", SeqModelParams::init(cfg, 0).param_count()}};
    TeacherCheckpoint ckpt;
    ckpt.config = cfg;
    ckpt.params = detail::supervised_train(
        ds, cfg, tcfg, "teacher-init",
        [&](const SeqModelParams& p, const detail::LabeledBatch& b) {
            return cross_entropy_loss(seq_forward(p, cfg, b.x).logits, b.labels);
        },
        log);
    detail::capture_metadata(ds, cfg, ckpt.params, ckpt.meta_mean, ckpt.meta_var);
    ckpt.provenance = {tcfg.seed, tcfg.epochs};
    ckpt.validate();
    detail::close_log(log, t0, {{"param_count", ckpt.params.param_count()}});
    return ckpt;
}

// Plain cross-entropy training of the student architecture on real data
// ("without KD"); identical loop to train_teacher, no metadata capture.
inline StudentCheckpoint train_student_scratch(const Dataset& ds, const SeqModelConfig& cfg,
                                               const TrainConfig& tcfg, RunLog* log = nullptr) {
    const auto t0 = detail::clock_start();
    if (log) log->header = {{"pipeline", "scratch"}, {"model", cfg}, {"train", tcfg}};
    StudentCheckpoint ckpt;
    ckpt.config = cfg;
    ckpt.params = detail::supervised_train(
        ds, cfg, tcfg, "teacher-init",
        [&](const SeqModelParams& p, const detail::LabeledBatch& b) {
            return cross_entropy_loss(seq_forward(p, cfg, b.x).logits, b.labels);
        },
        log);
    ckpt.provenance = {tcfg.seed, tcfg.epochs};
    detail::close_log(log, t0, {{"param_count", ckpt.params.param_count()}});
    return ckpt;
}

// Knowledge inversion, step (1): per step, sample standard-normal noise,
// run the generator, push the synthetic batch through the frozen teacher,
// and descend the selected generator loss. All three loss terms are logged
// every epoch regardless of the selected kind; unselected terms are
// computed off-graph and never touch the update.
inline GeneratorCheckpoint train_generator(const TeacherCheckpoint& teacher, const GeneratorConfig& gcfg,
                                           const KDConfig& kdcfg, const TrainConfig& tcfg,
                                           RunLog* log = nullptr) {
    tcfg.validate();
    gcfg.validate();
    kdcfg.weights.validate();
    detail::check_compatible(teacher.config, gcfg);
    if (teacher.meta_mean.size() != teacher.config.hidden_dim ||
        teacher.meta_var.size() != teacher.config.hidden_dim)
        throw metadata_missing_error("train_generator: teacher checkpoint lacks feature statistics");

    const auto t0 = detail::clock_start();
    const SeqModelParams frozen_teacher = teacher.params.frozen();
    GeneratorParams gen = GeneratorParams::init(gcfg, derive_seed(tcfg.seed, "generator-init"));
    AdamState adam(gen.named(), {tcfg.lr});
    Rng noise_rng(derive_seed(tcfg.seed, "generator-noise"));

    if (log)
        log->header = {{"pipeline", "generator"},
                       {"generator", gcfg},
                       {"train", tcfg},
                       {"loss_kind", to_string(kdcfg.generator_loss)},
                       {"weights", kdcfg.weights},
                       {"steps_per_epoch", kStepsPerDataFreeEpoch}};

    for (size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        double total_sum = 0.0, meta_sum = 0.0, act_sum = 0.0, ent_sum = 0.0;
        for (size_t step = 0; step < kStepsPerDataFreeEpoch; ++step) {
            Tensor noise = sample_noise(noise_rng, tcfg.batch_size, gcfg.noise_dim);
            Tensor synth = generator_forward(gen, gcfg, noise);
            SeqForwardResult out = seq_forward(frozen_teacher, teacher.config, synth);
            Tensor loss = generator_loss(kdcfg.generator_loss, kdcfg.weights, out.last_hidden,
                                         out.logits, teacher.meta_mean, teacher.meta_var);
            adam.zero_grad();
            backward(loss);
            adam.step();
            total_sum += loss.item();
            // off-graph term values for the log
            Tensor feat_v = out.last_hidden.detach();
            Tensor logits_v = out.logits.detach();
            meta_sum += metadata_loss(feat_v, teacher.meta_mean, teacher.meta_var).item();
            act_sum += activation_loss(feat_v).item();
            ent_sum += entropy_loss(logits_v).item();
        }
        const double inv = 1.0 / static_cast<double>(kStepsPerDataFreeEpoch);
        if (log)
            log->records.push_back({{"epoch", epoch},
                                    {"loss", total_sum * inv},
                                    {"metadata", meta_sum * inv},
                                    {"activation", act_sum * inv},
                                    {"entropy", ent_sum * inv}});
        if (tcfg.verbose && (epoch % std::max<size_t>(1, tcfg.epochs / 20) == 0 || epoch + 1 == tcfg.epochs))
            std::fprintf(stderr, "  epoch %zu/%zu  loss %.5f  (meta %.5f act %.4f ent %.4f)\n",
                         epoch + 1, tcfg.epochs, total_sum * inv, meta_sum * inv, act_sum * inv,
                         ent_sum * inv);
    }
    GeneratorCheckpoint ckpt;
    ckpt.config = gcfg;
    ckpt.params = gen;
    ckpt.provenance = {tcfg.seed, tcfg.epochs};
    detail::close_log(log, t0, {{"param_count", gen.param_count()}});
    return ckpt;
}

// Data-free distillation, step (2): fresh noise through the frozen
// generator, teacher and student logits on the synthetic batch, KL or
// logit-MSE descent on the student. No Dataset in sight.
inline StudentCheckpoint train_student_df(const TeacherCheckpoint& teacher,
                                          const GeneratorCheckpoint& generator,
                                          const SeqModelConfig& student_cfg, const KDConfig& kdcfg,
                                          const TrainConfig& tcfg, RunLog* log = nullptr) {
    tcfg.validate();
    kdcfg.validate_for_student();
    detail::check_compatible(teacher.config, student_cfg);
    detail::check_compatible(teacher.config, generator.config);
    if (kdcfg.student_loss == StudentLossKind::mse && kdcfg.temperature && log)
        log->warn("mse student loss ignores the configured temperature");

    const auto t0 = detail::clock_start();
    const SeqModelParams frozen_teacher = teacher.params.frozen();
    const GeneratorParams frozen_gen = generator.params.frozen();
    SeqModelParams student = SeqModelParams::init(student_cfg, derive_seed(tcfg.seed, "student-init"));
    AdamState adam(student.named(), {tcfg.lr});
    Rng noise_rng(derive_seed(tcfg.seed, "df-student-noise"));

    if (log)
        log->header = {{"pipeline", "df-student"},
                       {"model", student_cfg},
                       {"train", tcfg},
                       {"student_loss", to_string(kdcfg.student_loss)},
                       {"steps_per_epoch", kStepsPerDataFreeEpoch},
                       {"param_count", student.param_count()}};

    for (size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (size_t step = 0; step < kStepsPerDataFreeEpoch; ++step) {
            Tensor noise = sample_noise(noise_rng, tcfg.batch_size, generator.config.noise_dim);
            Tensor synth = generator_forward(frozen_gen, generator.config, noise);
            Tensor z_t = seq_forward(frozen_teacher, teacher.config, synth).logits;
            Tensor z_s = seq_forward(student, student_cfg, synth).logits;
            Tensor loss = kdcfg.student_loss == StudentLossKind::kl
                              ? kl_loss(z_t, z_s, *kdcfg.temperature)
                              : mse_logit_loss(z_t, z_s);
            adam.zero_grad();
            backward(loss);
            adam.step();
            loss_sum += loss.item();
        }
        if (log)
            log->records.push_back(
                {{"epoch", epoch}, {"loss", loss_sum / static_cast<double>(kStepsPerDataFreeEpoch)}});
        if (tcfg.verbose && (epoch % std::max<size_t>(1, tcfg.epochs / 20) == 0 || epoch + 1 == tcfg.epochs))
            std::fprintf(stderr, "  epoch %zu/%zu  loss %.5f\n", epoch + 1, tcfg.epochs,
                         loss_sum / static_cast<double>(kStepsPerDataFreeEpoch));
    }
    StudentCheckpoint ckpt;
    ckpt.config = student_cfg;
    ckpt.params = student;
    ckpt.provenance = {tcfg.seed, tcfg.epochs};
    detail::close_log(log, t0, {{"param_count", student.param_count()}});
    return ckpt;
}

// Standard KD on real data: gamma * KL + (1-gamma) * CE, or the MSE variant
// with the KL term replaced by the logit MSE.
inline StudentCheckpoint train_student_kd(const TeacherCheckpoint& teacher, const Dataset& ds,
                                          const SeqModelConfig& student_cfg, const KDConfig& kdcfg,
                                          const TrainConfig& tcfg, RunLog* log = nullptr) {
    kdcfg.validate_for_student();
    detail::check_compatible(teacher.config, student_cfg);
    detail::check_dataset_model(ds, teacher.config);
    if (kdcfg.student_loss == StudentLossKind::mse && kdcfg.temperature && log)
        log->warn("mse student loss ignores the configured temperature");

    const auto t0 = detail::clock_start();
    const SeqModelParams frozen_teacher = teacher.params.frozen();
    const double gamma = kdcfg.gamma;
    if (log)
        log->header = {{"pipeline", kdcfg.student_loss == StudentLossKind::kl ? "kd" : "kd-mse"},
                       {"model", student_cfg},
                       {"train", tcfg},
                       {"kd", kdcfg}};

    StudentCheckpoint ckpt;
    ckpt.config = student_cfg;
    ckpt.params = detail::supervised_train(
        ds, student_cfg, tcfg, "student-init",
        [&](const SeqModelParams& p, const detail::LabeledBatch& b) {
            Tensor z_s = seq_forward(p, student_cfg, b.x).logits;
            if (gamma == 0.0) return cross_entropy_loss(z_s, b.labels);
            Tensor z_t = seq_forward(frozen_teacher, teacher.config, b.x).logits;
            if (kdcfg.student_loss == StudentLossKind::kl)
                return kd_loss(z_t, z_s, b.labels, gamma, *kdcfg.temperature);
            Tensor mse = mse_logit_loss(z_t, z_s);
            if (gamma == 1.0) return mse;
            return add(scale(mse, gamma), scale(cross_entropy_loss(z_s, b.labels), 1.0 - gamma));
        },
        log);
    ckpt.provenance = {tcfg.seed, tcfg.epochs};
    detail::close_log(log, t0, {{"param_count", ckpt.params.param_count()}});
    return ckpt;
}

} // namespace dfkd
