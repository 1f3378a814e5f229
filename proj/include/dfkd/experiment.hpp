#pragma once

// Manifest-driven experiment runner. A manifest names one dataset and one
// seed, resolves a shared teacher (from a checkpoint path or by training
// one), and lists arms to run sequentially. Every arm gets its own
// checkpoints, run log, and eval report under the output directory, plus a
// combined JSON/CSV comparison table assembled from the individual reports
// without recomputation.
//
// Manifest shape (JSON):
//   {
//     "dataset": "scene.dfkd",
//     "seed": 1,
//     "teacher": {"path": "teacher.ckpt"}            // or {"train": {...}}
//     "eval_ks": [1, 5],                             // optional
//     "arms": [
//       {"name": "weighted", "pipeline": "df",
//        "generator_loss": "weighted", "student_loss": "kl",
//        "temperature": 5, "alpha": 1e-4, "beta": 1e-2,
//        "generator_epochs": 500, "student_epochs": 500,
//        "student_hidden": 32, "noise_dim": 500, "generator_hidden": 64},
//       {"name": "kd", "pipeline": "kd", "gamma": 0.7, "temperature": 5},
//       {"name": "kd-mse", "pipeline": "kd-mse", "gamma": 0.7},
//       {"name": "scratch", "pipeline": "scratch", "epochs": 100},
//       {"name": "teacher", "pipeline": "teacher"}
//     ]
//   }
//
// All arms share the manifest seed, so paired arms differ only in the knob
// under study.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfkd/checkpoint.hpp"
#include "dfkd/evaluate.hpp"
#include "dfkd/pipelines.hpp"
#include "dfkd/scenario.hpp"

namespace dfkd {

struct ArmSpec {
    std::string name;
    std::string pipeline; // df | kd | kd-mse | scratch | teacher
    KDConfig kd;
    GeneratorLossWeights weights;
    size_t generator_epochs = 500;
    size_t student_epochs = 500;
    size_t epochs = 0; // kd / kd-mse / scratch budget; 0 = pipeline default
    size_t student_hidden = 32;
    size_t noise_dim = 500;
    size_t generator_hidden = 64;
};

struct ExperimentManifest {
    std::string dataset_path;
    uint64_t seed = 1;
    std::optional<std::string> teacher_path;
    std::optional<TrainConfig> teacher_train;
    std::optional<size_t> teacher_hidden;
    std::vector<size_t> eval_ks = {1, 5};
    std::vector<ArmSpec> arms;
};

namespace detail {

inline std::string json_error_location(const std::string& text, size_t byte) {
    size_t line = 1, col = 1;
    for (size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

[[noreturn]] inline void manifest_field_error(const std::string& field, const std::string& what) {
    throw parameter_error("manifest field '" + field + "': " + what);
}

} // namespace detail

inline ExperimentManifest parse_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw format_error("manifest '" + path + "': JSON parse error at " +
                           detail::json_error_location(text, e.byte) + ": " + e.what());
    }

    ExperimentManifest m;
    if (!j.contains("dataset") || !j["dataset"].is_string())
        detail::manifest_field_error("dataset", "required string path");
    m.dataset_path = j["dataset"].get<std::string>();
    m.seed = j.value("seed", uint64_t{1});
    if (j.contains("eval_ks")) m.eval_ks = j["eval_ks"].get<std::vector<size_t>>();

    if (j.contains("teacher")) {
        const auto& t = j["teacher"];
        if (t.contains("path")) m.teacher_path = t["path"].get<std::string>();
        else if (t.contains("train")) {
            m.teacher_train = t["train"].get<TrainConfig>();
            if (t["train"].contains("hidden_dim")) m.teacher_hidden = t["train"]["hidden_dim"].get<size_t>();
        } else detail::manifest_field_error("teacher", "needs either 'path' or 'train'");
    }

    if (!j.contains("arms") || !j["arms"].is_array())
        detail::manifest_field_error("arms", "required array");
    if (j["arms"].empty()) detail::manifest_field_error("arms", "list is empty");

    std::set<std::string> names;
    for (size_t i = 0; i < j["arms"].size(); ++i) {
        const auto& a = j["arms"][i];
        const std::string where = "arms[" + std::to_string(i) + "]";
        ArmSpec arm;
        if (!a.contains("name") || !a["name"].is_string())
            detail::manifest_field_error(where + ".name", "required string");
        arm.name = a["name"].get<std::string>();
        if (!names.insert(arm.name).second)
            detail::manifest_field_error(where + ".name", "duplicate arm name '" + arm.name + "'");
        arm.pipeline = a.value("pipeline", std::string("df"));
        if (arm.pipeline != "df" && arm.pipeline != "kd" && arm.pipeline != "kd-mse" &&
            arm.pipeline != "scratch" && arm.pipeline != "teacher")
            detail::manifest_field_error(where + ".pipeline", "unknown pipeline '" + arm.pipeline + "'");

        try {
            if (a.contains("generator_loss"))
                arm.kd.generator_loss = generator_loss_kind_from(a["generator_loss"].get<std::string>());
            if (a.contains("student_loss"))
                arm.kd.student_loss = student_loss_kind_from(a["student_loss"].get<std::string>());
        } catch (const Error& e) {
            detail::manifest_field_error(where, e.what());
        }
        if (arm.pipeline == "kd-mse") arm.kd.student_loss = StudentLossKind::mse;
        if (a.contains("temperature")) arm.kd.temperature = a["temperature"].get<double>();
        else if (arm.kd.student_loss == StudentLossKind::kl) arm.kd.temperature = 5.0;
        arm.kd.gamma = a.value("gamma", 0.7);
        arm.weights.alpha = a.value("alpha", arm.weights.alpha);
        arm.weights.beta = a.value("beta", arm.weights.beta);
        arm.kd.weights = arm.weights;
        arm.generator_epochs = a.value("generator_epochs", arm.generator_epochs);
        arm.student_epochs = a.value("student_epochs", arm.student_epochs);
        arm.epochs = a.value("epochs", arm.epochs);
        arm.student_hidden = a.value("student_hidden", arm.student_hidden);
        arm.noise_dim = a.value("noise_dim", arm.noise_dim);
        arm.generator_hidden = a.value("generator_hidden", arm.generator_hidden);
        m.arms.push_back(std::move(arm));
    }
    return m;
}

struct ArmResult {
    std::string name;
    std::string pipeline;
    bool ok = false;
    std::string error;
    EvalReport report;
};

struct ExperimentResult {
    std::vector<ArmResult> arms;
    bool all_ok = true;
    std::string combined_json_path;
    std::string combined_csv_path;
};

inline ExperimentResult run_experiment(const std::string& manifest_path, const std::string& out_dir,
                                       bool quiet = true) {
    namespace fs = std::filesystem;
    const ExperimentManifest m = parse_manifest(manifest_path);
    fs::create_directories(out_dir);

    const Dataset ds = load_dataset(m.dataset_path);

    // resolve the shared teacher
    TeacherCheckpoint teacher;
    bool teacher_ready = false;
    if (m.teacher_path) {
        teacher = load_teacher(*m.teacher_path);
        teacher_ready = true;
    } else if (m.teacher_train) {
        TrainConfig tcfg = *m.teacher_train;
        tcfg.seed = m.seed;
        const size_t hidden = m.teacher_hidden.value_or(128);
        if (!quiet) std::fprintf(stderr, "[experiment] training shared teacher (H=%zu)\n", hidden);
        RunLog log;
        teacher = train_teacher(ds, model_config_for(ds.config, hidden), tcfg, &log);
        const std::string base = (fs::path(out_dir) / "teacher").string();
        save_checkpoint(base + ".ckpt", teacher);
        log.save_jsonl(base + ".runlog.jsonl");
        teacher_ready = true;
    }

    auto needs_teacher = [](const std::string& p) { return p != "scratch"; };

    ExperimentResult result;
    for (const ArmSpec& arm : m.arms) {
        ArmResult ar;
        ar.name = arm.name;
        ar.pipeline = arm.pipeline;
        const std::string base = (fs::path(out_dir) / arm.name).string();
        try {
            if (needs_teacher(arm.pipeline) && !teacher_ready)
                throw contract_error("arm '" + arm.name + "' needs a teacher; none configured");
            if (!quiet) std::fprintf(stderr, "[experiment] arm '%s' (%s)\n", arm.name.c_str(), arm.pipeline.c_str());

            SeqModel model;
            std::string kind;
            RunLog log;
            if (arm.pipeline == "teacher") {
                model = eval_model(teacher);
                kind = "teacher";
            } else if (arm.pipeline == "df") {
                TrainConfig gen_cfg = TrainConfig::generator_defaults();
                gen_cfg.epochs = arm.generator_epochs;
                gen_cfg.seed = m.seed;
                GeneratorConfig gcfg =
                    generator_config_for(teacher.config, arm.noise_dim, arm.generator_hidden);
                RunLog gen_log;
                GeneratorCheckpoint gen = train_generator(teacher, gcfg, arm.kd, gen_cfg, &gen_log);
                save_checkpoint(base + ".generator.ckpt", gen);
                gen_log.save_jsonl(base + ".generator.runlog.jsonl");

                TrainConfig stu_cfg = TrainConfig::df_student_defaults();
                stu_cfg.epochs = arm.student_epochs;
                stu_cfg.seed = m.seed;
                SeqModelConfig scfg = teacher.config;
                scfg.hidden_dim = arm.student_hidden;
                StudentCheckpoint student = train_student_df(teacher, gen, scfg, arm.kd, stu_cfg, &log);
                save_checkpoint(base + ".student.ckpt", student);
                model = eval_model(student);
                kind = "df-student";
            } else if (arm.pipeline == "kd" || arm.pipeline == "kd-mse") {
                TrainConfig tcfg = arm.pipeline == "kd" ? TrainConfig::kd_defaults()
                                                        : TrainConfig::kd_mse_defaults();
                if (arm.epochs) tcfg.epochs = arm.epochs;
                tcfg.seed = m.seed;
                SeqModelConfig scfg = teacher.config;
                scfg.hidden_dim = arm.student_hidden;
                StudentCheckpoint student = train_student_kd(teacher, ds, scfg, arm.kd, tcfg, &log);
                save_checkpoint(base + ".student.ckpt", student);
                model = eval_model(student);
                kind = arm.pipeline;
            } else { // scratch
                TrainConfig tcfg = TrainConfig::scratch_defaults();
                if (arm.epochs) tcfg.epochs = arm.epochs;
                tcfg.seed = m.seed;
                SeqModelConfig scfg = model_config_for(ds.config, arm.student_hidden);
                StudentCheckpoint student = train_student_scratch(ds, scfg, tcfg, &log);
                save_checkpoint(base + ".student.ckpt", student);
                model = eval_model(student);
                kind = "scratch";
            }
            if (arm.pipeline != "teacher") log.save_jsonl(base + ".runlog.jsonl");

            ar.report = make_eval_report(model, model_identity(model, kind), ds, Split::test, m.eval_ks);
            std::ofstream rep(base + ".report.json");
            rep << nlohmann::json(ar.report).dump(2) << '\n';
            ar.ok = true;
        } catch (const std::exception& e) {
            ar.ok = false;
            ar.error = e.what();
            result.all_ok = false;
            if (!quiet) std::fprintf(stderr, "[experiment] arm '%s' failed: %s\n", arm.name.c_str(), e.what());
        }
        result.arms.push_back(std::move(ar));
    }

    // combined table, assembled from the per-arm reports
    nlohmann::json combined = nlohmann::json::array();
    std::ostringstream csv;
    csv << csv_header();
    for (const ArmResult& ar : result.arms) {
        nlohmann::json entry = {{"arm", ar.name}, {"pipeline", ar.pipeline}, {"ok", ar.ok}};
        if (ar.ok) {
            entry["report"] = ar.report;
            append_csv_rows(csv, ar.name, ar.report);
        } else {
            entry["error"] = ar.error;
        }
        combined.push_back(std::move(entry));
    }
    result.combined_json_path = (fs::path(out_dir) / "combined.json").string();
    result.combined_csv_path = (fs::path(out_dir) / "combined.csv").string();
    {
        std::ofstream out(result.combined_json_path);
        out << combined.dump(2) << '\n';
    }
    {
        std::ofstream out(result.combined_csv_path);
        out << csv.str();
    }
    return result;
}

} // namespace dfkd
