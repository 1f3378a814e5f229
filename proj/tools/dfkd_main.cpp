// dfkd -- data-free knowledge distillation for LiDAR-aided beam tracking.
//
// Subcommands: gen-data, train-teacher, train-generator, distill-df,
// distill-kd, train-scratch, eval, experiment, inspect. Numeric settings
// resolve as: command-line flag > --config JSON file > built-in default.
//
// Exit codes: 0 success, 1 contract/runtime failure (single-line
// "error: <category>: <message>" on stderr), 2 usage errors.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dfkd/dfkd.hpp"

using namespace dfkd;
namespace fs = std::filesystem;

namespace {

struct GlobalOpts {
    uint64_t seed = 1;
    bool seed_given = false;
    std::string out;
    std::string config_path;
    bool quiet = false;
    nlohmann::json config; // parsed --config file, or empty object
};

nlohmann::json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config file '" + path + "'");
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw format_error("config file '" + path + "' is not valid JSON");
    if (!j.is_object()) throw format_error("config file '" + path + "' must hold a JSON object");
    return j;
}

// CLI11 writes flag values during parse; config-file values must not
// clobber them. This helper applies the config value only when the flag
// was absent.
template <typename T>
void apply_config(T& value, const CLI::Option* opt, const nlohmann::json& section, const char* key) {
    if ((!opt || opt->count() == 0) && section.is_object() && section.contains(key))
        value = section[key].get<T>();
}

nlohmann::json section(const nlohmann::json& cfg, const char* name) {
    return cfg.is_object() && cfg.contains(name) ? cfg[name] : nlohmann::json::object();
}

std::string default_out(const GlobalOpts& g, const std::string& fallback) {
    return g.out.empty() ? fallback : g.out;
}

std::string runlog_path(const std::string& ckpt_path) {
    return fs::path(ckpt_path).replace_extension(".runlog.jsonl").string();
}

void say(const GlobalOpts& g, const std::string& msg) {
    if (!g.quiet) std::fprintf(stderr, "%s\n", msg.c_str());
}

ScenarioConfig scenario_from(const GlobalOpts& g) {
    ScenarioConfig cfg;
    const nlohmann::json sec = section(g.config, "scenario");
    if (!sec.empty()) cfg = sec.get<ScenarioConfig>();
    if (g.seed_given || !sec.contains("seed")) cfg.seed = g.seed;
    return cfg;
}

void print_report(const GlobalOpts& g, const EvalReport& rep) {
    if (g.quiet) return;
    std::fprintf(stderr, "model %s on %s split (%zu samples):\n", rep.model_id.c_str(),
                 rep.split.c_str(), rep.sample_count);
    for (const auto& [k, acc] : rep.accuracy) {
        std::string line = "  top-" + std::to_string(k) + ":";
        for (size_t v = 0; v < acc.size(); ++v) {
            char buf[48];
            std::snprintf(buf, sizeof buf, "  v=%zu %.4f", v, acc[v]);
            line += buf;
        }
        std::fprintf(stderr, "%s\n", line.c_str());
    }
}

int run(int argc, char** argv) {
    CLI::App app{"data-free knowledge distillation for LiDAR-aided mmWave beam tracking"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    auto* seed_opt = app.add_option("--seed", g.seed, "global RNG seed");
    app.add_option("--out,-o", g.out, "output path");
    app.add_option("--config", g.config_path, "JSON config file");
    app.add_flag("--quiet,-q", g.quiet, "suppress progress output");

    // ---- gen-data ----
    auto* gen_data = app.add_subcommand("gen-data", "generate a synthetic dataset file");
    size_t gd_traj = 0, gd_slots = 0, gd_feat = 0, gd_clutter = 0;
    double gd_noise = -1.0;
    auto* gd_traj_o = gen_data->add_option("--trajectories", gd_traj, "number of vehicle trajectories");
    auto* gd_slots_o = gen_data->add_option("--slots", gd_slots, "slots per trajectory");
    auto* gd_feat_o = gen_data->add_option("--feature-dim", gd_feat, "LiDAR feature dimension D");
    auto* gd_clutter_o = gen_data->add_option("--clutter", gd_clutter, "clutter paths per slot");
    auto* gd_noise_o = gen_data->add_option("--feature-noise", gd_noise, "feature noise stddev");

    // ---- train-teacher ----
    auto* tt = app.add_subcommand("train-teacher", "pretrain the teacher and capture feature statistics");
    std::string tt_data;
    size_t tt_hidden = 128, tt_epochs = 0, tt_batch = 0;
    double tt_lr = 0.0;
    tt->add_option("--data", tt_data, "dataset file")->required();
    auto* tt_hidden_o = tt->add_option("--hidden", tt_hidden, "teacher hidden size");
    auto* tt_epochs_o = tt->add_option("--epochs", tt_epochs, "training epochs");
    auto* tt_batch_o = tt->add_option("--batch-size", tt_batch, "batch size");
    auto* tt_lr_o = tt->add_option("--lr", tt_lr, "Adam learning rate");

    // ---- train-generator ----
    auto* tg = app.add_subcommand("train-generator", "invert a teacher into a synthetic-data generator");
    std::string tg_teacher, tg_loss = "weighted";
    size_t tg_epochs = 0, tg_batch = 0, tg_noise_dim = 500, tg_hidden = 64;
    double tg_alpha = -1.0, tg_beta = -1.0, tg_lr = 0.0;
    tg->add_option("--teacher", tg_teacher, "teacher checkpoint")->required();
    auto* tg_loss_o = tg->add_option("--gen-loss", tg_loss,
                                     "weighted | metadata_only | activation_only | entropy_only");
    auto* tg_alpha_o = tg->add_option("--alpha", tg_alpha, "activation loss weight");
    auto* tg_beta_o = tg->add_option("--beta", tg_beta, "entropy loss weight");
    auto* tg_noise_o = tg->add_option("--noise-dim", tg_noise_dim, "generator noise input size");
    auto* tg_hidden_o = tg->add_option("--gen-hidden", tg_hidden, "generator hidden size");
    auto* tg_epochs_o = tg->add_option("--epochs", tg_epochs, "training epochs (32 steps each)");
    auto* tg_batch_o = tg->add_option("--batch-size", tg_batch, "batch size");
    auto* tg_lr_o = tg->add_option("--lr", tg_lr, "Adam learning rate");

    // ---- distill-df ----
    auto* ddf = app.add_subcommand("distill-df", "train a student from teacher + generator, no dataset");
    std::string ddf_teacher, ddf_generator, ddf_loss = "mse";
    size_t ddf_hidden = 32, ddf_epochs = 0, ddf_batch = 0;
    double ddf_temp = 0.0, ddf_lr = 0.0;
    ddf->add_option("--teacher", ddf_teacher, "teacher checkpoint")->required();
    ddf->add_option("--generator", ddf_generator, "generator checkpoint")->required();
    auto* ddf_loss_o = ddf->add_option("--student-loss", ddf_loss, "kl | mse");
    auto* ddf_temp_o = ddf->add_option("--temperature", ddf_temp, "softening temperature (KL loss)");
    auto* ddf_hidden_o = ddf->add_option("--hidden", ddf_hidden, "student hidden size");
    auto* ddf_epochs_o = ddf->add_option("--epochs", ddf_epochs, "training epochs (32 steps each)");
    auto* ddf_batch_o = ddf->add_option("--batch-size", ddf_batch, "batch size");
    auto* ddf_lr_o = ddf->add_option("--lr", ddf_lr, "Adam learning rate");

    // ---- distill-kd ----
    auto* dkd = app.add_subcommand("distill-kd", "standard KD on real data (KL or MSE variant)");
    std::string dkd_teacher, dkd_data, dkd_loss = "kl";
    size_t dkd_hidden = 32, dkd_epochs = 0, dkd_batch = 0;
    double dkd_gamma = -1.0, dkd_temp = 0.0, dkd_lr = 0.0;
    dkd->add_option("--teacher", dkd_teacher, "teacher checkpoint")->required();
    dkd->add_option("--data", dkd_data, "dataset file")->required();
    auto* dkd_loss_o = dkd->add_option("--student-loss", dkd_loss, "kl | mse");
    auto* dkd_gamma_o = dkd->add_option("--gamma", dkd_gamma, "distillation mixing weight");
    auto* dkd_temp_o = dkd->add_option("--temperature", dkd_temp, "softening temperature (KL loss)");
    auto* dkd_hidden_o = dkd->add_option("--hidden", dkd_hidden, "student hidden size");
    auto* dkd_epochs_o = dkd->add_option("--epochs", dkd_epochs, "training epochs");
    auto* dkd_batch_o = dkd->add_option("--batch-size", dkd_batch, "batch size");
    auto* dkd_lr_o = dkd->add_option("--lr", dkd_lr, "Adam learning rate");

    // ---- train-scratch ----
    auto* ts = app.add_subcommand("train-scratch", "train the student architecture without KD");
    std::string ts_data;
    size_t ts_hidden = 32, ts_epochs = 0, ts_batch = 0;
    double ts_lr = 0.0;
    ts->add_option("--data", ts_data, "dataset file")->required();
    auto* ts_hidden_o = ts->add_option("--hidden", ts_hidden, "student hidden size");
    auto* ts_epochs_o = ts->add_option("--epochs", ts_epochs, "training epochs");
    auto* ts_batch_o = ts->add_option("--batch-size", ts_batch, "batch size");
    auto* ts_lr_o = ts->add_option("--lr", ts_lr, "Adam learning rate");

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint against a dataset split");
    std::string ev_ckpt, ev_data, ev_split = "test", ev_csv;
    std::vector<size_t> ev_ks;
    ev->add_option("--ckpt", ev_ckpt, "teacher or student checkpoint")->required();
    ev->add_option("--data", ev_data, "dataset file")->required();
    ev->add_option("--split", ev_split, "train | val | test");
    ev->add_option("--k", ev_ks, "top-K values to report (default 1 5)");
    ev->add_option("--csv", ev_csv, "also write CSV rows to this path");

    // ---- experiment ----
    auto* ex = app.add_subcommand("experiment", "run a manifest of arms against one dataset");
    std::string ex_manifest, ex_out_dir = "experiment-out";
    ex->add_option("manifest", ex_manifest, "manifest JSON path")->required();
    ex->add_option("--out-dir", ex_out_dir, "output directory");

    // ---- inspect ----
    auto* ins = app.add_subcommand("inspect", "print the header of a checkpoint or dataset file");
    std::string ins_path;
    ins->add_option("path", ins_path, "file to inspect")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        std::cerr << "run '" << (argc > 0 ? argv[0] : "dfkd") << " --help' for usage\n";
        return 2;
    }

    if (!g.config_path.empty()) g.config = load_config_file(g.config_path);
    else g.config = nlohmann::json::object();
    g.seed_given = seed_opt->count() > 0;

    if (*gen_data) {
        ScenarioConfig cfg = scenario_from(g);
        apply_config(cfg.num_trajectories, gd_traj_o, section(g.config, "scenario"), "num_trajectories");
        if (gd_traj_o->count()) cfg.num_trajectories = gd_traj;
        if (gd_slots_o->count()) cfg.slots_per_trajectory = gd_slots;
        if (gd_feat_o->count()) cfg.feature_dim = gd_feat;
        if (gd_clutter_o->count()) cfg.clutter_paths = gd_clutter;
        if (gd_noise_o->count()) cfg.feature_noise_std = gd_noise;
        cfg.validate();
        const std::string out = default_out(g, "dataset.dfkd");
        say(g, "generating " + std::to_string(cfg.num_trajectories) + " trajectories ...");
        Dataset ds = make_dataset(cfg);
        save_dataset(ds, out);
        say(g, "wrote " + out + " (" + std::to_string(ds.samples.size()) + " samples, " +
                   std::to_string(ds.skipped_short) + " trajectories skipped short)");
        return 0;
    }

    if (*tt) {
        Dataset ds = load_dataset(tt_data);
        TrainConfig tcfg = TrainConfig::teacher_defaults();
        const nlohmann::json sec = section(g.config, "train");
        if (!sec.empty()) tcfg = sec.get<TrainConfig>();
        if (tt_epochs_o->count()) tcfg.epochs = tt_epochs;
        if (tt_batch_o->count()) tcfg.batch_size = tt_batch;
        if (tt_lr_o->count()) tcfg.lr = tt_lr;
        if (g.seed_given || !sec.contains("seed")) tcfg.seed = g.seed;
        tcfg.verbose = !g.quiet;
        apply_config(tt_hidden, tt_hidden_o, section(g.config, "model"), "hidden_dim");
        SeqModelConfig mcfg = model_config_for(ds.config, tt_hidden);
        const std::string out = default_out(g, "teacher.ckpt");
        say(g, "training teacher (H=" + std::to_string(tt_hidden) + ", " + std::to_string(tcfg.epochs) +
                   " epochs, " + std::to_string(ds.split_indices(Split::train).size()) + " windows)");
        RunLog log;
        TeacherCheckpoint ckpt = train_teacher(ds, mcfg, tcfg, &log);
        save_checkpoint(out, ckpt);
        log.save_jsonl(runlog_path(out));
        say(g, "wrote " + out + " (" + std::to_string(ckpt.params.param_count()) + " parameters)");
        return 0;
    }

    if (*tg) {
        TeacherCheckpoint teacher = load_teacher(tg_teacher);
        TrainConfig tcfg = TrainConfig::generator_defaults();
        const nlohmann::json sec = section(g.config, "train");
        if (!sec.empty()) tcfg = sec.get<TrainConfig>();
        if (tg_epochs_o->count()) tcfg.epochs = tg_epochs;
        if (tg_batch_o->count()) tcfg.batch_size = tg_batch;
        if (tg_lr_o->count()) tcfg.lr = tg_lr;
        if (g.seed_given || !sec.contains("seed")) tcfg.seed = g.seed;
        tcfg.verbose = !g.quiet;

        KDConfig kdcfg;
        const nlohmann::json kd_sec = section(g.config, "kd");
        if (!kd_sec.empty()) kdcfg = kd_sec.get<KDConfig>();
        if (tg_loss_o->count()) kdcfg.generator_loss = generator_loss_kind_from(tg_loss);
        if (tg_alpha_o->count()) kdcfg.weights.alpha = tg_alpha;
        if (tg_beta_o->count()) kdcfg.weights.beta = tg_beta;

        apply_config(tg_noise_dim, tg_noise_o, section(g.config, "generator"), "noise_dim");
        apply_config(tg_hidden, tg_hidden_o, section(g.config, "generator"), "hidden_dim");
        GeneratorConfig gcfg = generator_config_for(teacher.config, tg_noise_dim, tg_hidden);
        const std::string out = default_out(g, "generator.ckpt");
        say(g, std::string("training generator (") + to_string(kdcfg.generator_loss) + ", " +
                   std::to_string(tcfg.epochs) + " epochs)");
        RunLog log;
        GeneratorCheckpoint ckpt = train_generator(teacher, gcfg, kdcfg, tcfg, &log);
        save_checkpoint(out, ckpt);
        log.save_jsonl(runlog_path(out));
        say(g, "wrote " + out);
        return 0;
    }

    if (*ddf) {
        TeacherCheckpoint teacher = load_teacher(ddf_teacher);
        GeneratorCheckpoint generator = load_generator(ddf_generator);
        TrainConfig tcfg = TrainConfig::df_student_defaults();
        const nlohmann::json sec = section(g.config, "train");
        if (!sec.empty()) tcfg = sec.get<TrainConfig>();
        if (ddf_epochs_o->count()) tcfg.epochs = ddf_epochs;
        if (ddf_batch_o->count()) tcfg.batch_size = ddf_batch;
        if (ddf_lr_o->count()) tcfg.lr = ddf_lr;
        if (g.seed_given || !sec.contains("seed")) tcfg.seed = g.seed;
        tcfg.verbose = !g.quiet;

        KDConfig kdcfg;
        kdcfg.student_loss = StudentLossKind::mse;
        const nlohmann::json kd_sec = section(g.config, "kd");
        if (!kd_sec.empty()) kdcfg = kd_sec.get<KDConfig>();
        if (ddf_loss_o->count()) kdcfg.student_loss = student_loss_kind_from(ddf_loss);
        if (ddf_temp_o->count()) kdcfg.temperature = ddf_temp;
        if (kdcfg.student_loss == StudentLossKind::kl && !kdcfg.temperature) kdcfg.temperature = 5.0;

        apply_config(ddf_hidden, ddf_hidden_o, section(g.config, "model"), "hidden_dim");
        SeqModelConfig scfg = teacher.config;
        scfg.hidden_dim = ddf_hidden;
        const std::string out = default_out(g, "student-df.ckpt");
        say(g, std::string("data-free distillation (") + to_string(kdcfg.student_loss) + " loss, " +
                   std::to_string(tcfg.epochs) + " epochs)");
        RunLog log;
        StudentCheckpoint ckpt = train_student_df(teacher, generator, scfg, kdcfg, tcfg, &log);
        save_checkpoint(out, ckpt);
        log.save_jsonl(runlog_path(out));
        say(g, "wrote " + out);
        return 0;
    }

    if (*dkd) {
        TeacherCheckpoint teacher = load_teacher(dkd_teacher);
        Dataset ds = load_dataset(dkd_data);
        KDConfig kdcfg;
        const nlohmann::json kd_sec = section(g.config, "kd");
        if (!kd_sec.empty()) kdcfg = kd_sec.get<KDConfig>();
        if (dkd_loss_o->count()) kdcfg.student_loss = student_loss_kind_from(dkd_loss);
        if (dkd_gamma_o->count()) kdcfg.gamma = dkd_gamma;
        if (dkd_temp_o->count()) kdcfg.temperature = dkd_temp;
        if (kdcfg.student_loss == StudentLossKind::kl && !kdcfg.temperature) kdcfg.temperature = 5.0;

        TrainConfig tcfg = kdcfg.student_loss == StudentLossKind::kl ? TrainConfig::kd_defaults()
                                                                     : TrainConfig::kd_mse_defaults();
        const nlohmann::json sec = section(g.config, "train");
        if (!sec.empty()) tcfg = sec.get<TrainConfig>();
        if (dkd_epochs_o->count()) tcfg.epochs = dkd_epochs;
        if (dkd_batch_o->count()) tcfg.batch_size = dkd_batch;
        if (dkd_lr_o->count()) tcfg.lr = dkd_lr;
        if (g.seed_given || !sec.contains("seed")) tcfg.seed = g.seed;
        tcfg.verbose = !g.quiet;

        apply_config(dkd_hidden, dkd_hidden_o, section(g.config, "model"), "hidden_dim");
        SeqModelConfig scfg = teacher.config;
        scfg.hidden_dim = dkd_hidden;
        const std::string out = default_out(g, "student-kd.ckpt");
        say(g, std::string("standard KD (") + to_string(kdcfg.student_loss) + " variant, " +
                   std::to_string(tcfg.epochs) + " epochs)");
        RunLog log;
        StudentCheckpoint ckpt = train_student_kd(teacher, ds, scfg, kdcfg, tcfg, &log);
        save_checkpoint(out, ckpt);
        log.save_jsonl(runlog_path(out));
        say(g, "wrote " + out);
        return 0;
    }

    if (*ts) {
        Dataset ds = load_dataset(ts_data);
        TrainConfig tcfg = TrainConfig::scratch_defaults();
        const nlohmann::json sec = section(g.config, "train");
        if (!sec.empty()) tcfg = sec.get<TrainConfig>();
        if (ts_epochs_o->count()) tcfg.epochs = ts_epochs;
        if (ts_batch_o->count()) tcfg.batch_size = ts_batch;
        if (ts_lr_o->count()) tcfg.lr = ts_lr;
        if (g.seed_given || !sec.contains("seed")) tcfg.seed = g.seed;
        tcfg.verbose = !g.quiet;
        apply_config(ts_hidden, ts_hidden_o, section(g.config, "model"), "hidden_dim");
        SeqModelConfig scfg = model_config_for(ds.config, ts_hidden);
        const std::string out = default_out(g, "student-scratch.ckpt");
        say(g, "training student from scratch (H=" + std::to_string(ts_hidden) + ", " +
                   std::to_string(tcfg.epochs) + " epochs)");
        RunLog log;
        StudentCheckpoint ckpt = train_student_scratch(ds, scfg, tcfg, &log);
        save_checkpoint(out, ckpt);
        log.save_jsonl(runlog_path(out));
        say(g, "wrote " + out);
        return 0;
    }

    if (*ev) {
        StudentCheckpoint ckpt = load_seq_model(ev_ckpt);
        Dataset ds = load_dataset(ev_data);
        if (ckpt.config.num_beams != ds.config.array.num_beams ||
            ckpt.config.input_dim != ds.config.feature_dim ||
            ckpt.config.obs_len != ds.config.obs_len || ckpt.config.horizon != ds.config.horizon)
            throw config_mismatch_error("checkpoint config (D/M/L/V) does not match the dataset");
        if (ev_ks.empty()) ev_ks = {1, 5};
        const std::string kind = checkpoint_header(ev_ckpt).value("kind", "model");
        SeqModel model = eval_model(ckpt);
        EvalReport rep = make_eval_report(model, model_identity(model, kind), ds,
                                          split_from_name(ev_split), ev_ks);
        print_report(g, rep);
        const std::string out = default_out(g, "report.json");
        std::ofstream f(out);
        if (!f) throw io_error("cannot open '" + out + "' for writing");
        f << nlohmann::json(rep).dump(2) << '\n';
        say(g, "wrote " + out);
        if (!ev_csv.empty()) {
            std::ostringstream csv;
            csv << csv_header();
            append_csv_rows(csv, fs::path(ev_ckpt).stem().string(), rep);
            std::ofstream cf(ev_csv);
            if (!cf) throw io_error("cannot open '" + ev_csv + "' for writing");
            cf << csv.str();
            say(g, "wrote " + ev_csv);
        }
        return 0;
    }

    if (*ex) {
        ExperimentResult res = run_experiment(ex_manifest, ex_out_dir, g.quiet);
        for (const ArmResult& ar : res.arms) {
            if (ar.ok) {
                std::string line = "arm " + ar.name + ":";
                for (const auto& [k, acc] : ar.report.accuracy) {
                    char buf[48];
                    std::snprintf(buf, sizeof buf, "  top-%zu %.4f", k, mean_of(acc));
                    line += buf;
                }
                say(g, line);
            } else {
                say(g, "arm " + ar.name + " FAILED: " + ar.error);
            }
        }
        say(g, "wrote " + res.combined_json_path + " and " + res.combined_csv_path);
        return res.all_ok ? 0 : 1;
    }

    if (*ins) {
        std::ifstream probe(ins_path, std::ios::binary);
        if (!probe) throw io_error("cannot open '" + ins_path + "'");
        char magic[9] = {0};
        probe.read(magic, 8);
        nlohmann::json header;
        if (std::string(magic) == kCheckpointMagic) header = checkpoint_header(ins_path);
        else if (std::string(magic) == kDatasetMagic) header = dataset_header(ins_path);
        else throw format_error("'" + ins_path + "' is neither a checkpoint nor a dataset file");
        std::cout << header.dump(2) << '\n';
        return 0;
    }

    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.kind_name() << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 1;
    }
}
