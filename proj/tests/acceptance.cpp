// Acceptance suite. Runs every criterion at its stated tolerance and prints
// one PASS/FAIL line per criterion. Criterion 7 (ablation ordering) is
// soft: a miss prints WARN and does not fail the run. The exit code is the
// number of failed hard criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "dfkd/dfkd.hpp"

#include "grad_suite.hpp"
#include "label_oracle.hpp"

using namespace dfkd;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    int number;
    bool ok = true;
    bool soft = false;
    std::string detail;

    void fail(const std::string& why) {
        ok = false;
        detail = detail.empty() ? why : detail + "; " + why;
    }
    void note(const std::string& what) { detail = detail.empty() ? what : detail + "; " + what; }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// ---------------------------------------------------------------- 1
void gradient_suite(Criterion& c) {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        for (auto* suite : {&grad_suite::all_ops_composite, &grad_suite::seq_model_composite,
                            &grad_suite::generator_composite, &grad_suite::student_composite}) {
            const fd::Result res = (*suite)(seed, 1e-5);
            worst = std::max(worst, res.max_err);
            if (res.max_err >= 1e-4) {
                c.fail("seed " + std::to_string(seed) + ": rel err " + std::to_string(res.max_err) +
                       " at " + res.worst_where);
                return;
            }
        }
    }
    const double secs = seconds_since(t0);
    if (secs >= 30.0) c.fail("runtime " + fmt(secs) + "s exceeds 30s");
    c.note("20 seeds x 4 composites, worst rel err " + std::to_string(worst) + ", " + fmt(secs) + "s");
}

// ---------------------------------------------------------------- 2
void loss_identity_suite(Criterion& c) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(2024);
    auto rand_logits = [&](Shape shape, double spread) {
        std::vector<double> d(shape_numel(shape));
        for (double& v : d) v = rng.uniform(-spread, spread);
        return Tensor::from_data(std::move(shape), std::move(d));
    };

    // kl on identical logits and under constant row shifts
    for (int trial = 0; trial < 20; ++trial) {
        Tensor z = rand_logits({4, 4, 64}, 5.0);
        if (std::fabs(kl_loss(z, z, 5.0).item()) > 1e-10) c.fail("kl(z,z) != 0");
        Tensor shifted = add_const(z, rng.uniform(-3, 3));
        if (std::fabs(kl_loss(z, shifted, 5.0).item()) > 1e-10) c.fail("kl under row shift != 0");
    }
    // kl >= 0 on 10^3 random pairs
    for (int trial = 0; trial < 1000; ++trial) {
        Tensor a = rand_logits({2, 64}, 6.0);
        Tensor b = rand_logits({2, 64}, 6.0);
        if (kl_loss(a, b, rng.uniform(0.5, 8.0)).item() < -1e-10) c.fail("kl < 0");
    }
    // entropy within [0, ln 64]
    for (int trial = 0; trial < 200; ++trial) {
        const double h = entropy_loss(rand_logits({2, 2, 64}, trial % 2 ? 1e4 : 3.0)).item();
        if (h < 0.0 || h > std::log(64.0) + 1e-12) c.fail("entropy outside [0, ln 64]");
    }
    // mse(z, z+c) = c^2
    for (double cc : {0.5, -1.25, 2.0}) {
        Tensor z = rand_logits({4, 4, 64}, 3.0);
        if (std::fabs(mse_logit_loss(z, add_const(z, cc)).item() - cc * cc) > 1e-10)
            c.fail("mse(z, z+c) != c^2");
    }
    // kd reductions at gamma 0/1, weighted reduction at alpha=beta=0
    Tensor zt = rand_logits({8, 4, 64}, 4.0);
    Tensor zs = rand_logits({8, 4, 64}, 4.0);
    std::vector<int> labels(8 * 4);
    for (int& l : labels) l = static_cast<int>(rng.uniform_int(0, 63));
    if (kd_loss(zt, zs, labels, 1.0, 5.0).item() != kl_loss(zt, zs, 5.0).item())
        c.fail("kd(gamma=1) != kl");
    if (kd_loss(zt, zs, labels, 0.0, 5.0).item() != cross_entropy_loss(zs, labels).item())
        c.fail("kd(gamma=0) != ce");
    Tensor feat = rand_logits({8, 16}, 2.0);
    std::vector<double> mu(16, 0.1), var(16, 0.5);
    if (generator_loss(GeneratorLossKind::weighted, {0.0, 0.0}, feat, zt, mu, var).item() !=
        metadata_loss(feat, mu, var).item())
        c.fail("weighted(alpha=beta=0) != metadata");

    const double secs = seconds_since(t0);
    if (secs >= 10.0) c.fail("runtime " + fmt(secs) + "s exceeds 10s");
    c.note(fmt(secs) + "s");
}

// ---------------------------------------------------------------- 3
void oracle_suite(Criterion& c) {
    const auto t0 = std::chrono::steady_clock::now();
    const Codebook cb = dft_codebook(16, 64);
    Rng rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
        const size_t m = static_cast<size_t>(rng.uniform_int(0, 63));
        double s = 2.0 * static_cast<double>(m) / 64.0;
        if (s > 1.0) s -= 2.0;
        PathSet ps{{{std::polar(rng.uniform(0.2, 3.0), rng.uniform(0.0, 2 * kPi)), std::asin(s), 0.0}}};
        ChannelRealization ch = channel_realize(ps, 16);
        if (optimal_beam(ch.h, cb) != m) {
            c.fail("on-grid beam " + std::to_string(m) + " missed");
            break;
        }

        // matched filter dominates every codebook beam
        const double p = 1.7, nv = 0.03;
        std::vector<cdouble> matched(16);
        const double inv_norm = 1.0 / std::sqrt(channel_energy(ch.h));
        for (size_t n = 0; n < 16; ++n) matched[n] = ch.h[n] * inv_norm;
        const double snr_mf = received_snr(ch.h, matched, p, nv);
        double best = 0.0;
        for (size_t beam = 0; beam < 64; ++beam) {
            std::vector<cdouble> w(cb.column(beam), cb.column(beam) + 16);
            best = std::max(best, received_snr(ch.h, w, p, nv));
        }
        if (best > snr_mf * (1.0 + 1e-12)) {
            c.fail("codebook SNR exceeded the matched filter");
            break;
        }

        // argmax invariance under scaling and global phase
        const cdouble factor = std::polar(rng.uniform(0.05, 20.0), rng.uniform(0.0, 2 * kPi));
        std::vector<cdouble> scaled(16);
        for (size_t n = 0; n < 16; ++n) scaled[n] = factor * ch.h[n];
        if (optimal_beam(scaled, cb) != m) {
            c.fail("argmax not invariant under scaling/phase");
            break;
        }
    }
    const double secs = seconds_since(t0);
    if (secs >= 10.0) c.fail("runtime " + fmt(secs) + "s exceeds 10s");
    c.note("1000 channels, " + fmt(secs) + "s");
}

// ---------------------------------------------------------------- 4
void dataset_audit(Criterion& c, const Dataset& ds) {
    const auto t0 = std::chrono::steady_clock::now();
    const ScenarioConfig& cfg = ds.config;
    const Codebook cb = dft_codebook(cfg.array);

    size_t checked = 0, mismatched = 0;
    std::vector<std::vector<int32_t>> oracle_labels(cfg.num_trajectories);
    for (size_t traj = 0; traj < cfg.num_trajectories; ++traj) {
        TrajectoryData td = build_trajectory(cfg, traj, cb);
        oracle_labels[traj].reserve(td.slot_paths.size());
        for (const PathSet& ps : td.slot_paths)
            oracle_labels[traj].push_back(oracle::beam_label(ps, cfg.array));
    }
    for (const Sample& s : ds.samples)
        for (size_t v = 0; v < s.labels.size(); ++v) {
            ++checked;
            if (s.labels[v] !=
                oracle_labels[static_cast<size_t>(s.traj_id)][static_cast<size_t>(s.t0) + v])
                ++mismatched;
        }
    if (mismatched) c.fail(std::to_string(mismatched) + "/" + std::to_string(checked) + " labels differ");

    // trajectory-disjoint splits
    std::set<int32_t> train(ds.train_traj.begin(), ds.train_traj.end());
    for (int32_t id : ds.val_traj)
        if (train.count(id)) c.fail("trajectory " + std::to_string(id) + " in train and val");
    for (int32_t id : ds.test_traj)
        if (train.count(id) || std::count(ds.val_traj.begin(), ds.val_traj.end(), id))
            c.fail("trajectory " + std::to_string(id) + " leaks into test");

    const double secs = seconds_since(t0);
    if (secs >= 60.0) c.fail("runtime " + fmt(secs) + "s exceeds 60s");
    c.note(std::to_string(checked) + " labels audited, " + fmt(secs) + "s");
}

// ---------------------------------------------------------------- helpers for 5-7
struct EndToEnd {
    Dataset dataset;
    TeacherCheckpoint teacher;
    std::vector<double> teacher_top1, teacher_top5;
};

// ---------------------------------------------------------------- 8
void determinism_check(Criterion& c, const std::string& dir) {
    ScenarioConfig scfg;
    scfg.array.num_antennas = 8;
    scfg.array.num_beams = 16;
    scfg.feature_dim = 8;
    scfg.obs_len = 4;
    scfg.horizon = 2;
    scfg.num_trajectories = 10;
    scfg.slots_per_trajectory = 18;
    scfg.seed = 9;

    const std::string d1 = dir + "/det_a.dfkd", d2 = dir + "/det_b.dfkd";
    save_dataset(make_dataset(scfg), d1);
    save_dataset(make_dataset(scfg), d2);
    if (file_bytes(d1) != file_bytes(d2)) c.fail("dataset files differ across reruns");
    Dataset ds = load_dataset(d1);

    TrainConfig tcfg;
    tcfg.epochs = 3;
    tcfg.batch_size = 16;
    tcfg.seed = 4;
    SeqModelConfig teacher_cfg = model_config_for(scfg, 16);
    SeqModelConfig student_cfg = model_config_for(scfg, 8);

    auto compare = [&](const std::string& name, const std::function<void(const std::string&)>& save_to) {
        const std::string p1 = dir + "/" + name + "_a.ckpt", p2 = dir + "/" + name + "_b.ckpt";
        save_to(p1);
        save_to(p2);
        if (file_bytes(p1) != file_bytes(p2)) c.fail(name + " checkpoints differ across reruns");
    };

    compare("teacher", [&](const std::string& p) { save_checkpoint(p, train_teacher(ds, teacher_cfg, tcfg)); });
    TeacherCheckpoint teacher = train_teacher(ds, teacher_cfg, tcfg);

    GeneratorConfig gcfg = generator_config_for(teacher_cfg, 24, 12);
    KDConfig kdcfg;
    kdcfg.generator_loss = GeneratorLossKind::weighted;
    kdcfg.student_loss = StudentLossKind::mse;
    compare("generator",
            [&](const std::string& p) { save_checkpoint(p, train_generator(teacher, gcfg, kdcfg, tcfg)); });
    GeneratorCheckpoint gen = train_generator(teacher, gcfg, kdcfg, tcfg);

    compare("df_student", [&](const std::string& p) {
        save_checkpoint(p, train_student_df(teacher, gen, student_cfg, kdcfg, tcfg));
    });

    KDConfig kd_kl;
    kd_kl.student_loss = StudentLossKind::kl;
    kd_kl.temperature = 5.0;
    compare("kd_student", [&](const std::string& p) {
        save_checkpoint(p, train_student_kd(teacher, ds, student_cfg, kd_kl, tcfg));
    });
    KDConfig kd_mse;
    kd_mse.student_loss = StudentLossKind::mse;
    compare("kd_mse_student", [&](const std::string& p) {
        save_checkpoint(p, train_student_kd(teacher, ds, student_cfg, kd_mse, tcfg));
    });
    compare("scratch", [&](const std::string& p) {
        save_checkpoint(p, train_student_scratch(ds, student_cfg, tcfg));
    });

    // reports reproduce byte for byte
    SeqModel model = eval_model(teacher);
    const std::string r1 = dir + "/det_rep_a.json", r2 = dir + "/det_rep_b.json";
    for (const std::string& p : {r1, r2}) {
        std::ofstream f(p);
        f << nlohmann::json(make_eval_report(model, model_identity(model, "teacher"), ds, Split::test))
                 .dump(2);
    }
    if (file_bytes(r1) != file_bytes(r2)) c.fail("eval reports differ across reruns");
    c.note("6 pipelines + dataset + report, all byte-identical");
}

// ---------------------------------------------------------------- 7
void ablation_ordering(Criterion& c, const std::string& dir) {
    // Reduced-scale replica of the four-arm generator-loss comparison:
    // student loss fixed to KL at T=5, one dataset+teacher per seed.
    size_t wins = 0;
    const std::vector<uint64_t> seeds = {1, 2, 3};
    for (uint64_t seed : seeds) {
        ScenarioConfig scfg;
        scfg.feature_dim = 16;
        scfg.num_trajectories = 60;
        scfg.slots_per_trajectory = 50;
        scfg.seed = seed;
        const std::string data_path = dir + "/ablation_" + std::to_string(seed) + ".dfkd";
        save_dataset(make_dataset(scfg), data_path);

        nlohmann::json manifest = {
            {"dataset", data_path},
            {"seed", seed},
            {"teacher", {{"train", {{"epochs", 30}, {"hidden_dim", 64}, {"batch_size", 32}}}}},
            {"arms", nlohmann::json::array()}};
        for (const char* kind : {"weighted", "metadata_only", "activation_only", "entropy_only"})
            manifest["arms"].push_back({{"name", kind},
                                        {"pipeline", "df"},
                                        {"generator_loss", kind},
                                        {"student_loss", "kl"},
                                        {"temperature", 5},
                                        {"alpha", 1e-4},
                                        {"beta", 1e-2},
                                        {"generator_epochs", 120},
                                        {"student_epochs", 120},
                                        {"student_hidden", 32},
                                        {"noise_dim", 128},
                                        {"generator_hidden", 32}});
        const std::string mpath = dir + "/ablation_" + std::to_string(seed) + ".json";
        std::ofstream(mpath) << manifest.dump(2);

        ExperimentResult res = run_experiment(mpath, dir + "/ablation_out_" + std::to_string(seed));
        double meta_floor = 1.0, other_ceiling = 0.0;
        std::string seed_note = "seed " + std::to_string(seed) + ":";
        for (const ArmResult& arm : res.arms) {
            if (!arm.ok) {
                c.fail("arm " + arm.name + " failed: " + arm.error);
                return;
            }
            const double top1_v0 = arm.report.accuracy.at(1)[0];
            seed_note += " " + arm.name + "=" + fmt(top1_v0);
            if (arm.name == "weighted" || arm.name == "metadata_only")
                meta_floor = std::min(meta_floor, top1_v0);
            else
                other_ceiling = std::max(other_ceiling, top1_v0);
        }
        if (meta_floor > other_ceiling) ++wins;
        c.note(seed_note);
    }
    c.note("metadata-bearing arms led in " + std::to_string(wins) + "/3 seeds");
    if (wins < 2) c.fail("ordering held in fewer than 2 of 3 seeds");
}

} // namespace

int main() {
    const std::string dir =
        (fs::temp_directory_path() / ("dfkd_acceptance_" + hex64(derive_seed(20240808, "acceptance"))))
            .string();
    fs::create_directories(dir);

    std::vector<Criterion> results;
    auto run = [&](int number, bool soft, const char* title, auto&& body) {
        Criterion c{number};
        c.soft = soft;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body(c);
        } catch (const std::exception& e) {
            c.fail(std::string("exception: ") + e.what());
        }
        const char* verdict = c.ok ? "PASS" : (soft ? "WARN" : "FAIL");
        std::printf("%s criterion %d (%s): %s [%.1fs]\n", verdict, number, title, c.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
        results.push_back(std::move(c));
    };

    run(1, false, "gradient suite", [&](Criterion& c) { gradient_suite(c); });
    run(2, false, "loss identities", [&](Criterion& c) { loss_identity_suite(c); });
    run(3, false, "beam oracle", [&](Criterion& c) { oracle_suite(c); });

    // default-config dataset shared by criteria 4-6
    ScenarioConfig default_cfg; // 200 trajectories, D=32, M=64, L=8, V=3
    default_cfg.seed = 1;
    const std::string data_path = dir + "/scene.dfkd";
    {
        Dataset ds = make_dataset(default_cfg);
        std::printf("     dataset: %zu samples (%zu train trajectories)\n", ds.samples.size(),
                    ds.train_traj.size());
        save_dataset(ds, data_path);
        run(4, false, "dataset audit", [&](Criterion& c) { dataset_audit(c, ds); });
    }

    run(8, false, "determinism", [&](Criterion& c) { determinism_check(c, dir); });

    // criterion 5: teacher at default config (H=128, 100 epochs)
    EndToEnd e2e;
    run(5, false, "end-to-end learnability", [&](Criterion& c) {
        e2e.dataset = load_dataset(data_path);
        TrainConfig tcfg = TrainConfig::teacher_defaults();
        tcfg.seed = 1;
        tcfg.verbose = true;
        e2e.teacher = train_teacher(e2e.dataset, model_config_for(default_cfg, 128), tcfg);
        SeqModel model = eval_model(e2e.teacher);
        auto fn = batch_logits_fn(model);
        e2e.teacher_top1 = topk_accuracy(fn, e2e.dataset, Split::test, 1);
        e2e.teacher_top5 = topk_accuracy(fn, e2e.dataset, Split::test, 5);
        const double top1 = mean_of(e2e.teacher_top1), top5 = mean_of(e2e.teacher_top5);
        c.note("teacher top1 " + fmt(top1) + " (>= 0.156), top5 " + fmt(top5) + " (>= 0.40)");
        if (top1 < 0.156) c.fail("top1 below the 10x-random gate");
        if (top5 < 0.40) c.fail("top5 below 0.40");
    });

    // criterion 6: delete the dataset, invert, distill, compare to teacher
    run(6, false, "data-free distillation", [&](Criterion& c) {
        if (e2e.teacher.meta_mean.empty()) {
            c.fail("teacher unavailable (criterion 5 crashed)");
            return;
        }
        e2e.dataset = Dataset{}; // drop the in-memory copy as well
        fs::remove(data_path);
        if (fs::exists(data_path)) {
            c.fail("could not delete the dataset file");
            return;
        }

        KDConfig kdcfg;
        kdcfg.generator_loss = GeneratorLossKind::metadata_only;
        kdcfg.student_loss = StudentLossKind::mse;
        TrainConfig gen_cfg = TrainConfig::generator_defaults();
        gen_cfg.seed = 1;
        gen_cfg.verbose = true;
        GeneratorConfig gcfg = generator_config_for(e2e.teacher.config); // noise 500, hidden 64
        GeneratorCheckpoint gen = train_generator(e2e.teacher, gcfg, kdcfg, gen_cfg);

        TrainConfig stu_cfg = TrainConfig::df_student_defaults();
        stu_cfg.seed = 1;
        stu_cfg.verbose = true;
        SeqModelConfig scfg = e2e.teacher.config;
        scfg.hidden_dim = 32;
        StudentCheckpoint student = train_student_df(e2e.teacher, gen, scfg, kdcfg, stu_cfg);

        // dataset regenerates bit-identically for evaluation only
        Dataset ds = make_dataset(default_cfg);
        SeqModel model = eval_model(student);
        const double student_top1 = mean_of(topk_accuracy(batch_logits_fn(model), ds, Split::test, 1));
        const double teacher_top1 = mean_of(e2e.teacher_top1);
        c.note("student top1 " + fmt(student_top1) + " vs teacher " + fmt(teacher_top1) + " (gate 0.8x)");
        if (student_top1 > teacher_top1) c.note("student outperforms its teacher");
        if (student_top1 < 0.8 * teacher_top1) c.fail("student below 0.8x teacher");
    });

    run(7, true, "ablation ordering (soft)", [&](Criterion& c) { ablation_ordering(c, dir); });

    int hard_failures = 0;
    for (const Criterion& c : results)
        if (!c.ok && !c.soft) ++hard_failures;
    std::printf("%s: %d hard failure(s)\n", hard_failures ? "ACCEPTANCE FAILED" : "ACCEPTANCE PASSED",
                hard_failures);
    fs::remove_all(dir);
    return hard_failures ? 1 : 0;
}
