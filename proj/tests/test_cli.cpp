// End-to-end tests of the command-line tool. The binary path arrives via
// the DFKD_CLI environment variable (set by the ctest fixture).

#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dfkd/rng.hpp"

namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output; // stdout + stderr
};

CmdResult run_cli(const std::string& args) {
    const char* cli = std::getenv("DFKD_CLI");
    REQUIRE_MESSAGE(cli != nullptr, "DFKD_CLI not set; run through ctest");
    const std::string cmd = std::string(cli) + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (size_t n = fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
    const int status = pclose(pipe);
    CmdResult res;
    res.output = out;
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("dfkd_cli_" + dfkd::hex64(dfkd::derive_seed(
                                               static_cast<uint64_t>(::getpid()), "cli-test")));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const char* name) const { return (path / name).string(); }
};

// one shared tiny workspace: dataset + teacher + generator, reused below
const TempDir& workspace() {
    static TempDir dir;
    static bool ready = false;
    if (!ready) {
        auto gen = run_cli("gen-data --trajectories 10 --slots 16 --feature-dim 8 --seed 5 -q -o " +
                           (dir / "scene.dfkd"));
        REQUIRE_MESSAGE(gen.exit_code == 0, gen.output);
        auto tt = run_cli("train-teacher --data " + (dir / "scene.dfkd") +
                          " --hidden 16 --epochs 4 --seed 5 -q -o " + (dir / "teacher.ckpt"));
        REQUIRE_MESSAGE(tt.exit_code == 0, tt.output);
        auto tg = run_cli("train-generator --teacher " + (dir / "teacher.ckpt") +
                          " --gen-loss metadata_only --noise-dim 24 --gen-hidden 12 --epochs 4"
                          " --seed 5 -q -o " + (dir / "gen.ckpt"));
        REQUIRE_MESSAGE(tg.exit_code == 0, tg.output);
        ready = true;
    }
    return dir;
}

} // namespace

TEST_CASE("cli: usage errors exit 2") {
    CHECK(run_cli("no-such-subcommand").exit_code == 2);
    CHECK(run_cli("gen-data --no-such-flag 3").exit_code == 2);
    CHECK(run_cli("").exit_code == 2); // subcommand required
    CHECK(run_cli("--help").exit_code == 0);
}

TEST_CASE("cli: gen-data is deterministic per seed") {
    const TempDir& dir = workspace();
    auto a = run_cli("gen-data --trajectories 6 --slots 14 --seed 9 -q -o " + (dir / "a.dfkd"));
    auto b = run_cli("gen-data --trajectories 6 --slots 14 --seed 9 -q -o " + (dir / "b.dfkd"));
    auto c = run_cli("gen-data --trajectories 6 --slots 14 --seed 10 -q -o " + (dir / "c.dfkd"));
    REQUIRE(a.exit_code == 0);
    REQUIRE(b.exit_code == 0);
    REQUIRE(c.exit_code == 0);
    CHECK(file_bytes(dir / "a.dfkd") == file_bytes(dir / "b.dfkd"));
    CHECK(file_bytes(dir / "a.dfkd") != file_bytes(dir / "c.dfkd"));
}

TEST_CASE("cli: distill-df runs with no dataset file present") {
    const TempDir& dir = workspace();
    // the workspace holds checkpoints; remove every dataset file first
    for (const auto& entry : fs::directory_iterator(dir.path))
        if (entry.path().extension() == ".dfkd") fs::remove(entry.path());

    auto res = run_cli("distill-df --teacher " + (dir / "teacher.ckpt") + " --generator " +
                       (dir / "gen.ckpt") + " --student-loss mse --hidden 8 --epochs 3 --seed 5 -q -o " +
                       (dir / "student.ckpt"));
    CHECK_MESSAGE(res.exit_code == 0, res.output);
    CHECK(fs::exists(dir / "student.ckpt"));

    // regenerate the dataset (same seed, bit-identical) for later tests
    auto gen = run_cli("gen-data --trajectories 10 --slots 16 --feature-dim 8 --seed 5 -q -o " +
                       (dir / "scene.dfkd"));
    REQUIRE(gen.exit_code == 0);
}

TEST_CASE("cli: eval rejects mismatched checkpoint/dataset configs") {
    const TempDir& dir = workspace();
    auto other = run_cli("gen-data --trajectories 6 --slots 16 --feature-dim 12 --seed 5 -q -o " +
                         (dir / "wide.dfkd"));
    REQUIRE(other.exit_code == 0);
    auto res = run_cli("eval --ckpt " + (dir / "teacher.ckpt") + " --data " + (dir / "wide.dfkd") +
                       " -q -o " + (dir / "bad_report.json"));
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("error: config-mismatch:") != std::string::npos);
}

TEST_CASE("cli: eval writes identical reports on reruns") {
    const TempDir& dir = workspace();
    auto a = run_cli("eval --ckpt " + (dir / "teacher.ckpt") + " --data " + (dir / "scene.dfkd") +
                     " --split test -q -o " + (dir / "r1.json") + " --csv " + (dir / "r1.csv"));
    auto b = run_cli("eval --ckpt " + (dir / "teacher.ckpt") + " --data " + (dir / "scene.dfkd") +
                     " --split test -q -o " + (dir / "r2.json"));
    REQUIRE_MESSAGE(a.exit_code == 0, a.output);
    REQUIRE(b.exit_code == 0);
    CHECK(file_bytes(dir / "r1.json") == file_bytes(dir / "r2.json"));

    auto rep = nlohmann::json::parse(file_bytes(dir / "r1.json"));
    CHECK(rep.contains("accuracy"));
    CHECK(rep["accuracy"].contains("top1"));
    CHECK(rep["accuracy"].contains("top5"));

    const std::string csv = file_bytes(dir / "r1.csv");
    CHECK(csv.rfind("arm,offset,k,accuracy\n", 0) == 0);
}

TEST_CASE("cli: precedence is flag > config file > default") {
    const TempDir& dir = workspace();
    nlohmann::json cfg = {{"train", {{"epochs", 2}, {"seed", 42}}}, {"model", {{"hidden_dim", 12}}}};
    const std::string cfg_path = dir / "train_cfg.json";
    std::ofstream(cfg_path) << cfg.dump();

    // config file supplies seed and hidden size
    auto a = run_cli("train-teacher --data " + (dir / "scene.dfkd") + " --config " + cfg_path +
                     " -q -o " + (dir / "cfg_teacher.ckpt"));
    REQUIRE_MESSAGE(a.exit_code == 0, a.output);
    auto ha = run_cli("inspect " + (dir / "cfg_teacher.ckpt"));
    auto ja = nlohmann::json::parse(ha.output);
    CHECK(ja["provenance"]["seed"].get<uint64_t>() == 42);
    CHECK(ja["provenance"]["epochs"].get<uint64_t>() == 2);
    CHECK(ja["config"]["hidden_dim"].get<size_t>() == 12);

    // flags beat the config file
    auto b = run_cli("train-teacher --data " + (dir / "scene.dfkd") + " --config " + cfg_path +
                     " --seed 7 --hidden 10 -q -o " + (dir / "cfg_teacher2.ckpt"));
    REQUIRE_MESSAGE(b.exit_code == 0, b.output);
    auto jb = nlohmann::json::parse(run_cli("inspect " + (dir / "cfg_teacher2.ckpt")).output);
    CHECK(jb["provenance"]["seed"].get<uint64_t>() == 7);
    CHECK(jb["config"]["hidden_dim"].get<size_t>() == 10);
}

TEST_CASE("cli: inspect prints checkpoint and dataset headers") {
    const TempDir& dir = workspace();
    auto ck = run_cli("inspect " + (dir / "teacher.ckpt"));
    REQUIRE(ck.exit_code == 0);
    CHECK(ck.output.find("\"kind\": \"teacher\"") != std::string::npos);

    auto ds = run_cli("inspect " + (dir / "scene.dfkd"));
    REQUIRE(ds.exit_code == 0);
    CHECK(ds.output.find("config_hash") != std::string::npos);

    auto garbage = dir / "junk.bin";
    std::ofstream(garbage) << "not a container";
    CHECK(run_cli("inspect " + garbage).exit_code == 1);
    CHECK(run_cli("inspect " + (dir / "missing.file")).exit_code == 1);
}

TEST_CASE("cli: experiment manifest validation") {
    const TempDir& dir = workspace();

    const std::string bad_json = dir / "bad.json";
    std::ofstream(bad_json) << "{ \"dataset\": ";
    auto res = run_cli("experiment " + bad_json + " -q --out-dir " + (dir / "exp_bad"));
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("error: format:") != std::string::npos);
    CHECK(res.output.find("line") != std::string::npos);

    nlohmann::json dup = {{"dataset", dir / "scene.dfkd"},
                          {"teacher", {{"path", dir / "teacher.ckpt"}}},
                          {"arms", nlohmann::json::array(
                                       {{{"name", "a"}, {"pipeline", "teacher"}},
                                        {{"name", "a"}, {"pipeline", "teacher"}}})}};
    const std::string dup_path = dir / "dup.json";
    std::ofstream(dup_path) << dup.dump();
    res = run_cli("experiment " + dup_path + " -q --out-dir " + (dir / "exp_dup"));
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("duplicate arm name") != std::string::npos);

    nlohmann::json empty = {{"dataset", dir / "scene.dfkd"}, {"arms", nlohmann::json::array()}};
    const std::string empty_path = dir / "empty.json";
    std::ofstream(empty_path) << empty.dump();
    res = run_cli("experiment " + empty_path + " -q --out-dir " + (dir / "exp_empty"));
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("empty") != std::string::npos);
}

TEST_CASE("cli: four-arm ablation experiment produces reports and a merged table") {
    const TempDir& dir = workspace();
    nlohmann::json manifest = {
        {"dataset", dir / "scene.dfkd"},
        {"seed", 5},
        {"teacher", {{"path", dir / "teacher.ckpt"}}},
        {"arms", nlohmann::json::array()}};
    for (const char* kind : {"weighted", "metadata_only", "activation_only", "entropy_only"})
        manifest["arms"].push_back({{"name", kind},
                                    {"pipeline", "df"},
                                    {"generator_loss", kind},
                                    {"student_loss", "kl"},
                                    {"temperature", 5},
                                    {"generator_epochs", 2},
                                    {"student_epochs", 2},
                                    {"student_hidden", 8},
                                    {"noise_dim", 16},
                                    {"generator_hidden", 8}});
    const std::string mpath = dir / "ablation.json";
    std::ofstream(mpath) << manifest.dump(2);

    auto res = run_cli("experiment " + mpath + " -q --out-dir " + (dir / "exp"));
    REQUIRE_MESSAGE(res.exit_code == 0, res.output);

    const std::string out = dir / "exp";
    nlohmann::json combined = nlohmann::json::parse(file_bytes(out + "/combined.json"));
    REQUIRE(combined.size() == 4);

    // combined table equals the concatenation of the individual reports
    for (const auto& entry : combined) {
        REQUIRE(entry["ok"].get<bool>());
        const std::string name = entry["arm"].get<std::string>();
        nlohmann::json individual = nlohmann::json::parse(file_bytes(out + "/" + name + ".report.json"));
        CHECK(entry["report"] == individual);
        CHECK(fs::exists(out + "/" + name + ".student.ckpt"));
        CHECK(fs::exists(out + "/" + name + ".generator.ckpt"));
        CHECK(fs::exists(out + "/" + name + ".runlog.jsonl"));
    }

    const std::string csv = file_bytes(out + "/combined.csv");
    size_t rows = 0;
    for (char c : csv) rows += c == '\n';
    CHECK(rows == 1 + 4 * 2 * 4); // header + arms x ks x offsets
}
