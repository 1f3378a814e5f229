#pragma once

// Synthetic vehicular scene: a base station at the origin with its ULA
// along the x-axis watches a straight road at lateral offset road_offset.
// Vehicles drive the road at constant speed; each slot yields a multipath
// channel (dominant LOS + weak clutter), the brute-force optimal beam per
// Eq.-(3)-style exhaustive search, and a LiDAR-like feature frame.
//
// Per-trajectory RNG streams are derived from (seed, trajectory id), so
// generation order never depends on scheduling and any trajectory can be
// regenerated in isolation. Draw order within a trajectory is fixed:
// trajectory kinematics first, then per slot clutter paths, then feature
// noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfkd/binfile.hpp"
#include "dfkd/errors.hpp"
#include "dfkd/mmwave.hpp"
#include "dfkd/rng.hpp"

namespace dfkd {

constexpr const char* kDatasetMagic = "DFKDDSET";

struct ScenarioConfig {
    ArrayConfig array;
    size_t feature_dim = 32; // D
    size_t obs_len = 8;      // L
    size_t horizon = 3;      // V
    double speed_min_kmh = 3.0;
    double speed_max_kmh = 18.0;
    double slot_duration_s = 0.1;
    double road_half_length_m = 60.0; // road spans x in [-h, +h]
    double road_offset_m = 12.0;      // lateral distance BS -> road
    size_t clutter_paths = 2;
    double clutter_rel_gain = 0.3;    // max |alpha_clutter| / |alpha_los|
    double feature_noise_std = 0.02;
    size_t num_trajectories = 200;
    size_t slots_per_trajectory = 50;
    uint64_t seed = 1;

    size_t seq_len() const { return obs_len + horizon; }

    void validate() const {
        array.validate();
        if (feature_dim < 4) throw parameter_error("ScenarioConfig: feature_dim must be >= 4");
        if (speed_min_kmh <= 0.0 || speed_max_kmh < speed_min_kmh)
            throw parameter_error("ScenarioConfig: invalid speed range");
        if (slot_duration_s <= 0.0) throw parameter_error("ScenarioConfig: slot duration must be positive");
        if (road_offset_m <= 0.0 || road_half_length_m <= 0.0)
            throw parameter_error("ScenarioConfig: road geometry must be positive");
        if (clutter_rel_gain < 0.0 || clutter_rel_gain > 1.0)
            throw parameter_error("ScenarioConfig: clutter_rel_gain must lie in [0, 1]");
        if (feature_noise_std < 0.0) throw parameter_error("ScenarioConfig: negative feature noise");
        if (!obs_len) throw parameter_error("ScenarioConfig: obs_len must be positive");
    }

    bool operator==(const ScenarioConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ScenarioConfig& c) {
    j = {{"array", c.array},
         {"feature_dim", c.feature_dim},
         {"obs_len", c.obs_len},
         {"horizon", c.horizon},
         {"speed_min_kmh", c.speed_min_kmh},
         {"speed_max_kmh", c.speed_max_kmh},
         {"slot_duration_s", c.slot_duration_s},
         {"road_half_length_m", c.road_half_length_m},
         {"road_offset_m", c.road_offset_m},
         {"clutter_paths", c.clutter_paths},
         {"clutter_rel_gain", c.clutter_rel_gain},
         {"feature_noise_std", c.feature_noise_std},
         {"num_trajectories", c.num_trajectories},
         {"slots_per_trajectory", c.slots_per_trajectory},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ScenarioConfig& c) {
    ScenarioConfig defaults;
    c.array = j.value("array", defaults.array);
    c.feature_dim = j.value("feature_dim", defaults.feature_dim);
    c.obs_len = j.value("obs_len", defaults.obs_len);
    c.horizon = j.value("horizon", defaults.horizon);
    c.speed_min_kmh = j.value("speed_min_kmh", defaults.speed_min_kmh);
    c.speed_max_kmh = j.value("speed_max_kmh", defaults.speed_max_kmh);
    c.slot_duration_s = j.value("slot_duration_s", defaults.slot_duration_s);
    c.road_half_length_m = j.value("road_half_length_m", defaults.road_half_length_m);
    c.road_offset_m = j.value("road_offset_m", defaults.road_offset_m);
    c.clutter_paths = j.value("clutter_paths", defaults.clutter_paths);
    c.clutter_rel_gain = j.value("clutter_rel_gain", defaults.clutter_rel_gain);
    c.feature_noise_std = j.value("feature_noise_std", defaults.feature_noise_std);
    c.num_trajectories = j.value("num_trajectories", defaults.num_trajectories);
    c.slots_per_trajectory = j.value("slots_per_trajectory", defaults.slots_per_trajectory);
    c.seed = j.value("seed", defaults.seed);
}

// Stable identity of the generating configuration; datasets embed it and
// merges require it to match.
inline std::string scenario_config_hash(const ScenarioConfig& cfg) {
    const std::string dump = nlohmann::json(cfg).dump();
    return hex64(fnv1a_bytes(dump.data(), dump.size()));
}

struct VehicleState {
    double x = 0.0;         // position along the road, meters
    double y = 0.0;         // lateral offset, meters (constant per scenario)
    double speed_mps = 0.0;
    double direction = 1.0; // +1 or -1 along x
};

inline Rng trajectory_rng(const ScenarioConfig& cfg, size_t traj_id) {
    return Rng(derive_seed(derive_seed(cfg.seed, "trajectory"), traj_id));
}

// Constant-speed straight-line motion; speed uniform in the configured
// km/h range, start position uniform over the stretch that keeps the whole
// trace on the road.
inline std::vector<VehicleState> simulate_trajectory(const ScenarioConfig& cfg, Rng& rng) {
    const double speed_kmh = rng.uniform(cfg.speed_min_kmh, cfg.speed_max_kmh);
    const double speed = speed_kmh / 3.6;
    const double direction = rng.next_double() < 0.5 ? 1.0 : -1.0;
    const size_t slots = cfg.slots_per_trajectory;
    const double travel = speed * cfg.slot_duration_s * static_cast<double>(slots > 0 ? slots - 1 : 0);
    const double h = cfg.road_half_length_m;
    double lo = -h, hi = h - travel;
    if (direction < 0.0) { lo = -h + travel; hi = h; }
    if (hi < lo) hi = lo; // trace longer than the road: start at the edge
    const double start = rng.uniform(lo, hi);
    std::vector<VehicleState> states(slots);
    for (size_t t = 0; t < slots; ++t) {
        states[t].x = start + direction * speed * cfg.slot_duration_s * static_cast<double>(t);
        states[t].y = cfg.road_offset_m;
        states[t].speed_mps = speed;
        states[t].direction = direction;
    }
    return states;
}

inline double bearing_of(const VehicleState& s) { return std::atan2(s.x, s.y); }

inline double distance_of(const VehicleState& s) { return std::hypot(s.x, s.y); }

// Dominant LOS path (inverse-distance amplitude, carrier-phase argument)
// plus weak clutter at random angles. Clutter gains stay below
// clutter_rel_gain * |alpha_los|.
inline PathSet paths_from_state(const VehicleState& state, const ScenarioConfig& cfg, Rng& rng) {
    constexpr double ref_distance_m = 10.0;
    constexpr double wavelength_m = 0.005; // 60 GHz
    const double d = distance_of(state);
    const double amp = ref_distance_m / d;
    const double phase = -2.0 * kPi * d / wavelength_m;
    PathSet ps;
    ps.paths.push_back({amp * cdouble(std::cos(phase), std::sin(phase)), bearing_of(state), 0.0});
    for (size_t k = 0; k < cfg.clutter_paths; ++k) {
        const double az = rng.uniform(-kPi / 2.0, kPi / 2.0);
        const double rel = rng.uniform(0.05, cfg.clutter_rel_gain);
        const double ph = rng.uniform(0.0, 2.0 * kPi);
        ps.paths.push_back({amp * rel * cdouble(std::cos(ph), std::sin(ph)), az, 0.0});
    }
    return ps;
}

// LiDAR-like frame: [normalized range, sin/cos bearing, normalized speed,
// ring of D-4 Gaussian bumps over sin(bearing) scaled like a return
// strength], plus feature noise, clamped to [-1, 1]. Injective in bearing
// across the road span.
inline std::vector<double> lidar_features(const VehicleState& state, const ScenarioConfig& cfg, Rng& rng) {
    constexpr double ref_distance_m = 10.0;
    const size_t d = cfg.feature_dim;
    const double dist = distance_of(state);
    const double dist_max = std::hypot(cfg.road_half_length_m, cfg.road_offset_m) * 1.05;
    const double bearing = bearing_of(state);
    const double u = std::sin(bearing);

    std::vector<double> f(d, 0.0);
    f[0] = 2.0 * std::min(dist / dist_max, 1.0) - 1.0;
    f[1] = u;
    f[2] = std::cos(bearing);
    // signed speed: magnitude encodes how fast, sign encodes heading
    f[3] = state.direction * state.speed_mps * 3.6 / cfg.speed_max_kmh;

    const size_t bins = d - 4;
    const double span = 2.1; // covers sin(bearing) in [-1.05, 1.05]
    const double step = span / static_cast<double>(bins);
    const double sigma = 2.0 * step;
    const double strength = std::min(ref_distance_m / dist, 1.0);
    for (size_t k = 0; k < bins; ++k) {
        const double center = -span / 2.0 + step * (static_cast<double>(k) + 0.5);
        const double z = (u - center) / sigma;
        f[4 + k] = strength * std::exp(-0.5 * z * z);
    }
    if (cfg.feature_noise_std > 0.0)
        for (double& v : f) v += rng.normal(0.0, cfg.feature_noise_std);
    for (double& v : f) v = std::clamp(v, -1.0, 1.0);
    return f;
}

struct TrajectoryData {
    std::vector<VehicleState> states;
    std::vector<PathSet> slot_paths;
    std::vector<int32_t> slot_labels;
    std::vector<std::vector<double>> slot_frames;
};

// Canonical generation order for one trajectory; dataset building and the
// label audit both rely on it.
inline TrajectoryData build_trajectory(const ScenarioConfig& cfg, size_t traj_id, const Codebook& cb) {
    Rng rng = trajectory_rng(cfg, traj_id);
    TrajectoryData td;
    td.states = simulate_trajectory(cfg, rng);
    td.slot_paths.reserve(td.states.size());
    td.slot_labels.reserve(td.states.size());
    td.slot_frames.reserve(td.states.size());
    for (const VehicleState& s : td.states) {
        PathSet ps = paths_from_state(s, cfg, rng);
        ChannelRealization ch = channel_realize(ps, cfg.array.num_antennas);
        td.slot_labels.push_back(static_cast<int32_t>(optimal_beam(ch.h, cb)));
        td.slot_frames.push_back(lidar_features(s, cfg, rng));
        td.slot_paths.push_back(std::move(ps));
    }
    return td;
}

enum class Split { train, val, test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw parameter_error("unknown split '" + name + "' (expected train/val/test)");
}

struct Sample {
    std::vector<double> frames; // (L+V) x D row-major, last V frames zero
    std::vector<int32_t> labels; // V+1 beam indices
    int32_t traj_id = 0;
    int32_t t0 = 0; // slot index of the last observed frame
};

struct Dataset {
    ScenarioConfig config;
    std::string config_hash;
    std::vector<Sample> samples;
    std::vector<int32_t> train_traj, val_traj, test_traj;
    size_t skipped_short = 0; // trajectories shorter than L+V

    const std::vector<int32_t>& split_trajectories(Split s) const {
        return s == Split::train ? train_traj : s == Split::val ? val_traj : test_traj;
    }

    std::vector<size_t> split_indices(Split s) const {
        const auto& ids = split_trajectories(s);
        std::vector<size_t> out;
        for (size_t i = 0; i < samples.size(); ++i)
            if (std::find(ids.begin(), ids.end(), samples[i].traj_id) != ids.end()) out.push_back(i);
        return out;
    }
};

// Deterministic 70/15/15 trajectory-level split. Windows within one
// trajectory overlap heavily, so splitting at window level would leak
// test information into training.
inline void assign_splits(Dataset& ds) {
    std::vector<int32_t> ids(ds.config.num_trajectories);
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int32_t>(i);
    Rng rng(derive_seed(ds.config.seed, "split"));
    rng.shuffle(ids);
    const size_t n = ids.size();
    const size_t n_val = static_cast<size_t>(std::llround(0.15 * static_cast<double>(n)));
    const size_t n_test = static_cast<size_t>(std::llround(0.15 * static_cast<double>(n)));
    const size_t n_train = n - n_val - n_test;
    ds.train_traj.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
    ds.val_traj.assign(ids.begin() + static_cast<long>(n_train), ids.begin() + static_cast<long>(n_train + n_val));
    ds.test_traj.assign(ids.begin() + static_cast<long>(n_train + n_val), ids.end());
    std::sort(ds.train_traj.begin(), ds.train_traj.end());
    std::sort(ds.val_traj.begin(), ds.val_traj.end());
    std::sort(ds.test_traj.begin(), ds.test_traj.end());
}

// Sliding windows of L observed frames + V zero frames; labels are the
// oracle beams at offsets 0..V.
inline Dataset make_dataset(const ScenarioConfig& cfg) {
    cfg.validate();
    Dataset ds;
    ds.config = cfg;
    ds.config_hash = scenario_config_hash(cfg);
    const Codebook cb = dft_codebook(cfg.array);
    const size_t L = cfg.obs_len, V = cfg.horizon, D = cfg.feature_dim;
    for (size_t traj = 0; traj < cfg.num_trajectories; ++traj) {
        TrajectoryData td = build_trajectory(cfg, traj, cb);
        const size_t slots = td.states.size();
        if (slots < L + V) {
            ++ds.skipped_short;
            continue;
        }
        for (size_t t0 = L - 1; t0 + V < slots; ++t0) {
            Sample s;
            s.traj_id = static_cast<int32_t>(traj);
            s.t0 = static_cast<int32_t>(t0);
            s.frames.assign((L + V) * D, 0.0);
            for (size_t i = 0; i < L; ++i) {
                const auto& frame = td.slot_frames[t0 + 1 - L + i];
                std::copy(frame.begin(), frame.end(), s.frames.begin() + static_cast<long>(i * D));
            }
            s.labels.assign(V + 1, 0);
            for (size_t v = 0; v <= V; ++v) s.labels[v] = td.slot_labels[t0 + v];
            ds.samples.push_back(std::move(s));
        }
    }
    assign_splits(ds);
    return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    const size_t n = ds.samples.size();
    const size_t frame_len = ds.config.seq_len() * ds.config.feature_dim;
    const size_t label_len = ds.config.horizon + 1;
    std::vector<double> frames;
    frames.reserve(n * frame_len);
    std::vector<int32_t> labels, traj_ids, t0s;
    labels.reserve(n * label_len);
    traj_ids.reserve(n);
    t0s.reserve(n);
    for (const Sample& s : ds.samples) {
        frames.insert(frames.end(), s.frames.begin(), s.frames.end());
        labels.insert(labels.end(), s.labels.begin(), s.labels.end());
        traj_ids.push_back(s.traj_id);
        t0s.push_back(s.t0);
    }
    nlohmann::json header = {{"scenario", ds.config},
                             {"config_hash", ds.config_hash},
                             {"counts",
                              {{"samples", n},
                               {"trajectories", ds.config.num_trajectories},
                               {"skipped_short", ds.skipped_short}}},
                             {"split",
                              {{"train", ds.train_traj}, {"val", ds.val_traj}, {"test", ds.test_traj}}}};
    binfile::write(path, kDatasetMagic, std::move(header),
                   {{"frames", &frames}},
                   {{"labels", &labels}, {"traj_ids", &traj_ids}, {"t0s", &t0s}});
}

inline nlohmann::json dataset_header(const std::string& path) {
    return binfile::read_header(path, kDatasetMagic);
}

inline Dataset load_dataset(const std::string& path) {
    auto c = binfile::read(path, kDatasetMagic);
    Dataset ds;
    try {
        ds.config = c.header.at("scenario").get<ScenarioConfig>();
        ds.config_hash = c.header.at("config_hash").get<std::string>();
        ds.train_traj = c.header.at("split").at("train").get<std::vector<int32_t>>();
        ds.val_traj = c.header.at("split").at("val").get<std::vector<int32_t>>();
        ds.test_traj = c.header.at("split").at("test").get<std::vector<int32_t>>();
        ds.skipped_short = c.header.at("counts").at("skipped_short").get<size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw format_error("'" + path + "': malformed dataset header: " + e.what());
    }
    const size_t frame_len = ds.config.seq_len() * ds.config.feature_dim;
    const size_t label_len = ds.config.horizon + 1;
    const auto& frames = c.f64.at("frames");
    const auto& labels = c.i32.at("labels");
    const auto& traj_ids = c.i32.at("traj_ids");
    const auto& t0s = c.i32.at("t0s");
    const size_t n = traj_ids.size();
    if (frames.size() != n * frame_len || labels.size() != n * label_len || t0s.size() != n)
        throw format_error("'" + path + "': payload sizes disagree with header counts");
    ds.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        Sample& s = ds.samples[i];
        s.frames.assign(frames.begin() + static_cast<long>(i * frame_len),
                        frames.begin() + static_cast<long>((i + 1) * frame_len));
        s.labels.assign(labels.begin() + static_cast<long>(i * label_len),
                        labels.begin() + static_cast<long>((i + 1) * label_len));
        s.traj_id = traj_ids[i];
        s.t0 = t0s[i];
    }
    return ds;
}

inline Dataset merge_datasets(const Dataset& a, const Dataset& b) {
    if (a.config_hash != b.config_hash)
        throw config_mismatch_error("merge_datasets: config hashes differ (" + a.config_hash + " vs " +
                                    b.config_hash + ")");
    Dataset out = a;
    out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
    out.skipped_short += b.skipped_short;
    return out;
}

} // namespace dfkd
