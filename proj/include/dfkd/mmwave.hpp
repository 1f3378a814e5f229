#pragma once

// Ground-truth physical layer: multipath channels over a half-wavelength
// ULA, an oversampled DFT beam codebook, per-beam gains |h^H w|^2, and the
// exhaustive-search optimal beam. Everything here is a pure function.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "dfkd/errors.hpp"

namespace dfkd {

inline constexpr double kPi = std::numbers::pi;

using cdouble = std::complex<double>;

struct ArrayConfig {
    size_t num_antennas = 16; // N, half-wavelength spacing
    size_t num_beams = 64;    // M >= N

    void validate() const {
        if (num_antennas < 1) throw parameter_error("ArrayConfig: need at least one antenna");
        if (num_beams < num_antennas)
            throw parameter_error("ArrayConfig: codebook size must be >= antenna count");
    }

    bool operator==(const ArrayConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ArrayConfig& c) {
    j = {{"num_antennas", c.num_antennas}, {"num_beams", c.num_beams}};
}

inline void from_json(const nlohmann::json& j, ArrayConfig& c) {
    j.at("num_antennas").get_to(c.num_antennas);
    j.at("num_beams").get_to(c.num_beams);
}

struct Path {
    cdouble gain;
    double azimuth = 0.0;   // radians, in [-pi/2, pi/2]
    double elevation = 0.0; // carried for completeness; a ULA response ignores it
};

struct PathSet {
    std::vector<Path> paths; // paths[0] is the dominant one by construction
};

struct ChannelRealization {
    std::vector<cdouble> h;
    PathSet source;
    double tx_power = 1.0;
    double noise_var = 1e-2;
};

// Columns are constant-modulus beams, |W[n,m]| = 1/sqrt(N); beam m is stored
// contiguously at column(m).
struct Codebook {
    size_t num_antennas = 0;
    size_t num_beams = 0;
    std::vector<cdouble> w; // num_beams blocks of num_antennas entries

    const cdouble* column(size_t m) const { return w.data() + m * num_antennas; }
};

// a_n = exp(j * pi * n * sin(theta)), n = 0..N-1
inline std::vector<cdouble> steering_vector(size_t num_antennas, double azimuth) {
    std::vector<cdouble> a(num_antennas);
    const double s = std::sin(azimuth);
    for (size_t n = 0; n < num_antennas; ++n) {
        const double phase = kPi * static_cast<double>(n) * s;
        a[n] = cdouble(std::cos(phase), std::sin(phase));
    }
    return a;
}

// w_m[n] = exp(j * 2*pi * n * m / M) / sqrt(N). With M == N this is the
// unitary DFT basis; larger M oversamples the beam space.
inline Codebook dft_codebook(size_t num_antennas, size_t num_beams) {
    if (num_beams < num_antennas)
        throw parameter_error("dft_codebook: M=" + std::to_string(num_beams) + " < N=" +
                              std::to_string(num_antennas));
    Codebook cb;
    cb.num_antennas = num_antennas;
    cb.num_beams = num_beams;
    cb.w.resize(num_antennas * num_beams);
    const double scale = 1.0 / std::sqrt(static_cast<double>(num_antennas));
    for (size_t m = 0; m < num_beams; ++m)
        for (size_t n = 0; n < num_antennas; ++n) {
            const double phase = 2.0 * kPi * static_cast<double>(n) * static_cast<double>(m) /
                                 static_cast<double>(num_beams);
            cb.w[m * num_antennas + n] = scale * cdouble(std::cos(phase), std::sin(phase));
        }
    return cb;
}

inline Codebook dft_codebook(const ArrayConfig& cfg) {
    cfg.validate();
    return dft_codebook(cfg.num_antennas, cfg.num_beams);
}

// h = sum_l alpha_l * a(theta_l)
inline ChannelRealization channel_realize(const PathSet& paths, size_t num_antennas,
                                          double tx_power = 1.0, double noise_var = 1e-2) {
    if (paths.paths.empty()) throw parameter_error("channel_realize: empty path set");
    if (noise_var <= 0.0) throw parameter_error("channel_realize: noise variance must be positive");
    ChannelRealization ch;
    ch.h.assign(num_antennas, cdouble(0.0, 0.0));
    for (const Path& p : paths.paths) {
        auto a = steering_vector(num_antennas, p.azimuth);
        for (size_t n = 0; n < num_antennas; ++n) ch.h[n] += p.gain * a[n];
    }
    ch.source = paths;
    ch.tx_power = tx_power;
    ch.noise_var = noise_var;
    return ch;
}

// g_m = |h^H w_m|^2 for every codebook column
inline std::vector<double> beam_gains(const std::vector<cdouble>& h, const Codebook& cb) {
    if (h.size() != cb.num_antennas)
        throw dimension_error("beam_gains: channel has " + std::to_string(h.size()) +
                              " entries, codebook expects " + std::to_string(cb.num_antennas));
    std::vector<double> gains(cb.num_beams);
    for (size_t m = 0; m < cb.num_beams; ++m) {
        const cdouble* wm = cb.column(m);
        cdouble acc(0.0, 0.0);
        for (size_t n = 0; n < h.size(); ++n) acc += std::conj(h[n]) * wm[n];
        gains[m] = std::norm(acc);
    }
    return gains;
}

// argmax of the gain spectrum; ties break toward the smallest index
inline size_t optimal_beam(const std::vector<cdouble>& h, const Codebook& cb) {
    if (cb.num_beams == 0) throw parameter_error("optimal_beam: empty codebook");
    const std::vector<double> gains = beam_gains(h, cb);
    size_t best = 0;
    for (size_t m = 1; m < gains.size(); ++m)
        if (gains[m] > gains[best]) best = m;
    return best;
}

// P * |h^H w|^2 / sigma^2
inline double received_snr(const std::vector<cdouble>& h, const std::vector<cdouble>& w,
                           double tx_power, double noise_var) {
    if (noise_var <= 0.0) throw parameter_error("received_snr: noise variance must be positive");
    if (tx_power <= 0.0) throw parameter_error("received_snr: transmit power must be positive");
    if (h.size() != w.size())
        throw dimension_error("received_snr: vector lengths differ (" + std::to_string(h.size()) +
                              " vs " + std::to_string(w.size()) + ")");
    cdouble acc(0.0, 0.0);
    for (size_t n = 0; n < h.size(); ++n) acc += std::conj(h[n]) * w[n];
    return tx_power * std::norm(acc) / noise_var;
}

inline double channel_energy(const std::vector<cdouble>& h) {
    double e = 0.0;
    for (const cdouble& v : h) e += std::norm(v);
    return e;
}

} // namespace dfkd
