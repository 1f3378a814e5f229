#include <doctest.h>

#include <cmath>

#include "dfkd/adam.hpp"
#include "dfkd/models.hpp"
#include "dfkd/rng.hpp"

#include "grad_suite.hpp"

using namespace dfkd;

namespace {

SeqModelParams zero_params(const SeqModelConfig& cfg) {
    const size_t in = cfg.input_dim + cfg.hidden_dim, h = cfg.hidden_dim, m = cfg.num_beams;
    SeqModelParams p;
    p.w_update = Tensor::zeros({in, h});
    p.b_update = Tensor::zeros({h});
    p.w_reset = Tensor::zeros({in, h});
    p.b_reset = Tensor::zeros({h});
    p.w_cand = Tensor::zeros({in, h});
    p.b_cand = Tensor::zeros({h});
    p.w_head = Tensor::zeros({h, m});
    p.b_head = Tensor::zeros({m});
    return p;
}

} // namespace

TEST_CASE("seq_forward: zero parameters give zero logits and hidden state") {
    SeqModelConfig cfg = grad_suite::tiny_config();
    SeqModelParams p = zero_params(cfg);
    Rng rng(2);
    std::vector<double> xdata(2 * cfg.seq_len() * cfg.input_dim);
    for (double& v : xdata) v = rng.uniform(-1, 1);
    Tensor x = Tensor::from_data({2, cfg.seq_len(), cfg.input_dim}, std::move(xdata));
    auto out = seq_forward(p, cfg, x);
    for (double v : out.logits.data()) CHECK(v == 0.0);
    for (double v : out.last_hidden.data()) CHECK(v == 0.0);
    CHECK(out.logits.shape() == Shape{2, cfg.num_heads(), cfg.num_beams});
    CHECK(out.last_hidden.shape() == Shape{2, cfg.hidden_dim});
}

TEST_CASE("seq_forward: batch equivariance under sample permutation") {
    SeqModelConfig cfg = grad_suite::tiny_config();
    SeqModelParams p = SeqModelParams::init(cfg, 5);
    Rng rng(6);
    const size_t n = cfg.seq_len() * cfg.input_dim;
    std::vector<double> s0(n), s1(n);
    for (double& v : s0) v = rng.uniform(-1, 1);
    for (double& v : s1) v = rng.uniform(-1, 1);

    std::vector<double> fwd(s0), rev(s1);
    fwd.insert(fwd.end(), s1.begin(), s1.end());
    rev.insert(rev.end(), s0.begin(), s0.end());
    auto a = seq_forward(p, cfg, Tensor::from_data({2, cfg.seq_len(), cfg.input_dim}, fwd));
    auto b = seq_forward(p, cfg, Tensor::from_data({2, cfg.seq_len(), cfg.input_dim}, rev));

    const size_t row = cfg.num_heads() * cfg.num_beams;
    for (size_t j = 0; j < row; ++j) {
        CHECK(a.logits.data()[j] == b.logits.data()[row + j]);
        CHECK(a.logits.data()[row + j] == b.logits.data()[j]);
    }
}

TEST_CASE("seq_forward: single step matches hand-computed gate equations") {
    SeqModelConfig cfg;
    cfg.input_dim = 1;
    cfg.hidden_dim = 1;
    cfg.num_beams = 2;
    cfg.obs_len = 1;
    cfg.horizon = 0;
    SeqModelParams p = zero_params(cfg);
    // weights rows: [x ; h] -> hidden
    p.w_update = Tensor::from_data({2, 1}, {0.3, -0.2});
    p.b_update = Tensor::from_data({1}, {0.1});
    p.w_reset = Tensor::from_data({2, 1}, {-0.4, 0.5});
    p.b_reset = Tensor::from_data({1}, {-0.2});
    p.w_cand = Tensor::from_data({2, 1}, {0.7, 0.6});
    p.b_cand = Tensor::from_data({1}, {0.05});
    p.w_head = Tensor::from_data({1, 2}, {1.0, -2.0});
    p.b_head = Tensor::from_data({2}, {0.0, 0.5});

    const double x = 0.7, h0 = 0.0;
    auto sigma = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    const double z = sigma(0.3 * x + (-0.2) * h0 + 0.1);
    const double hcand = std::tanh(0.7 * x + 0.6 * 0.0 + 0.05); // r*h0 = 0
    const double h1 = (1.0 - z) * h0 + z * hcand;

    auto out = seq_forward(p, cfg, Tensor::from_data({1, 1, 1}, {x}));
    CHECK(out.last_hidden.data()[0] == doctest::Approx(h1).epsilon(1e-12));
    CHECK(out.logits.data()[0] == doctest::Approx(h1 * 1.0).epsilon(1e-12));
    CHECK(out.logits.data()[1] == doctest::Approx(h1 * -2.0 + 0.5).epsilon(1e-12));
}

TEST_CASE("seq_forward: wrong sequence length is a shape error") {
    SeqModelConfig cfg = grad_suite::tiny_config();
    SeqModelParams p = SeqModelParams::init(cfg, 1);
    Tensor bad = Tensor::zeros({2, cfg.seq_len() + 1, cfg.input_dim});
    CHECK_THROWS_AS((void)seq_forward(p, cfg, bad), Error);
}

TEST_CASE("full-model gradient check at tiny config") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        auto res = grad_suite::seq_model_composite(seed);
        INFO("worst at ", res.worst_where);
        CHECK(res.max_err < 1e-4);
    }
}

TEST_CASE("teacher and student logits share a shape") {
    SeqModelConfig teacher = grad_suite::tiny_config();
    SeqModelConfig student = teacher;
    student.hidden_dim = 2;
    Tensor x = Tensor::zeros({3, teacher.seq_len(), teacher.input_dim});
    auto t = seq_forward(SeqModelParams::init(teacher, 1), teacher, x);
    auto s = seq_forward(SeqModelParams::init(student, 2), student, x);
    CHECK(t.logits.shape() == s.logits.shape());
}

TEST_CASE("generator: padding contract and output range") {
    GeneratorConfig cfg;
    cfg.noise_dim = 16;
    cfg.hidden_dim = 8;
    cfg.obs_len = 4;
    cfg.feature_dim = 5;
    cfg.horizon = 2;
    GeneratorParams p = GeneratorParams::init(cfg, 3);

    Rng rng(10);
    double lo = 1e9, hi = -1e9;
    for (int trial = 0; trial < 1000; ++trial) {
        Tensor noise = sample_noise(rng, 2, cfg.noise_dim);
        Tensor out = generator_forward(p, cfg, noise);
        CHECK(out.shape() == Shape{2, cfg.obs_len + cfg.horizon, cfg.feature_dim});
        const auto& d = out.data();
        const size_t frame = cfg.feature_dim, total = cfg.obs_len + cfg.horizon;
        for (size_t b = 0; b < 2; ++b) {
            for (size_t t = cfg.obs_len; t < total; ++t)
                for (size_t j = 0; j < frame; ++j) CHECK(d[(b * total + t) * frame + j] == 0.0);
            for (size_t t = 0; t < cfg.obs_len; ++t)
                for (size_t j = 0; j < frame; ++j) {
                    const double v = d[(b * total + t) * frame + j];
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
        }
    }
    CHECK(lo > -1.0);
    CHECK(hi < 1.0);

    // zero weights: generated frames all zero
    GeneratorParams zp;
    zp.w1 = Tensor::zeros({cfg.noise_dim, cfg.hidden_dim});
    zp.b1 = Tensor::zeros({cfg.hidden_dim});
    zp.w2 = Tensor::zeros({cfg.hidden_dim, cfg.obs_len * cfg.feature_dim});
    zp.b2 = Tensor::zeros({cfg.obs_len * cfg.feature_dim});
    Tensor out = generator_forward(zp, cfg, sample_noise(rng, 3, cfg.noise_dim));
    for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("generator chain gradient check") {
    for (uint64_t seed : {4ull, 9ull}) {
        auto res = grad_suite::generator_composite(seed);
        INFO("worst at ", res.worst_where);
        CHECK(res.max_err < 1e-4);
    }
}

TEST_CASE("init: determinism and uniform moment check") {
    SeqModelConfig cfg = grad_suite::tiny_config();
    auto a = SeqModelParams::init(cfg, 42);
    auto b = SeqModelParams::init(cfg, 42);
    auto c = SeqModelParams::init(cfg, 43);
    CHECK(params_checksum(a.named()) == params_checksum(b.named()));
    CHECK(params_checksum(a.named()) != params_checksum(c.named()));

    // empirical stddev of U(-1/sqrt(fan_in), +1/sqrt(fan_in)) over 1e4 draws
    GeneratorConfig gcfg;
    gcfg.noise_dim = 100;
    gcfg.hidden_dim = 100; // w2 has 100 x (obs*feat) entries
    gcfg.obs_len = 10;
    gcfg.feature_dim = 10;
    gcfg.horizon = 0;
    auto gp = GeneratorParams::init(gcfg, 7);
    const auto& w = gp.w2.data(); // fan_in = 100, 10000 entries
    double sum = 0.0, sq = 0.0;
    for (double v : w) {
        sum += v;
        sq += v * v;
    }
    const double mean = sum / static_cast<double>(w.size());
    const double stddev = std::sqrt(sq / static_cast<double>(w.size()) - mean * mean);
    const double expected = (1.0 / std::sqrt(100.0)) / std::sqrt(3.0);
    CHECK(std::fabs(stddev - expected) / expected < 0.05);
}

TEST_CASE("adam: first-step magnitude, zero grads, quadratic convergence") {
    Tensor w = Tensor::from_data({3}, {1.0, 1.0, 1.0}, true);
    AdamConfig cfg;
    AdamState adam({{"w", w}}, cfg);

    backward(sum_all(mul(w, Tensor::from_data({3}, {100.0, -50.0, 2000.0}))));
    adam.step();
    // |g| >> eps: first update is about -lr * sign(g)
    CHECK(w.data()[0] == doctest::Approx(1.0 - cfg.lr).epsilon(1e-6));
    CHECK(w.data()[1] == doctest::Approx(1.0 + cfg.lr).epsilon(1e-6));
    CHECK(w.data()[2] == doctest::Approx(1.0 - cfg.lr).epsilon(1e-6));

    // zero gradient from a fresh state leaves parameters untouched
    Tensor z = Tensor::from_data({3}, {0.5, -0.25, 4.0}, true);
    AdamState zadam({{"z", z}});
    const std::vector<double> before = z.data();
    backward(scale(sum_all(z), 0.0));
    zadam.step();
    CHECK(z.data() == before);

    // 200 steps on ||w||^2 from w0 = 1
    Tensor q = Tensor::from_data({4}, {1.0, 1.0, 1.0, 1.0}, true);
    AdamConfig qcfg;
    qcfg.lr = 0.05;
    AdamState qadam({{"q", q}}, qcfg);
    for (int it = 0; it < 200; ++it) {
        qadam.zero_grad();
        backward(sum_all(square(q)));
        qadam.step();
    }
    double norm = 0.0;
    for (double v : q.data()) norm += v * v;
    CHECK(std::sqrt(norm) < 1e-2);
}

TEST_CASE("adam: missing gradient names the parameter") {
    Tensor w = Tensor::from_data({2}, {1.0, 2.0}, true);
    AdamState adam({{"gru.update.w", w}});
    CHECK_THROWS_WITH_AS(adam.step(), doctest::Contains("gru.update.w"), Error);
}
