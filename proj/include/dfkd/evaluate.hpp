#pragma once

// Beam prediction and Top-K accuracy per horizon offset, plus the eval
// report structure shared by the CLI and the experiment runner. Reports are
// pure functions of (model parameters, dataset, K list): no timestamps, no
// environment.

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfkd/checkpoint.hpp"
#include "dfkd/models.hpp"
#include "dfkd/scenario.hpp"
#include "dfkd/tensor.hpp"

namespace dfkd {

struct SeqModel {
    SeqModelConfig config;
    SeqModelParams params;
};

inline SeqModel eval_model(const TeacherCheckpoint& ckpt) { return {ckpt.config, ckpt.params.frozen()}; }
inline SeqModel eval_model(const StudentCheckpoint& ckpt) { return {ckpt.config, ckpt.params.frozen()}; }

// maps a [B x (L+V) x D] batch to [B x (V+1) x M] logits
using BatchLogitsFn = std::function<Tensor(const Tensor&)>;

inline BatchLogitsFn batch_logits_fn(const SeqModel& model) {
    return [model](const Tensor& x) { return seq_forward(model.params, model.config, x).logits; };
}

// indices of the K largest values, descending, ties toward smaller index
inline std::vector<int> rank_topk(const double* values, size_t m, size_t k) {
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(),
                      [&](int a, int b) {
                          if (values[a] != values[b]) return values[a] > values[b];
                          return a < b;
                      });
    order.resize(k);
    return order;
}

// Ranked top-K beams for one observation window, one list per horizon
// offset v = 0..V.
inline std::vector<std::vector<int>> predict_beams(const SeqModel& model,
                                                   const std::vector<double>& frames, size_t k) {
    const SeqModelConfig& cfg = model.config;
    if (k < 1 || k > cfg.num_beams)
        throw parameter_error("predict_beams: K=" + std::to_string(k) + " outside [1, " +
                              std::to_string(cfg.num_beams) + "]");
    if (frames.size() != cfg.seq_len() * cfg.input_dim)
        throw dimension_error("predict_beams: expected " + std::to_string(cfg.seq_len() * cfg.input_dim) +
                              " frame values, got " + std::to_string(frames.size()));
    Tensor x = Tensor::from_data({1, cfg.seq_len(), cfg.input_dim}, frames);
    Tensor logits = seq_forward(model.params, cfg, x).logits;
    std::vector<std::vector<int>> out;
    out.reserve(cfg.num_heads());
    for (size_t v = 0; v < cfg.num_heads(); ++v)
        out.push_back(rank_topk(logits.data().data() + v * cfg.num_beams, cfg.num_beams, k));
    return out;
}

namespace detail {

inline Tensor batch_frames(const Dataset& ds, const std::vector<size_t>& idx, size_t begin, size_t count) {
    const size_t frame_len = ds.config.seq_len() * ds.config.feature_dim;
    std::vector<double> data(count * frame_len);
    for (size_t i = 0; i < count; ++i) {
        const Sample& s = ds.samples[idx[begin + i]];
        std::copy(s.frames.begin(), s.frames.end(), data.begin() + static_cast<long>(i * frame_len));
    }
    return Tensor::from_data({count, ds.config.seq_len(), ds.config.feature_dim}, std::move(data));
}

} // namespace detail

// Fraction of split samples whose true beam at offset v appears among the
// top-K predictions; one entry per offset.
inline std::vector<double> topk_accuracy(const BatchLogitsFn& logits_fn, const Dataset& ds, Split split,
                                         size_t k) {
    const std::vector<size_t> idx = ds.split_indices(split);
    if (idx.empty())
        throw contract_error(std::string("topk_accuracy: ") + split_name(split) + " split is empty");
    const size_t heads = ds.config.horizon + 1, m = ds.config.array.num_beams;
    if (k < 1 || k > m)
        throw parameter_error("topk_accuracy: K=" + std::to_string(k) + " outside [1, " + std::to_string(m) + "]");
    std::vector<size_t> hits(heads, 0);
    constexpr size_t kChunk = 64;
    for (size_t begin = 0; begin < idx.size(); begin += kChunk) {
        const size_t count = std::min(kChunk, idx.size() - begin);
        Tensor logits = logits_fn(detail::batch_frames(ds, idx, begin, count));
        if (logits.shape() != Shape{count, heads, m})
            throw dimension_error("topk_accuracy: model emitted " + shape_str(logits.shape()) +
                                  ", dataset expects " + shape_str({count, heads, m}));
        for (size_t i = 0; i < count; ++i) {
            const Sample& s = ds.samples[idx[begin + i]];
            for (size_t v = 0; v < heads; ++v) {
                const double* row = logits.data().data() + (i * heads + v) * m;
                auto top = rank_topk(row, m, k);
                if (std::find(top.begin(), top.end(), s.labels[v]) != top.end()) ++hits[v];
            }
        }
    }
    std::vector<double> acc(heads);
    for (size_t v = 0; v < heads; ++v)
        acc[v] = static_cast<double>(hits[v]) / static_cast<double>(idx.size());
    return acc;
}

struct ConfusedPair {
    int true_beam = 0;
    int predicted = 0;
    size_t count = 0;
};

struct EvalReport {
    std::string model_id;
    std::string split;
    std::string dataset_hash;
    size_t sample_count = 0;
    std::vector<size_t> ks;
    std::map<size_t, std::vector<double>> accuracy;      // K -> per-offset accuracies
    std::vector<std::vector<ConfusedPair>> confusion;    // per offset, top-1 mistakes
};

inline void to_json(nlohmann::json& j, const ConfusedPair& p) {
    j = {{"true", p.true_beam}, {"predicted", p.predicted}, {"count", p.count}};
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
    nlohmann::json acc = nlohmann::json::object();
    for (const auto& [k, v] : r.accuracy) acc["top" + std::to_string(k)] = v;
    j = {{"model", r.model_id},
         {"split", r.split},
         {"dataset_hash", r.dataset_hash},
         {"samples", r.sample_count},
         {"accuracy", acc},
         {"confusion", r.confusion}};
}

inline std::string model_identity(const SeqModel& model, const std::string& kind) {
    return kind + ":H" + std::to_string(model.config.hidden_dim) + ":params=" +
           hex64(params_checksum(model.params.named()));
}

inline EvalReport make_eval_report(const SeqModel& model, const std::string& model_id, const Dataset& ds,
                                   Split split, std::vector<size_t> ks = {1, 5}) {
    EvalReport rep;
    rep.model_id = model_id;
    rep.split = split_name(split);
    rep.dataset_hash = ds.config_hash;
    std::sort(ks.begin(), ks.end());
    rep.ks = ks;
    const auto fn = batch_logits_fn(model);
    const auto idx = ds.split_indices(split);
    rep.sample_count = idx.size();
    for (size_t k : ks) rep.accuracy[k] = topk_accuracy(fn, ds, split, k);

    // top-1 confusion: most frequent (true, predicted != true) pairs per offset
    const size_t heads = ds.config.horizon + 1, m = ds.config.array.num_beams;
    std::vector<std::map<std::pair<int, int>, size_t>> pair_counts(heads);
    constexpr size_t kChunk = 64;
    for (size_t begin = 0; begin < idx.size(); begin += kChunk) {
        const size_t count = std::min(kChunk, idx.size() - begin);
        Tensor logits = fn(detail::batch_frames(ds, idx, begin, count));
        for (size_t i = 0; i < count; ++i) {
            const Sample& s = ds.samples[idx[begin + i]];
            for (size_t v = 0; v < heads; ++v) {
                const double* row = logits.data().data() + (i * heads + v) * m;
                const int pred = rank_topk(row, m, 1)[0];
                if (pred != s.labels[v]) ++pair_counts[v][{s.labels[v], pred}];
            }
        }
    }
    rep.confusion.resize(heads);
    for (size_t v = 0; v < heads; ++v) {
        std::vector<ConfusedPair> pairs;
        for (const auto& [key, n] : pair_counts[v]) pairs.push_back({key.first, key.second, n});
        std::sort(pairs.begin(), pairs.end(), [](const ConfusedPair& a, const ConfusedPair& b) {
            if (a.count != b.count) return a.count > b.count;
            if (a.true_beam != b.true_beam) return a.true_beam < b.true_beam;
            return a.predicted < b.predicted;
        });
        if (pairs.size() > 5) pairs.resize(5);
        rep.confusion[v] = std::move(pairs);
    }
    return rep;
}

// CSV rows: one per (arm, offset, K)
inline void append_csv_rows(std::ostringstream& os, const std::string& arm, const EvalReport& rep) {
    for (const auto& [k, acc] : rep.accuracy)
        for (size_t v = 0; v < acc.size(); ++v) {
            std::ostringstream num;
            num.precision(17);
            num << acc[v];
            os << arm << ',' << v << ',' << k << ',' << num.str() << '\n';
        }
}

inline std::string csv_header() { return "arm,offset,k,accuracy\n"; }

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

} // namespace dfkd
