#pragma once

// Adam with bias correction, operating in place on a fixed list of named
// leaf tensors.

#include <cmath>
#include <string>
#include <vector>

#include "dfkd/errors.hpp"
#include "dfkd/models.hpp"
#include "dfkd/tensor.hpp"

namespace dfkd {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamState {
public:
    AdamState(std::vector<NamedTensor> params, AdamConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].second.size(), 0.0);
            v_[i].assign(params_[i].second.size(), 0.0);
        }
    }

    size_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

    void zero_grad() {
        for (auto& [name, t] : params_) t.zero_grad();
    }

    void step() {
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& [name, t] = params_[i];
            if (!t.has_grad())
                throw contract_error("adam_step: missing gradient for parameter '" + name + "'");
            const std::vector<double>& g = t.grad();
            std::vector<double>& w = t.mutable_data();
            double* m = m_[i].data();
            double* v = v_[i].data();
            for (size_t j = 0; j < w.size(); ++j) {
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

private:
    std::vector<NamedTensor> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    size_t step_ = 0;
};

} // namespace dfkd
