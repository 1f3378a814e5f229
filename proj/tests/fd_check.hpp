#pragma once

// Finite-difference gradient oracle, independent of the reverse-mode path
// it checks. rebuild() must reconstruct the computation from the current
// leaf values and return the scalar loss; the harness perturbs one leaf
// coordinate at a time with a central difference.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dfkd/tensor.hpp"

namespace fd {

struct Result {
    double max_err = 0.0;    // worst blended relative error seen
    size_t coords = 0;       // coordinates checked
    std::string worst_where; // leaf index / coordinate of the worst error
};

// err = |ad - fd| / max(|ad|, |fd|, 1): relative for large gradients,
// absolute near zero where FD noise dominates.
inline double blended_err(double ad, double fdv) {
    const double scale = std::max({std::fabs(ad), std::fabs(fdv), 1.0});
    return std::fabs(ad - fdv) / scale;
}

inline Result check_gradients(const std::function<dfkd::Tensor()>& rebuild,
                              std::vector<dfkd::Tensor> leaves, double step = 1e-5) {
    for (auto& t : leaves) t.zero_grad();
    dfkd::Tensor loss = rebuild();
    dfkd::backward(loss);

    std::vector<std::vector<double>> ad_grads;
    ad_grads.reserve(leaves.size());
    for (const auto& t : leaves)
        ad_grads.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.size(), 0.0));

    Result res;
    for (size_t li = 0; li < leaves.size(); ++li) {
        std::vector<double>& data = leaves[li].mutable_data();
        for (size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            data[i] = orig + step;
            const double f_plus = rebuild().item();
            data[i] = orig - step;
            const double f_minus = rebuild().item();
            data[i] = orig;
            const double fdv = (f_plus - f_minus) / (2.0 * step);
            const double err = blended_err(ad_grads[li][i], fdv);
            ++res.coords;
            if (err > res.max_err) {
                res.max_err = err;
                res.worst_where = "leaf " + std::to_string(li) + " coord " + std::to_string(i);
            }
        }
    }
    return res;
}

} // namespace fd
