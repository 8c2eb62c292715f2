#pragma once

// Finite-difference check of total_loss_and_gradients. The detached values of
// the base point are frozen so the numeric loss is the same surrogate the
// analytic pass differentiates. A coordinate is skipped when a +-h step changes
// the support of z1 or z2 (a top-k, gate, or relu boundary is crossed).

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hhsae/model.hpp"
#include "hhsae/objective.hpp"

namespace gradcheck {

using namespace hhsae;

struct Result {
    std::size_t checked = 0;
    std::size_t skipped = 0;
    double max_rel_err = 0.0;
    std::string worst;  // "tensor[index]"
};

// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
// gradient is zero from dividing rounding noise by rounding noise.
inline double rel_err(double a, double n, double floor = 1e-6) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

inline std::vector<char> support(const ForwardTrace& t) {
    std::vector<char> s;
    s.reserve(t.z1.size() + t.z2.size());
    for (double v : t.z1.flat()) s.push_back(v != 0.0);
    for (double v : t.z2.flat()) s.push_back(v != 0.0);
    return s;
}

inline Result check(const Matrix& x, const std::vector<int>& y, const ModelParams& params, const LossWeights& w,
                    double h = 1e-5) {
    const auto base = full_forward(x, params);
    const DetachedValues frozen{base.x_resid, base.z1};
    const auto base_support = support(base);
    const auto analytic = total_loss_and_gradients(x, y, params, w);

    Result r;
    ModelParams probe = params;
    auto probe_tensors = probe.tensors();
    const auto grad_tensors = analytic.grads.tensors();
    for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
        Matrix& m = *probe_tensors[t].second;
        const Matrix& g = *grad_tensors[t].second;
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double orig = m[i];
            m[i] = orig + h;
            const auto tp = full_forward(x, probe, &frozen);
            const double lp = evaluate_loss(tp, x, y, w, probe.dims.dense_enabled).total;
            m[i] = orig - h;
            const auto tm = full_forward(x, probe, &frozen);
            const double lm = evaluate_loss(tm, x, y, w, probe.dims.dense_enabled).total;
            m[i] = orig;
            if (support(tp) != base_support || support(tm) != base_support) {
                ++r.skipped;
                continue;
            }
            const double numeric = (lp - lm) / (2.0 * h);
            const double e = rel_err(g[i], numeric);
            ++r.checked;
            if (e > r.max_rel_err) {
                r.max_rel_err = e;
                r.worst = probe_tensors[t].first + "[" + std::to_string(i) + "]";
            }
        }
    }
    return r;
}

// Small instance used by the oracle tests: biases and gate offsets are drawn
// so every term and every parameter group is active.
inline ModelParams random_instance(const ModelDims& dims, std::uint64_t seed) {
    ModelParams p = init_model(dims, seed);
    Rng rng(seed, "gradcheck");
    auto jitter = [&](Matrix& m, double s) {
        for (auto& v : m.flat()) v += s * rng.normal();
    };
    jitter(p.dense.b_dec0, 0.1);
    jitter(p.atoms.b_gate, 0.1);
    jitter(p.atoms.r_mag, 0.2);
    jitter(p.atoms.b_mag, 0.1);
    jitter(p.atoms.b_dec1, 0.1);
    jitter(p.comp.W_enc2, 0.3);
    jitter(p.comp.b_enc2, 0.1);
    jitter(p.comp.b_dec2, 0.1);
    return p;
}

}  // namespace gradcheck
