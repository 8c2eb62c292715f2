#include "hhsae/synthesis.hpp"

#include <algorithm>
#include <cmath>

namespace hhsae {

void SteeringSpec::validate() const {
    if (module.neuron_ids.empty()) throw Error("steering: module has no neurons");
    if (beta.size() != module.neuron_ids.size())
        throw Error("steering: beta has " + std::to_string(beta.size()) + " entries for " +
                    std::to_string(module.neuron_ids.size()) + " module neurons");
    for (double b : beta)
        if (!std::isfinite(b)) throw Error("steering: beta must be finite");
    if (!std::isfinite(alpha_range.first) || !std::isfinite(alpha_range.second) ||
        alpha_range.first > alpha_range.second)
        throw Error("steering: alpha_range requires lo <= hi");
}

CarrierStats CarrierStats::from_data(const Matrix& x) {
    if (x.rows() == 0) throw Error("carrier stats: empty data");
    CarrierStats s;
    s.mu_pop.assign(x.cols(), 0.0);
    s.sigma_pop.assign(x.cols(), 0.0);
    const double n = static_cast<double>(x.rows());
    for (std::size_t b = 0; b < x.rows(); ++b)
        for (std::size_t f = 0; f < x.cols(); ++f) s.mu_pop[f] += x(b, f) / n;
    for (std::size_t b = 0; b < x.rows(); ++b)
        for (std::size_t f = 0; f < x.cols(); ++f) {
            const double d = x(b, f) - s.mu_pop[f];
            s.sigma_pop[f] += d * d / n;
        }
    for (auto& v : s.sigma_pop) v = std::max(std::sqrt(v), 1e-12);
    return s;
}

SnapBounds SnapBounds::from_training(const Dataset& train, const PreprocessStats& stats) {
    if (train.n() == 0) throw Error("snap bounds: empty training data");
    if (stats.features.size() != train.d()) throw Error("snap bounds: stats do not match the data");
    SnapBounds b;
    const std::size_t D = train.d();
    b.lo.assign(D, 0.0);
    b.hi.assign(D, 0.0);
    b.kind.resize(D);
    b.flag_zero.assign(D, 0.0);
    b.flag_one.assign(D, 0.0);
    for (std::size_t f = 0; f < D; ++f) {
        b.lo[f] = b.hi[f] = train.X(0, f);
        for (std::size_t i = 1; i < train.n(); ++i) {
            b.lo[f] = std::min(b.lo[f], train.X(i, f));
            b.hi[f] = std::max(b.hi[f], train.X(i, f));
        }
        b.kind[f] = stats.features[f].kind;
        if (b.kind[f] == FeatureKind::Flag) {
            b.flag_zero[f] = stats.forward(f, 0.0);
            b.flag_one[f] = stats.forward(f, 1.0);
        }
    }
    return b;
}

Matrix snap(const Matrix& x, const SnapBounds& bounds) {
    if (x.cols() != bounds.lo.size()) throw Error("snap: bounds cover a different feature count");
    Matrix out = x;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto row = out.row(i);
        for (std::size_t f = 0; f < row.size(); ++f) {
            if (bounds.kind[f] == FeatureKind::Flag) {
                const double d0 = std::abs(row[f] - bounds.flag_zero[f]);
                const double d1 = std::abs(row[f] - bounds.flag_one[f]);
                row[f] = d1 < d0 ? bounds.flag_one[f] : bounds.flag_zero[f];
            } else {
                row[f] = std::clamp(row[f], bounds.lo[f], bounds.hi[f]);
            }
        }
    }
    return out;
}

namespace {

std::vector<double> mean_z2(const ModelParams& model, const Dataset& d, const ConceptModule& module) {
    const Matrix z2 = full_forward(d.X, model).z2;
    std::vector<double> out;
    for (auto j : module.neuron_ids) {
        if (j >= z2.cols()) throw Error("bias profile: neuron id " + std::to_string(j) + " out of range");
        double s = 0.0;
        for (std::size_t b = 0; b < z2.rows(); ++b) s += z2(b, j);
        out.push_back(s / static_cast<double>(z2.rows()));
    }
    return out;
}

}  // namespace

std::vector<double> derive_bias_profile(const ModelParams& model, const Dataset& rare_cohort,
                                        const Dataset& background, const ConceptModule& module) {
    if (rare_cohort.n() == 0) throw Error("bias profile: empty rare cohort");
    if (background.n() == 0) throw Error("bias profile: empty background cohort");
    if (module.neuron_ids.empty()) throw Error("bias profile: empty module");
    auto rare = mean_z2(model, rare_cohort, module);
    const auto bg = mean_z2(model, background, module);
    for (std::size_t i = 0; i < rare.size(); ++i) rare[i] = std::max(0.0, rare[i] - bg[i]);
    return rare;
}

Matrix sample_carrier(const ModelParams& model, const CarrierStats& stats, std::size_t n, std::uint64_t rng_seed) {
    const std::size_t D = model.dims.D;
    if (stats.mu_pop.size() != D || stats.sigma_pop.size() != D)
        throw Error("sample_carrier: population stats have the wrong width");
    Rng rng(rng_seed, stream::kSynthesis, 0);
    Matrix input(n, D);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t f = 0; f < D; ++f) input(i, f) = rng.normal() * stats.sigma_pop[f] + stats.mu_pop[f];
    if (!model.dims.dense_enabled) return Matrix(n, D);
    return dense_forward(input, model.dense).second;
}

SynthesisResult synthesize(const ModelParams& model, const SteeringSpec& spec, const CarrierStats& stats,
                           const SnapBounds& bounds, const std::vector<std::string>& feature_names,
                           const std::vector<bool>* live_neurons) {
    spec.validate();
    const std::size_t d2 = model.dims.d2;
    bool any_live = false;
    for (auto j : spec.module.neuron_ids) {
        if (j >= d2) throw Error("synthesize: module neuron " + std::to_string(j) + " out of range");
        bool live;
        if (live_neurons) {
            live = j < live_neurons->size() && (*live_neurons)[j];
        } else {
            live = false;
            for (std::size_t a = 0; a < model.comp.W_dec2.rows(); ++a) live |= model.comp.W_dec2(a, j) != 0.0;
        }
        any_live |= live;
    }
    if (!any_live) throw Error("synthesize: module is disjoint from the live L2 neurons");
    if (feature_names.size() != model.dims.D) throw Error("synthesize: feature names do not match the model width");

    SynthesisResult r;
    const std::size_t n = spec.n_samples;
    r.carriers = sample_carrier(model, stats, n, spec.rng_seed);
    r.z2_baseline = n ? full_forward(r.carriers, model).z2 : Matrix(0, d2);

    Rng rng(spec.rng_seed, stream::kSynthesis, 1);
    r.alphas.resize(n);
    for (auto& a : r.alphas) a = rng.uniform(spec.alpha_range.first, spec.alpha_range.second);

    r.z2_steered = r.z2_baseline;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < spec.module.neuron_ids.size(); ++k)
            r.z2_steered(i, spec.module.neuron_ids[k]) += spec.beta[k] * r.alphas[i];

    Matrix x = decode_innovation(r.z2_steered, model);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += r.carriers[i];

    r.data.X = snap(x, bounds);
    r.data.y.assign(n, 1);
    r.data.feature_names = feature_names;
    r.data.feature_kinds = bounds.kind;
    return r;
}

nlohmann::json to_json(const SteeringSpec& s) {
    return {{"module_id", s.module.module_id},
            {"neuron_ids", s.module.neuron_ids},
            {"beta", s.beta},
            {"alpha_range", {s.alpha_range.first, s.alpha_range.second}},
            {"n_samples", s.n_samples},
            {"rng_seed", s.rng_seed}};
}

}  // namespace hhsae
