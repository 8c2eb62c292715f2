#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hhsae/data.hpp"
#include "hhsae/discovery.hpp"
#include "hhsae/model.hpp"

namespace hhsae {

struct SteeringSpec {
    ConceptModule module;
    std::vector<double> beta;  // one entry per module neuron, same order as module.neuron_ids
    std::pair<double, double> alpha_range{1.2, 3.5};
    std::size_t n_samples = 0;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

// Population statistics of the (transformed) training data.
struct CarrierStats {
    std::vector<double> mu_pop;
    std::vector<double> sigma_pop;  // floored at 1e-12

    static CarrierStats from_data(const Matrix& x);
};

struct SnapBounds {
    std::vector<double> lo, hi;       // observed training support, transformed space
    std::vector<FeatureKind> kind;
    std::vector<double> flag_zero;    // encoded value of a raw 0 (flags only)
    std::vector<double> flag_one;     // encoded value of a raw 1

    // train must already be preprocessed with stats.
    static SnapBounds from_training(const Dataset& train, const PreprocessStats& stats);
};

// Continuous features are clamped to [lo, hi]; flags go to the nearer encoded
// value, with an exact midpoint going to the 0 encoding.
Matrix snap(const Matrix& x, const SnapBounds& bounds);

// Per-neuron rare-minus-background mean z2, floored at 0. Returned in the
// order of module.neuron_ids.
std::vector<double> derive_bias_profile(const ModelParams& model, const Dataset& rare_cohort,
                                        const Dataset& background, const ConceptModule& module);

// Dense-path image of population noise: x_hat_cont of (eps * sigma + mu).
Matrix sample_carrier(const ModelParams& model, const CarrierStats& stats, std::size_t n, std::uint64_t rng_seed);

struct SynthesisResult {
    Dataset data;             // transformed space, every label 1
    Matrix carriers;          // n x D
    Matrix z2_baseline;       // carrier encodings before the push
    Matrix z2_steered;
    std::vector<double> alphas;
};

// live_neurons (optional) marks L2 neurons that fire on real data; the module
// must intersect it. Without the mask a neuron counts as live when its
// decoder column is nonzero.
SynthesisResult synthesize(const ModelParams& model, const SteeringSpec& spec, const CarrierStats& stats,
                           const SnapBounds& bounds, const std::vector<std::string>& feature_names,
                           const std::vector<bool>* live_neurons = nullptr);

nlohmann::json to_json(const SteeringSpec& s);

}  // namespace hhsae
