#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hhsae/data.hpp"
#include "hhsae/model.hpp"
#include "hhsae/objective.hpp"

namespace hhsae {

struct TrainConfig {
    std::size_t epochs = 150;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    double lr_decay_gamma = 0.985;  // per-epoch multiplier
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    LossWeights loss;
    std::uint64_t rng_seed = 0;
    ModelDims dims;  // dims.D is taken from the dataset

    void validate() const;
    double lr_at(std::size_t epoch) const;
};

enum class Tier { L1, L2 };

struct EpochReport {
    std::size_t epoch = 0;
    LossBreakdown loss;          // mean over the epoch's mini-batches
    double dead_feature_ratio_L1 = 0.0;
    double dead_feature_ratio_L2 = 0.0;
    double active_fraction_L1 = 0.0;  // mean nnz / width per sample
    double active_fraction_L2 = 0.0;
    double energy_L1 = 0.0;
    double energy_L2 = 0.0;
    double mse_pos = 0.0;
    double mse_neg = 0.0;
    double lr_used = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochReport> reports;
    bool diverged = false;  // params then hold the last finished epoch
    std::string message;
};

using EpochCallback = std::function<void(const EpochReport&)>;

TrainResult train(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Code-level diagnostics.
double dead_feature_ratio(const Matrix& codes);
double active_fraction(const Matrix& codes);
double activation_energy(const Matrix& codes);

// Model-level diagnostics over a full dataset.
double dead_feature_ratio(const ModelParams& model, const Dataset& data, Tier tier);
double activation_energy(const ModelParams& model, const Dataset& data, Tier tier);
// Mean per-feature squared reconstruction error per class, {positives, negatives}.
std::pair<double, double> class_conditional_mse(const ModelParams& model, const Dataset& data);

EpochReport diagnose(const ModelParams& model, const Dataset& data);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
    ModelParams params;
    std::optional<PreprocessStats> stats;
    nlohmann::json config;
};

void save_checkpoint(const ModelParams& params, const PreprocessStats* stats,
                     const std::filesystem::path& path, const nlohmann::json& config = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json dims_to_json(const ModelDims& d);
ModelDims dims_from_json(const nlohmann::json& j);

}  // namespace hhsae
