#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hhsae/data.hpp"
#include "hhsae/model.hpp"
#include "hhsae/objective.hpp"
#include "hhsae/trainer.hpp"

namespace hhsae {

// Thrown for schema violations; the message names the offending key.
struct ConfigError : Error {
    using Error::Error;
};

struct DataSection {
    std::string csv_path;           // empty: use the run directory's synthgen output
    std::string label_column = "label";
    double clip_lo = 0.005;
    double clip_hi = 0.995;
    std::vector<std::string> log_features;
    double train_fraction = 0.5;
    ManifoldConfig synthetic;       // synthgen parameters (its rng_seed is replaced by the run seed)
};

struct DiscoverySection {
    double resolution = 1.0;
    double theta_atom = 0.05;
    std::string cohort = "positives";  // "positives" or "all"
    std::size_t top_n = 10;
};

struct SynthesisSection {
    int module = -1;                 // -1: the module holding the most bias-profile mass
    double alpha_lo = 1.2;
    double alpha_hi = 3.5;
    std::size_t n_samples = 0;       // 0: synthetic_ratio of the training positives
};

struct EvalSection {
    std::size_t folds = 3;
    std::size_t runs = 10;
    double spec_target = 0.90;
    double l2_reg = 1e-3;           // linear probes
    double augment_l2_reg = 1e-2;   // downstream classifier of augment-eval
    double synthetic_ratio = 0.2;
    double subsample = 0.8;
};

struct RunConfig {
    std::uint64_t seed = 0;
    DataSection data;
    ModelDims model;       // model.D is taken from the data
    TrainConfig train;     // train.dims/loss/rng_seed are filled from the other sections
    LossWeights loss;
    DiscoverySection discovery;
    SynthesisSection synthesis;
    EvalSection eval;

    void validate() const;
    // TrainConfig for a dataset of width D.
    TrainConfig train_config(std::size_t D) const;
};

RunConfig default_run_config();

nlohmann::json to_json(const RunConfig& c);
// Rejects keys absent from the default schema, naming the dotted path.
RunConfig run_config_from_json(const nlohmann::json& j);

// Applies "a.b.c=value" where value is parsed as JSON when possible and kept
// as a string otherwise. The path must already exist in the schema.
void apply_override(nlohmann::json& doc, const std::string& assignment);

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace hhsae
