#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hhsae/numerics.hpp"

namespace hhsae {

enum class FeatureKind { Continuous, Flag };

struct Dataset {
    Matrix X;                              // N x D
    std::vector<int> y;                    // 0/1, length N
    std::vector<std::string> feature_names;
    std::vector<FeatureKind> feature_kinds;

    std::size_t n() const { return X.rows(); }
    std::size_t d() const { return X.cols(); }
    std::size_t positives() const;

    // Throws if labels are not binary, names are duplicated, or lengths disagree.
    void validate() const;
    Dataset subset(std::span<const std::size_t> rows) const;
    Dataset with_label(int label) const;
};

// Stack two datasets with identical schema.
Dataset concat(const Dataset& a, const Dataset& b);

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

// Header row required. The label column is removed from the features; a
// feature whose every value is 0 or 1 is tagged as a flag.
Dataset load_csv(const std::filesystem::path& path, const std::string& label_column = "label");
void write_csv(const Dataset& d, const std::filesystem::path& path,
               const std::string& label_column = "label");

// Shortest text that parses back to the same double.
std::string format_number(double v);

// ---------------------------------------------------------------------------
// Preprocessing: clip -> optional log1p -> standardize
// ---------------------------------------------------------------------------

struct FeatureStats {
    std::string name;
    FeatureKind kind = FeatureKind::Continuous;
    double clip_lo = 0.0;
    double clip_hi = 0.0;
    bool log = false;
    double mean = 0.0;
    double std = 1.0;
    bool zero_variance = false;
};

struct PreprocessStats {
    std::vector<FeatureStats> features;

    std::string to_json() const;
    static PreprocessStats from_json(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static PreprocessStats load(const std::filesystem::path& path);

    // Transformed-space value of a raw value for one feature.
    double forward(std::size_t feature, double raw) const;
    double inverse(std::size_t feature, double transformed) const;
};

struct ClipQuantiles {
    double lo = 0.005;
    double hi = 0.995;
};

// Empirical quantile, linear interpolation between order statistics.
double empirical_quantile(std::vector<double> values, double q);

// Flags are never clipped (their bounds are [0, 1]).
PreprocessStats preprocess_fit(const Dataset& d, ClipQuantiles clip,
                               const std::set<std::string>& log_features);
Dataset preprocess_apply(const Dataset& d, const PreprocessStats& s);
Matrix inverse_transform(const Matrix& x_transformed, const PreprocessStats& s);

// Per-class shuffle; the first part receives round(fraction * class count)
// members of each class. Row order inside each part follows the input.
std::pair<Dataset, Dataset> stratified_split(const Dataset& d, double fraction,
                                             std::uint64_t rng_seed);

// ---------------------------------------------------------------------------
// Planted-structure manifold
// ---------------------------------------------------------------------------

struct ManifoldConfig {
    std::size_t n = 20000;
    std::size_t D = 32;
    std::size_t r = 8;                  // context dimension
    std::size_t m = 64;                 // planted atoms
    std::size_t n_motifs = 4;
    std::size_t atoms_per_motif = 4;
    std::size_t n_positive_motifs = 1;  // motifs [0, n_positive_motifs) carry label 1
    double prevalence = 0.02;
    double noise_std = 0.05;
    std::uint64_t rng_seed = 0;

    double context_scale = 3.0;            // std of the context code
    double positive_context_shift = 0.0;   // positives' context mean offset, in units of context_scale
    double decoy_rate = 0.02;              // fraction of samples per negative motif
    std::size_t motif_overlap = 1;         // atoms each decoy motif shares with motif 0; at
                                           // atoms_per_motif decoys differ from positives only by context
    std::size_t background_atoms = 2;      // singleton atoms per non-motif sample
    double coef_lo = 0.3;
    double coef_hi = 0.7;
    double coef_jitter = 0.05;             // per-atom multiplicative jitter around the motif amplitude

    void validate() const;
};

struct PlantedGroundTruth {
    Matrix context_basis;                                      // D x r, orthonormal columns
    Matrix atom_dictionary;                                    // D x m, unit columns orthogonal to context
    std::vector<std::vector<std::size_t>> motif_table;
    std::vector<int> motif_assignments;                        // per sample; -1 = background
    std::set<int> positive_motif_ids;
    std::vector<std::vector<std::pair<std::size_t, double>>> sample_atoms;  // active atoms + coefficients
    Matrix context_codes;                                      // N x r, scaled codes

    // JSON document plus a tensor sidecar next to it (<path>.bin).
    void save(const std::filesystem::path& json_path) const;
    static PlantedGroundTruth load(const std::filesystem::path& json_path);
};

std::pair<Dataset, PlantedGroundTruth> generate_synthetic_manifold(const ManifoldConfig& cfg);

}  // namespace hhsae
