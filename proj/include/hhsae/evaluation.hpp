#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hhsae/data.hpp"
#include "hhsae/model.hpp"
#include "hhsae/trainer.hpp"

namespace hhsae {

// --- metrics ---------------------------------------------------------------------
// Scores rank positives high. A sample is predicted positive when score >= t.

// Mann-Whitney: P(s_pos > s_neg) + 0.5 P(s_pos == s_neg), exact.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);
// Average precision with tied scores entering together.
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);
// Recall at the smallest threshold (distinct score or +inf) whose specificity
// reaches the target. A tie group straddling the target is excluded whole.
double recall_at_specificity(const std::vector<double>& scores, const std::vector<int>& labels,
                             double spec_target = 0.90);
// Max F1 over thresholds at every distinct score and +inf.
double best_f1(const std::vector<double>& scores, const std::vector<int>& labels);

// --- logistic probe ----------------------------------------------------------------

struct LogisticFit {
    std::vector<double> mean, scale;  // train-split standardization
    std::vector<double> w;            // on standardized features
    double bias = 0.0;
    std::vector<double> loss_history;
    std::size_t iterations = 0;
    double grad_norm = 0.0;

    std::vector<double> decision(const Matrix& x) const;
};

// Full-batch gradient descent on mean log-loss + l2/2 |w|^2. Steps are
// Barzilai-Borwein proposals cut back until the loss decreases, so the loss
// history is monotone. Stops at gradient norm < tol or max_iter.
LogisticFit fit_logistic(const Matrix& x, const std::vector<int>& y, double l2_reg,
                         std::size_t max_iter = 5000, double tol = 1e-6);

// Per-class shuffle then round-robin fold ids.
std::vector<int> stratified_folds(const std::vector<int>& labels, std::size_t folds, std::uint64_t rng_seed);

struct ProbeReport {
    std::string tier;
    double auc = 0.0;      // mean over folds
    double auc_sd = 0.0;   // sample sd over folds
    double gain_vs_L0 = 0.0;
    std::size_t fold_count = 0;
    std::vector<double> fold_aucs;
};

ProbeReport fit_linear_probe(const Matrix& features, const std::vector<int>& labels, double l2_reg = 1e-3,
                             std::size_t folds = 3, std::uint64_t rng_seed = 0);

struct UtilityReport {
    std::vector<ProbeReport> tiers;  // L0, f1, f2, f1_hat, L0+f1, L0+f2, f1+f2
    double denoising_delta = 0.0;    // auc(f1_hat) - auc(f1)

    const ProbeReport& at(const std::string& tier) const;
};

struct ProbeOptions {
    std::size_t folds = 3;
    double l2_reg = 1e-3;
    std::uint64_t rng_seed = 0;
};

// Probes each tier's features on data (already preprocessed). Gains are taken
// against reference_L0_auc when given, else against this model's own L0 row.
UtilityReport hierarchical_utility_report(const ModelParams& model, const Dataset& data, const ProbeOptions& opts,
                                          const double* reference_L0_auc = nullptr);

struct AblationReport {
    UtilityReport full;
    UtilityReport ablated;      // dense path disabled; gains vs the full model's L0
    ModelParams ablated_model;
    double gap = 0.0;           // full AUC(L0+f1) - ablated AUC(f1+f2)
};

// Trains the sparse-only variant of cfg on train and probes both models on eval.
AblationReport ablation_report(const ModelParams& full_model, const Dataset& train, const Dataset& eval,
                               const TrainConfig& cfg, const ProbeOptions& opts);

struct MetricSummary {
    double mean = 0.0, sd = 0.0;
};

struct AugmentationReport {
    std::string method;
    MetricSummary auc, auprc, recall_at_spec, best_f1;
    double delta_prc_relative = 0.0;  // vs the baseline's mean AUPRC
    std::vector<double> run_auprc;
};

struct AugmentationOptions {
    std::size_t n_runs = 10;
    double subsample = 0.8;        // stratified fraction of real_train drawn per run
    double synthetic_ratio = 0.2;  // synthetic rows per run, relative to the run's real positives
    double l2_reg = 1e-2;
    double spec_target = 0.90;
    std::uint64_t rng_seed = 0;
};

struct AugmentationResult {
    AugmentationReport baseline, augmented;
    std::vector<double> run_delta_prc;  // augmented minus baseline AUPRC per run
};

// Each run draws a stratified real subsample and a synthetic draw from its own
// stream; the baseline for that run uses the same real rows alone.
AugmentationResult augmentation_experiment(const Dataset& real_train, const Dataset& test, const Dataset& synthetic,
                                           const AugmentationOptions& opts, const std::string& method = "steered");

MetricSummary summarize(const std::vector<double>& values);

nlohmann::json to_json(const ProbeReport& r);
nlohmann::json to_json(const UtilityReport& r);
nlohmann::json to_json(const AugmentationReport& r);

}  // namespace hhsae
