#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hhsae/data.hpp"
#include "hhsae/model.hpp"

namespace hhsae {

struct SemanticProfile {
    std::size_t neuron_id = 0;
    std::vector<std::pair<std::size_t, double>> top_atoms;              // by |weight|, descending
    std::vector<std::pair<std::string, double>> feature_attribution;    // by |score|, descending
};

// Reads weights only: column neuron_id of W_dec2, and the matching W_dec1
// columns projected to input features. top_n is clamped to the number of
// nonzero weights.
SemanticProfile semantic_profile(const ModelParams& model, std::size_t neuron_id, std::size_t top_n,
                                 const std::vector<std::string>& feature_names = {});

struct AffinityMatrix {
    Matrix A;  // d2 x d2, A(j,k) = fraction of cohort where both fire; diagonal = firing rate
    std::size_t cohort_size = 0;
};

AffinityMatrix affinity_from_codes(const Matrix& z2);
AffinityMatrix affinity_matrix(const ModelParams& model, const Dataset& cohort);

struct ConceptModule {
    std::size_t module_id = 0;
    std::vector<std::size_t> neuron_ids;  // ascending
    std::size_t size = 0;
    double avg_atom_count = 0.0;
    double entropy = 0.0;    // nats
    double intensity = 0.0;
    std::string functional_label;
};

struct ModuleDetection {
    std::vector<ConceptModule> modules;  // largest first
    double modularity = 0.0;
    std::string warning;
};

// Louvain-style greedy modularity maximization on A with self-loops removed.
// Neurons with a zero diagonal (never fire) are left out. Node visit order is
// drawn from the community stream of rng_seed.
ModuleDetection detect_modules(const AffinityMatrix& A, double resolution, std::uint64_t rng_seed);

// Newman modularity of a partition of the graph (self-loops removed).
double modularity(const Matrix& W, const std::vector<int>& community, double resolution = 1.0);

// Atom count = entries of a W_dec2 column with |w| > theta_atom * max|w|.
// Entropy is over those entries' normalized |w|. Intensity is the mean z2
// activation over cohort samples and module neurons.
ConceptModule module_metrics(const ConceptModule& module, const ModelParams& model, const Dataset& cohort,
                             double theta_atom = 0.05);
ConceptModule module_metrics(const ConceptModule& module, const ModelParams& model, const Matrix& cohort_z2,
                             double theta_atom = 0.05);

// Per-sample module with the largest summed activation; -1 if none fire.
std::vector<int> dominant_modules(const Matrix& z2, const std::vector<ConceptModule>& modules);

nlohmann::json to_json(const SemanticProfile& p);
nlohmann::json to_json(const ConceptModule& m);
ConceptModule module_from_json(const nlohmann::json& j);

}  // namespace hhsae
