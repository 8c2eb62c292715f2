#include "hhsae/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace hhsae {

using nlohmann::json;

SemanticProfile semantic_profile(const ModelParams& model, std::size_t neuron_id, std::size_t top_n,
                                 const std::vector<std::string>& feature_names) {
    const auto& W2 = model.comp.W_dec2;
    const auto& W1 = model.atoms.W_dec1;
    if (neuron_id >= W2.cols())
        throw Error("semantic_profile: neuron " + std::to_string(neuron_id) + " out of range (d2=" +
                    std::to_string(W2.cols()) + ")");
    SemanticProfile p;
    p.neuron_id = neuron_id;

    // Atoms with zero weight carry no profile and are left out.
    std::vector<std::size_t> atoms;
    for (std::size_t a = 0; a < W2.rows(); ++a)
        if (W2(a, neuron_id) != 0.0) atoms.push_back(a);
    std::stable_sort(atoms.begin(), atoms.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(W2(a, neuron_id)) > std::abs(W2(b, neuron_id));
    });
    atoms.resize(std::min(top_n, atoms.size()));
    for (auto a : atoms) p.top_atoms.emplace_back(a, W2(a, neuron_id));

    std::vector<double> score(W1.rows(), 0.0);
    for (const auto& [a, w] : p.top_atoms)
        for (std::size_t f = 0; f < W1.rows(); ++f) score[f] += w * W1(f, a);
    std::vector<std::size_t> feats(W1.rows());
    std::iota(feats.begin(), feats.end(), 0);
    std::stable_sort(feats.begin(), feats.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(score[a]) > std::abs(score[b]); });
    for (auto f : feats) {
        std::string name = f < feature_names.size() ? feature_names[f] : "feature_" + std::to_string(f);
        p.feature_attribution.emplace_back(std::move(name), score[f]);
    }
    return p;
}

AffinityMatrix affinity_from_codes(const Matrix& z2) {
    if (z2.rows() == 0) throw Error("affinity_matrix: empty cohort");
    const std::size_t d2 = z2.cols();
    std::vector<std::uint64_t> counts(d2 * d2, 0);
    std::vector<std::size_t> fired;
    for (std::size_t b = 0; b < z2.rows(); ++b) {
        fired.clear();
        auto r = z2.row(b);
        for (std::size_t j = 0; j < d2; ++j)
            if (r[j] != 0.0) fired.push_back(j);
        for (auto j : fired)
            for (auto k : fired) ++counts[j * d2 + k];
    }
    AffinityMatrix out{Matrix(d2, d2), z2.rows()};
    const double n = static_cast<double>(z2.rows());
    for (std::size_t i = 0; i < counts.size(); ++i) out.A[i] = static_cast<double>(counts[i]) / n;
    return out;
}

AffinityMatrix affinity_matrix(const ModelParams& model, const Dataset& cohort) {
    if (cohort.n() == 0) throw Error("affinity_matrix: empty cohort");
    return affinity_from_codes(full_forward(cohort.X, model).z2);
}

// --- community detection --------------------------------------------------------

double modularity(const Matrix& W, const std::vector<int>& community, double resolution) {
    const std::size_t n = W.rows();
    std::vector<double> k(n, 0.0);
    double m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) {
                k[i] += W(i, j);
                m2 += W(i, j);
            }
    if (m2 == 0.0) return 0.0;
    double q = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (community[i] >= 0 && community[i] == community[j])
                q += (i != j ? W(i, j) : 0.0) - resolution * k[i] * k[j] / m2;
    return q / m2;
}

namespace {

// One level of local moving on graph W (self-loops allowed: they encode
// weight already internal to an aggregated node). Returns the community of
// each node, relabelled 0..c-1, and whether any node moved.
std::pair<std::vector<std::size_t>, bool> local_moving(const Matrix& W, double resolution, Rng& rng) {
    const std::size_t n = W.rows();
    std::vector<double> k(n, 0.0);
    double m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) k[i] += W(i, j);
        m2 += k[i];
    }
    std::vector<std::size_t> comm(n);
    std::iota(comm.begin(), comm.end(), 0);
    std::vector<double> tot = k;
    bool moved_any = false;
    if (m2 == 0.0) return {comm, false};

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> link(n, 0.0);
    std::vector<std::size_t> touched;
    for (bool improved = true; improved;) {
        improved = false;
        rng.shuffle(order);
        for (auto i : order) {
            touched.clear();
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i || W(i, j) == 0.0) continue;
                if (link[comm[j]] == 0.0) touched.push_back(comm[j]);
                link[comm[j]] += W(i, j);
            }
            const std::size_t own = comm[i];
            tot[own] -= k[i];
            auto gain = [&](std::size_t c) { return link[c] - resolution * tot[c] * k[i] / m2; };
            std::size_t best = own;
            double best_gain = gain(own);
            std::sort(touched.begin(), touched.end());
            for (auto c : touched) {
                const double g = gain(c);
                if (g > best_gain + 1e-14) {
                    best = c;
                    best_gain = g;
                }
            }
            tot[best] += k[i];
            if (best != own) {
                comm[i] = best;
                improved = moved_any = true;
            }
            for (auto c : touched) link[c] = 0.0;
            link[own] = 0.0;
        }
    }
    std::map<std::size_t, std::size_t> relabel;
    for (auto& c : comm) {
        auto [it, inserted] = relabel.emplace(c, relabel.size());
        c = it->second;
    }
    return {comm, moved_any};
}

}  // namespace

ModuleDetection detect_modules(const AffinityMatrix& aff, double resolution, std::uint64_t rng_seed) {
    const Matrix& A = aff.A;
    if (A.rows() != A.cols()) throw Error("detect_modules: affinity matrix must be square");
    if (!(resolution > 0.0)) throw Error("detect_modules: resolution must be positive");
    ModuleDetection out;

    std::vector<std::size_t> live;
    for (std::size_t j = 0; j < A.rows(); ++j)
        if (A(j, j) > 0.0) live.push_back(j);
    if (live.empty()) {
        out.warning = "affinity matrix is all zero: no live neurons, no modules";
        return out;
    }

    const std::size_t n = live.size();
    Matrix W(n, n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
            if (a != b) W(a, b) = A(live[a], live[b]);

    Rng rng(rng_seed, stream::kCommunity);
    std::vector<std::size_t> membership(n);
    std::iota(membership.begin(), membership.end(), 0);
    Matrix G = W;
    while (true) {
        auto [comm, moved] = local_moving(G, resolution, rng);
        if (!moved) break;
        const std::size_t c = *std::max_element(comm.begin(), comm.end()) + 1;
        for (auto& m : membership) m = comm[m];
        Matrix agg(c, c);
        for (std::size_t i = 0; i < G.rows(); ++i)
            for (std::size_t j = 0; j < G.cols(); ++j) agg(comm[i], comm[j]) += G(i, j);
        G = std::move(agg);
        if (c == 1) break;
    }

    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t a = 0; a < n; ++a) groups[membership[a]].push_back(live[a]);
    for (auto& [c, members] : groups) {
        ConceptModule m;
        m.neuron_ids = std::move(members);
        m.size = m.neuron_ids.size();
        out.modules.push_back(std::move(m));
    }
    std::stable_sort(out.modules.begin(), out.modules.end(), [](const auto& a, const auto& b) {
        return a.size > b.size || (a.size == b.size && a.neuron_ids.front() < b.neuron_ids.front());
    });
    for (std::size_t i = 0; i < out.modules.size(); ++i) out.modules[i].module_id = i;

    std::vector<int> labels(n, -1);
    for (const auto& m : out.modules)
        for (auto id : m.neuron_ids)
            labels[static_cast<std::size_t>(std::find(live.begin(), live.end(), id) - live.begin())] =
                static_cast<int>(m.module_id);
    out.modularity = modularity(W, labels, resolution);
    return out;
}

// --- taxonomy metrics -------------------------------------------------------------

ConceptModule module_metrics(const ConceptModule& module, const ModelParams& model, const Matrix& z2,
                             double theta_atom) {
    if (module.neuron_ids.empty()) throw Error("module_metrics: empty module");
    if (z2.rows() == 0) throw Error("module_metrics: empty cohort");
    const auto& W2 = model.comp.W_dec2;
    ConceptModule out = module;
    out.size = module.neuron_ids.size();

    double atom_sum = 0.0, entropy_sum = 0.0, intensity_sum = 0.0;
    for (auto j : module.neuron_ids) {
        if (j >= W2.cols()) throw Error("module_metrics: neuron id out of range");
        double wmax = 0.0;
        for (std::size_t a = 0; a < W2.rows(); ++a) wmax = std::max(wmax, std::abs(W2(a, j)));
        std::vector<double> kept;
        if (wmax > 0.0)
            for (std::size_t a = 0; a < W2.rows(); ++a)
                if (std::abs(W2(a, j)) > theta_atom * wmax) kept.push_back(std::abs(W2(a, j)));
        atom_sum += static_cast<double>(kept.size());
        const double total = std::accumulate(kept.begin(), kept.end(), 0.0);
        double h = 0.0;
        for (double w : kept) {
            const double p = w / total;
            if (p > 0.0) h -= p * std::log(p);
        }
        entropy_sum += h;
        for (std::size_t b = 0; b < z2.rows(); ++b) intensity_sum += z2(b, j);
    }
    const double k = static_cast<double>(module.neuron_ids.size());
    out.avg_atom_count = atom_sum / k;
    out.entropy = entropy_sum / k;
    out.intensity = intensity_sum / (k * static_cast<double>(z2.rows()));
    return out;
}

ConceptModule module_metrics(const ConceptModule& module, const ModelParams& model, const Dataset& cohort,
                             double theta_atom) {
    if (cohort.n() == 0) throw Error("module_metrics: empty cohort");
    return module_metrics(module, model, full_forward(cohort.X, model).z2, theta_atom);
}

std::vector<int> dominant_modules(const Matrix& z2, const std::vector<ConceptModule>& modules) {
    std::vector<int> out(z2.rows(), -1);
    for (std::size_t b = 0; b < z2.rows(); ++b) {
        double best = 0.0;
        for (const auto& m : modules) {
            double s = 0.0;
            for (auto j : m.neuron_ids) s += z2(b, j);
            if (s > best) {
                best = s;
                out[b] = static_cast<int>(m.module_id);
            }
        }
    }
    return out;
}

json to_json(const SemanticProfile& p) {
    json atoms = json::array(), feats = json::array();
    for (const auto& [a, w] : p.top_atoms) atoms.push_back({{"atom", a}, {"weight", w}});
    for (const auto& [f, s] : p.feature_attribution) feats.push_back({{"feature", f}, {"score", s}});
    return {{"neuron_id", p.neuron_id}, {"top_atoms", atoms}, {"feature_attribution", feats}};
}

json to_json(const ConceptModule& m) {
    return {{"module_id", m.module_id},     {"neuron_ids", m.neuron_ids},
            {"size", m.size},               {"avg_atom_count", m.avg_atom_count},
            {"entropy", m.entropy},         {"intensity", m.intensity},
            {"functional_label", m.functional_label}};
}

ConceptModule module_from_json(const json& j) {
    ConceptModule m;
    m.module_id = j.at("module_id").get<std::size_t>();
    m.neuron_ids = j.at("neuron_ids").get<std::vector<std::size_t>>();
    m.size = j.value("size", m.neuron_ids.size());
    m.avg_atom_count = j.value("avg_atom_count", 0.0);
    m.entropy = j.value("entropy", 0.0);
    m.intensity = j.value("intensity", 0.0);
    m.functional_label = j.value("functional_label", std::string());
    return m;
}

}  // namespace hhsae
