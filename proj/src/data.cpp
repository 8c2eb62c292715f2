#include "hhsae/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "hhsae/tensor_io.hpp"

namespace hhsae {

using nlohmann::json;

// --- Dataset ------------------------------------------------------------------

std::size_t Dataset::positives() const {
    return static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
}

void Dataset::validate() const {
    if (y.size() != X.rows()) throw Error("dataset: label count does not match row count");
    if (feature_names.size() != X.cols()) throw Error("dataset: feature name count does not match D");
    if (feature_kinds.size() != X.cols()) throw Error("dataset: feature kind count does not match D");
    for (int v : y)
        if (v != 0 && v != 1) throw Error("dataset: labels must be 0 or 1");
    std::unordered_set<std::string> seen;
    for (const auto& n : feature_names)
        if (!seen.insert(n).second) throw Error("dataset: duplicate feature name '" + n + "'");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out{select_rows(X, rows), {}, feature_names, feature_kinds};
    out.y.reserve(rows.size());
    for (auto r : rows) out.y.push_back(y[r]);
    return out;
}

Dataset Dataset::with_label(int label) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] == label) idx.push_back(i);
    return subset(idx);
}

Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.n() == 0) return b;
    if (b.n() == 0) return a;
    if (a.feature_names != b.feature_names) throw Error("concat: schema mismatch");
    Dataset out{vconcat(a.X, b.X), a.y, a.feature_names, a.feature_kinds};
    out.y.insert(out.y.end(), b.y.begin(), b.y.end());
    return out;
}

// --- CSV ----------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            out.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell.push_back(c);
        }
    }
    out.push_back(cell);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& raw, std::size_t line_no, const std::string& column) {
    const std::string s = trim(raw);
    double v = 0.0;
    const char* first = s.data();
    if (!s.empty() && s[0] == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw Error("csv line " + std::to_string(line_no) + ": non-numeric value '" + s +
                    "' in column '" + column + "'");
    return v;
}

}  // namespace

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw Error("csv: cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw Error("csv: empty file " + path.string());
    auto header = split_csv_line(line);
    for (auto& h : header) h = trim(h);

    const auto label_it = std::find(header.begin(), header.end(), label_column);
    if (label_it == header.end()) throw Error("csv: label column '" + label_column + "' not found");
    const auto label_idx = static_cast<std::size_t>(label_it - header.begin());

    Dataset d;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (c != label_idx) d.feature_names.push_back(header[c]);
    const std::size_t D = d.feature_names.size();

    std::vector<double> values;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw Error("csv line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const double v = parse_number(cells[c], line_no, header[c]);
            if (c == label_idx) {
                if (v != 0.0 && v != 1.0)
                    throw Error("csv line " + std::to_string(line_no) + ": label must be 0 or 1, got '" +
                                trim(cells[c]) + "'");
                d.y.push_back(static_cast<int>(v));
            } else {
                values.push_back(v);
            }
        }
    }
    if (d.y.empty()) throw Error("csv: no data rows in " + path.string());

    d.X = Matrix(d.y.size(), D, std::move(values));
    d.feature_kinds.assign(D, FeatureKind::Flag);
    for (std::size_t i = 0; i < d.n(); ++i)
        for (std::size_t j = 0; j < D; ++j)
            if (d.X(i, j) != 0.0 && d.X(i, j) != 1.0) d.feature_kinds[j] = FeatureKind::Continuous;
    d.validate();
    return d;
}

void write_csv(const Dataset& d, const std::filesystem::path& path, const std::string& label_column) {
    std::ostringstream out;
    for (const auto& n : d.feature_names) out << n << ',';
    out << label_column << '\n';
    for (std::size_t i = 0; i < d.n(); ++i) {
        for (std::size_t j = 0; j < d.d(); ++j) out << format_number(d.X(i, j)) << ',';
        out << d.y[i] << '\n';
    }
    write_file(path, out.str());
}

// --- preprocessing ------------------------------------------------------------

std::string PreprocessStats::to_json() const {
    json arr = json::array();
    for (const auto& f : features) {
        arr.push_back({{"name", f.name},
                       {"kind", f.kind == FeatureKind::Flag ? "flag" : "continuous"},
                       {"clip_lo", f.clip_lo},
                       {"clip_hi", f.clip_hi},
                       {"log", f.log},
                       {"mean", f.mean},
                       {"std", f.std},
                       {"zero_variance", f.zero_variance}});
    }
    return json{{"features", arr}}.dump(2);
}

PreprocessStats PreprocessStats::from_json(const std::string& text) {
    PreprocessStats s;
    try {
        const auto doc = json::parse(text);
        for (const auto& f : doc.at("features")) {
            FeatureStats fs;
            fs.name = f.at("name").get<std::string>();
            fs.kind = f.value("kind", std::string("continuous")) == "flag" ? FeatureKind::Flag
                                                                          : FeatureKind::Continuous;
            fs.clip_lo = f.at("clip_lo").get<double>();
            fs.clip_hi = f.at("clip_hi").get<double>();
            fs.log = f.at("log").get<bool>();
            fs.mean = f.at("mean").get<double>();
            fs.std = f.at("std").get<double>();
            fs.zero_variance = f.value("zero_variance", false);
            s.features.push_back(std::move(fs));
        }
    } catch (const json::exception& e) {
        throw Error(std::string("preprocess stats: malformed JSON: ") + e.what());
    }
    return s;
}

void PreprocessStats::save(const std::filesystem::path& path) const { write_file(path, to_json()); }

PreprocessStats PreprocessStats::load(const std::filesystem::path& path) {
    return from_json(read_file(path));
}

double PreprocessStats::forward(std::size_t j, double raw) const {
    const auto& f = features[j];
    double v = std::clamp(raw, f.clip_lo, f.clip_hi);
    if (f.log) v = std::log1p(v);
    return (v - f.mean) / f.std;
}

double PreprocessStats::inverse(std::size_t j, double t) const {
    const auto& f = features[j];
    double v = t * f.std + f.mean;
    if (f.log) v = std::expm1(v);
    return std::clamp(v, f.clip_lo, f.clip_hi);
}

double empirical_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw Error("empirical_quantile: no values");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

PreprocessStats preprocess_fit(const Dataset& d, ClipQuantiles clip,
                               const std::set<std::string>& log_features) {
    if (!(clip.lo >= 0.0 && clip.lo < clip.hi && clip.hi <= 1.0))
        throw Error("preprocess_fit: clip quantiles must satisfy 0 <= lo < hi <= 1");
    if (d.n() == 0) throw Error("preprocess_fit: empty dataset");
    for (const auto& name : log_features)
        if (std::find(d.feature_names.begin(), d.feature_names.end(), name) == d.feature_names.end())
            throw Error("preprocess_fit: unknown log feature '" + name + "'");

    PreprocessStats s;
    const double n = static_cast<double>(d.n());
    for (std::size_t j = 0; j < d.d(); ++j) {
        FeatureStats f;
        f.name = d.feature_names[j];
        f.kind = d.feature_kinds[j];
        const auto column = d.X.col(j);
        if (f.kind == FeatureKind::Flag) {
            f.clip_lo = 0.0;
            f.clip_hi = 1.0;
        } else {
            f.clip_lo = empirical_quantile(column, clip.lo);
            f.clip_hi = empirical_quantile(column, clip.hi);
        }
        f.log = log_features.contains(f.name);
        if (f.log && f.clip_lo < 0.0)
            throw Error("preprocess_fit: feature '" + f.name +
                        "' has negative values entering the log transform");

        std::vector<double> t(column.size());
        for (std::size_t i = 0; i < column.size(); ++i) {
            double v = std::clamp(column[i], f.clip_lo, f.clip_hi);
            t[i] = f.log ? std::log1p(v) : v;
        }
        f.mean = std::accumulate(t.begin(), t.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : t) ss += (v - f.mean) * (v - f.mean);
        f.std = std::sqrt(ss / n);
        if (!(f.std > 1e-12)) {
            f.std = 1.0;
            f.zero_variance = true;
        }
        s.features.push_back(std::move(f));
    }
    return s;
}

Dataset preprocess_apply(const Dataset& d, const PreprocessStats& s) {
    if (d.d() != s.features.size()) throw Error("preprocess_apply: feature count mismatch");
    for (std::size_t j = 0; j < d.d(); ++j)
        if (d.feature_names[j] != s.features[j].name)
            throw Error("preprocess_apply: feature '" + d.feature_names[j] +
                        "' does not match fitted feature '" + s.features[j].name + "'");
    Dataset out = d;
    for (std::size_t i = 0; i < d.n(); ++i)
        for (std::size_t j = 0; j < d.d(); ++j) out.X(i, j) = s.forward(j, d.X(i, j));
    return out;
}

Matrix inverse_transform(const Matrix& x, const PreprocessStats& s) {
    if (x.cols() != s.features.size()) throw Error("inverse_transform: feature count mismatch");
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = s.inverse(j, x(i, j));
    return out;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& d, double fraction, std::uint64_t rng_seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw Error("stratified_split: fraction must be in (0, 1)");
    Rng rng(rng_seed, stream::kSplit);
    std::vector<std::size_t> first, second;
    for (int label : {0, 1}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < d.n(); ++i)
            if (d.y[i] == label) idx.push_back(i);
        if (idx.size() < 2)
            throw Error("stratified_split: class " + std::to_string(label) + " has fewer than 2 members");
        rng.shuffle(idx);
        const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        first.insert(first.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
        second.insert(second.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
    }
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    return {d.subset(first), d.subset(second)};
}

// --- planted manifold -----------------------------------------------------------

void ManifoldConfig::validate() const {
    if (!(r < D && D < m)) throw Error("manifold: require r < D < m");
    if (atoms_per_motif < 2) throw Error("manifold: atoms_per_motif must be >= 2");
    if (!(prevalence > 0.0 && prevalence < 0.5)) throw Error("manifold: prevalence must be in (0, 0.5)");
    if (n_motifs == 0 || n_positive_motifs == 0 || n_positive_motifs > n_motifs)
        throw Error("manifold: need 1 <= n_positive_motifs <= n_motifs");
    if (motif_overlap > atoms_per_motif) throw Error("manifold: motif_overlap exceeds atoms_per_motif");
    const std::size_t distinct =
        atoms_per_motif + (n_motifs - 1) * (atoms_per_motif - motif_overlap);
    if (distinct > m) throw Error("manifold: motifs need more atoms than m");
    if (background_atoms > m) throw Error("manifold: background_atoms exceeds m");
    const double decoys = decoy_rate * static_cast<double>(n_motifs - n_positive_motifs);
    if (decoy_rate < 0.0 || prevalence + decoys >= 1.0) throw Error("manifold: motif rates exceed 1");
    if (n == 0) throw Error("manifold: n must be positive");
    if (!(coef_lo > 0.0 && coef_lo <= coef_hi)) throw Error("manifold: bad coefficient range");
}

namespace {

// Gram-Schmidt on a Gaussian draw; re-orthogonalized twice for stability.
Matrix random_orthonormal(Rng& rng, std::size_t D, std::size_t r) {
    Matrix q(D, r);
    for (std::size_t c = 0; c < r; ++c) {
        std::vector<double> v(D);
        for (auto& x : v) x = rng.normal();
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t p = 0; p < c; ++p) {
                double proj = 0.0;
                for (std::size_t i = 0; i < D; ++i) proj += q(i, p) * v[i];
                for (std::size_t i = 0; i < D; ++i) v[i] -= proj * q(i, p);
            }
        }
        const double nv = norm2(v);
        for (std::size_t i = 0; i < D; ++i) q(i, c) = v[i] / nv;
    }
    return q;
}

}  // namespace

std::pair<Dataset, PlantedGroundTruth> generate_synthetic_manifold(const ManifoldConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.rng_seed, stream::kManifold);
    const std::size_t D = cfg.D, r = cfg.r, m = cfg.m;

    PlantedGroundTruth gt;
    gt.context_basis = random_orthonormal(rng, D, r);

    // Atoms live in the orthogonal complement of the context span.
    gt.atom_dictionary = Matrix(D, m);
    for (std::size_t a = 0; a < m; ++a) {
        std::vector<double> v(D);
        for (auto& x : v) x = rng.normal();
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t c = 0; c < r; ++c) {
                double proj = 0.0;
                for (std::size_t i = 0; i < D; ++i) proj += gt.context_basis(i, c) * v[i];
                for (std::size_t i = 0; i < D; ++i) v[i] -= proj * gt.context_basis(i, c);
            }
        }
        const double nv = norm2(v);
        for (std::size_t i = 0; i < D; ++i) gt.atom_dictionary(i, a) = v[i] / nv;
    }

    // Motif 0 owns its atoms; every other motif reuses motif_overlap of them.
    std::vector<std::size_t> atom_order(m);
    std::iota(atom_order.begin(), atom_order.end(), 0);
    rng.shuffle(atom_order);
    std::size_t next_atom = 0;
    for (std::size_t k = 0; k < cfg.n_motifs; ++k) {
        std::vector<std::size_t> atoms;
        if (k > 0)
            for (std::size_t s = 0; s < cfg.motif_overlap; ++s) atoms.push_back(gt.motif_table[0][s]);
        while (atoms.size() < cfg.atoms_per_motif) atoms.push_back(atom_order[next_atom++]);
        std::sort(atoms.begin(), atoms.end());
        gt.motif_table.push_back(std::move(atoms));
    }
    for (std::size_t k = 0; k < cfg.n_positive_motifs; ++k) gt.positive_motif_ids.insert(static_cast<int>(k));

    // Exact motif counts, placed on a random permutation of sample slots.
    std::vector<int> assignment(cfg.n, -1);
    {
        std::vector<std::size_t> slots(cfg.n);
        std::iota(slots.begin(), slots.end(), 0);
        rng.shuffle(slots);
        const auto n_d = static_cast<double>(cfg.n);
        const auto n_pos = static_cast<std::size_t>(std::llround(cfg.prevalence * n_d));
        const auto n_decoy = static_cast<std::size_t>(std::llround(cfg.decoy_rate * n_d));
        std::size_t cursor = 0;
        for (std::size_t k = 0; k < cfg.n_motifs; ++k) {
            const bool positive = k < cfg.n_positive_motifs;
            std::size_t count = positive ? n_pos / cfg.n_positive_motifs +
                                               (k < n_pos % cfg.n_positive_motifs ? 1 : 0)
                                         : n_decoy;
            for (std::size_t c = 0; c < count && cursor < cfg.n; ++c) assignment[slots[cursor++]] = static_cast<int>(k);
        }
    }
    gt.motif_assignments = assignment;

    Dataset d;
    d.X = Matrix(cfg.n, D);
    d.y.assign(cfg.n, 0);
    gt.sample_atoms.resize(cfg.n);
    gt.context_codes = Matrix(cfg.n, r);
    for (std::size_t c = 0; c < D; ++c) {
        d.feature_names.push_back((c < 10 ? "f0" : "f") + std::to_string(c));
    }
    d.feature_kinds.assign(D, FeatureKind::Continuous);

    for (std::size_t i = 0; i < cfg.n; ++i) {
        const int motif = assignment[i];
        const bool positive = motif >= 0 && gt.positive_motif_ids.contains(motif);
        d.y[i] = positive ? 1 : 0;

        auto u = gt.context_codes.row(i);
        for (std::size_t c = 0; c < r; ++c) u[c] = cfg.context_scale * rng.normal();
        if (positive) u[0] += cfg.context_scale * cfg.positive_context_shift;

        auto& active = gt.sample_atoms[i];
        if (motif >= 0) {
            const double amplitude = rng.uniform(cfg.coef_lo, cfg.coef_hi);
            for (auto a : gt.motif_table[static_cast<std::size_t>(motif)])
                active.emplace_back(a, amplitude * rng.uniform(1.0 - cfg.coef_jitter, 1.0 + cfg.coef_jitter));
        } else {
            std::vector<std::size_t> chosen;
            while (chosen.size() < cfg.background_atoms) {
                const auto a = rng.below(m);
                if (std::find(chosen.begin(), chosen.end(), a) == chosen.end()) chosen.push_back(a);
            }
            for (auto a : chosen) active.emplace_back(a, rng.uniform(cfg.coef_lo, cfg.coef_hi));
        }

        auto x = d.X.row(i);
        for (std::size_t f = 0; f < D; ++f) {
            double v = 0.0;
            for (std::size_t c = 0; c < r; ++c) v += gt.context_basis(f, c) * u[c];
            for (const auto& [a, coef] : active) v += coef * gt.atom_dictionary(f, a);
            x[f] = v;
        }
        if (cfg.noise_std > 0.0)
            for (std::size_t f = 0; f < D; ++f) x[f] += cfg.noise_std * rng.normal();
    }
    d.validate();
    return {std::move(d), std::move(gt)};
}

void PlantedGroundTruth::save(const std::filesystem::path& json_path) const {
    json doc;
    doc["motif_table"] = motif_table;
    doc["motif_assignments"] = motif_assignments;
    doc["positive_motif_ids"] = positive_motif_ids;
    json atoms = json::array();
    for (const auto& s : sample_atoms) {
        json row = json::array();
        for (const auto& [a, c] : s) row.push_back({a, c});
        atoms.push_back(row);
    }
    doc["sample_atoms"] = atoms;
    const auto sidecar = json_path.string() + ".bin";
    doc["tensor_sidecar"] = std::filesystem::path(sidecar).filename().string();
    write_file(json_path, doc.dump());
    write_tensor_file(sidecar, json{{"kind", "planted_ground_truth"}},
                      {{"context_basis", context_basis},
                       {"atom_dictionary", atom_dictionary},
                       {"context_codes", context_codes}});
}

PlantedGroundTruth PlantedGroundTruth::load(const std::filesystem::path& json_path) {
    PlantedGroundTruth gt;
    const auto doc = json::parse(read_file(json_path));
    gt.motif_table = doc.at("motif_table").get<std::vector<std::vector<std::size_t>>>();
    gt.motif_assignments = doc.at("motif_assignments").get<std::vector<int>>();
    gt.positive_motif_ids = doc.at("positive_motif_ids").get<std::set<int>>();
    for (const auto& row : doc.at("sample_atoms")) {
        std::vector<std::pair<std::size_t, double>> s;
        for (const auto& e : row) s.emplace_back(e[0].get<std::size_t>(), e[1].get<double>());
        gt.sample_atoms.push_back(std::move(s));
    }
    const auto tf = read_tensor_file(json_path.parent_path() / doc.at("tensor_sidecar").get<std::string>());
    gt.context_basis = tf.get("context_basis");
    gt.atom_dictionary = tf.get("atom_dictionary");
    gt.context_codes = tf.get("context_codes");
    return gt;
}

}  // namespace hhsae
