#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "hhsae/data.hpp"

using namespace hhsae;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("hhsae_test_data_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

Dataset tiny(std::vector<std::vector<double>> rows, std::vector<int> y) {
    Dataset d;
    d.X = Matrix(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) d.X(i, j) = rows[i][j];
    d.y = std::move(y);
    for (std::size_t j = 0; j < d.X.cols(); ++j) {
        d.feature_names.push_back("c" + std::to_string(j));
        d.feature_kinds.push_back(FeatureKind::Continuous);
    }
    return d;
}

}  // namespace

TEST_CASE("load_csv reads features and labels") {
    const auto dir = scratch_dir("csv");
    write_text(dir / "a.csv", "a,b,label\n1,2,0\n3.5,-1,1\n0,0,0\n");
    const Dataset d = load_csv(dir / "a.csv");
    CHECK(d.n() == 3);
    CHECK(d.d() == 2);
    CHECK(d.y == std::vector<int>{0, 1, 0});
    CHECK(d.X(1, 0) == 3.5);
    CHECK(d.feature_names == std::vector<std::string>{"a", "b"});

    write_text(dir / "bad.csv", "a,b,label\n1,2,2\n");
    CHECK_THROWS_AS(load_csv(dir / "bad.csv"), Error);
    write_text(dir / "ragged.csv", "a,b,label\n1,2\n");
    CHECK_THROWS_AS(load_csv(dir / "ragged.csv"), Error);
    write_text(dir / "nolabel.csv", "a,b\n1,2\n");
    CHECK_THROWS_AS(load_csv(dir / "nolabel.csv"), Error);
    CHECK_THROWS_AS(load_csv(dir / "missing.csv"), Error);
}

TEST_CASE("0/1 columns load as flags") {
    const auto dir = scratch_dir("flags");
    write_text(dir / "f.csv", "flag,x,label\n0,0.5,0\n1,2,1\n1,3,0\n");
    const Dataset d = load_csv(dir / "f.csv");
    CHECK(d.feature_kinds[0] == FeatureKind::Flag);
    CHECK(d.feature_kinds[1] == FeatureKind::Continuous);
}

TEST_CASE("csv write then load is exact") {
    const auto dir = scratch_dir("roundtrip");
    Dataset d = tiny({{0.1, 1.0 / 3.0}, {-2.5e-17, 12345.678901234567}, {1e300, -0.0}}, {1, 0, 0});
    write_csv(d, dir / "r.csv");
    const Dataset back = load_csv(dir / "r.csv");
    CHECK(back.X == d.X);
    CHECK(back.y == d.y);
    CHECK(back.feature_names == d.feature_names);
    for (double v : {0.1, 1.0 / 3.0, 6.02214076e23, -1e-300, 5e-324})
        CHECK(std::strtod(format_number(v).c_str(), nullptr) == v);
}

TEST_CASE("preprocess: log then standardize") {
    Dataset d = tiny({{0.0}, {std::exp(1.0) - 1.0}}, {0, 1});
    const auto s = preprocess_fit(d, {0.0, 1.0}, {"c0"});
    const Dataset t = preprocess_apply(d, s);
    // log1p maps the column to [0, 1]; standardization then gives -1 and 1.
    CHECK(s.features[0].mean == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(t.X(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(t.X(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(preprocess_fit(d, {0.0, 1.0}, {"nope"}), Error);
}

TEST_CASE("preprocess: constant feature keeps std 1") {
    Dataset d = tiny({{4.0, 1.0}, {4.0, 2.0}, {4.0, 3.0}}, {0, 1, 0});
    const auto s = preprocess_fit(d, {0.0, 1.0}, {});
    CHECK(s.features[0].zero_variance);
    CHECK(s.features[0].std == 1.0);
    CHECK_FALSE(s.features[1].zero_variance);
    const Dataset t = preprocess_apply(d, s);
    for (std::size_t i = 0; i < 3; ++i) CHECK(t.X(i, 0) == 0.0);
}

TEST_CASE("preprocess: quantile clipping") {
    Rng rng(9);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 1000; ++i) rows.push_back({rng.uniform()});
    Dataset d = tiny(rows, std::vector<int>(1000, 0));
    const auto s = preprocess_fit(d, {0.01, 0.99}, {});
    CHECK(std::abs(s.features[0].clip_lo - 0.01) < 0.02);
    CHECK(std::abs(s.features[0].clip_hi - 0.99) < 0.02);

    // A raw value above clip_hi lands on the transformed clip_hi.
    CHECK(s.forward(0, 5.0) == s.forward(0, s.features[0].clip_hi));
    CHECK(empirical_quantile({1.0, 2.0, 3.0, 4.0}, 0.5) == 2.5);
}

TEST_CASE("preprocess: fit-set moments and inverse round trip") {
    Rng rng(4);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 500; ++i) rows.push_back({rng.normal() * 3.0 + 1.0, std::exp(rng.normal()), rng.uniform()});
    Dataset d = tiny(rows, std::vector<int>(500, 0));
    const auto s = preprocess_fit(d, {0.0, 1.0}, {"c1"});
    const Dataset t = preprocess_apply(d, s);
    for (std::size_t j = 0; j < 3; ++j) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < 500; ++i) mean += t.X(i, j);
        mean /= 500.0;
        for (std::size_t i = 0; i < 500; ++i) var += (t.X(i, j) - mean) * (t.X(i, j) - mean);
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(std::sqrt(var / 500.0) - 1.0) < 1e-9);
    }
    CHECK(max_abs_diff(inverse_transform(t.X, s), d.X) < 1e-9);

    // Standardized zero maps back to the raw pre-image of the transformed mean.
    const Matrix zero(1, 3, 0.0);
    const Matrix raw = inverse_transform(zero, s);
    CHECK(raw(0, 0) == doctest::Approx(s.features[0].mean).epsilon(1e-12));
    CHECK(raw(0, 1) == doctest::Approx(std::expm1(s.features[1].mean)).epsilon(1e-12));
}

TEST_CASE("preprocess: inverse of a clipped value is the clip") {
    Dataset d = tiny({{0.0}, {1.0}, {2.0}, {3.0}, {100.0}}, {0, 0, 0, 0, 1});
    const auto s = preprocess_fit(d, {0.0, 0.75}, {});
    const Dataset t = preprocess_apply(d, s);
    const Matrix back = inverse_transform(t.X, s);
    CHECK(back(4, 0) == doctest::Approx(s.features[0].clip_hi).epsilon(1e-12));
    CHECK(back(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("preprocess stats serialize") {
    Dataset d = tiny({{1.0, 0.0}, {2.0, 5.0}, {7.0, 1.0}}, {0, 1, 0});
    const auto s = preprocess_fit(d, {0.0, 1.0}, {"c1"});
    const auto back = PreprocessStats::from_json(s.to_json());
    REQUIRE(back.features.size() == 2);
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(back.features[j].mean == s.features[j].mean);
        CHECK(back.features[j].std == s.features[j].std);
        CHECK(back.features[j].log == s.features[j].log);
    }
}

TEST_CASE("stratified_split keeps class shares") {
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    for (int i = 0; i < 100; ++i) {
        rows.push_back({static_cast<double>(i)});
        y.push_back(i % 10 == 0 ? 1 : 0);
    }
    const Dataset d = tiny(rows, y);
    const auto [a, b] = stratified_split(d, 0.5, 3);
    CHECK(a.positives() == 5);
    CHECK(b.positives() == 5);
    CHECK(a.n() + b.n() == 100);

    const auto [a2, b2] = stratified_split(d, 0.5, 3);
    CHECK(a2.X == a.X);
    const auto [a3, b3] = stratified_split(d, 0.5, 4);
    CHECK_FALSE(a3.X == a.X);
}

TEST_CASE("stratified_split at cohort scale") {
    const std::size_t n = 50530, pos = 531;  // 1.05% prevalence
    Dataset d;
    d.X = Matrix(n, 1);
    d.y.assign(n, 0);
    for (std::size_t i = 0; i < pos; ++i) d.y[i * 95] = 1;
    d.feature_names = {"v"};
    d.feature_kinds = {FeatureKind::Continuous};
    const auto [a, b] = stratified_split(d, 0.5, 0);
    const double expect = 0.5 * static_cast<double>(pos);
    CHECK(std::abs(static_cast<double>(a.positives()) - expect) <= 1.0);
    CHECK(std::abs(static_cast<double>(b.positives()) - expect) <= 1.0);
}

TEST_CASE("dataset validation") {
    Dataset d = tiny({{1.0}, {2.0}}, {0, 3});
    CHECK_THROWS_AS(d.validate(), Error);
    Dataset e = tiny({{1.0, 2.0}}, {0});
    e.feature_names[1] = e.feature_names[0];
    CHECK_THROWS_AS(e.validate(), Error);
}

TEST_CASE("planted manifold: context and atom components") {
    ManifoldConfig cfg;
    cfg.n = 2000;
    cfg.noise_std = 0.0;
    cfg.rng_seed = 5;
    const auto [d, gt] = generate_synthetic_manifold(cfg);
    CHECK(d.n() == 2000);
    CHECK(d.d() == 32);

    // Orthonormal context columns, unit atoms orthogonal to the context.
    const Matrix ctc = matmul(transpose(gt.context_basis), gt.context_basis);
    for (std::size_t i = 0; i < cfg.r; ++i)
        for (std::size_t j = 0; j < cfg.r; ++j) CHECK(std::abs(ctc(i, j) - (i == j ? 1.0 : 0.0)) < 1e-12);
    const Matrix cta = matmul(transpose(gt.context_basis), gt.atom_dictionary);
    for (double v : cta.flat()) CHECK(std::abs(v) < 1e-12);

    double worst_residual = 0.0, worst_corr = 1.0;
    for (std::size_t i = 0; i < d.n(); ++i) {
        // Complement projection: x - C C^T x.
        std::vector<double> proj(cfg.D, 0.0), atomic(cfg.D, 0.0);
        const auto x = d.X.row(i);
        for (std::size_t c = 0; c < cfg.r; ++c) {
            double coef = 0.0;
            for (std::size_t f = 0; f < cfg.D; ++f) coef += gt.context_basis(f, c) * x[f];
            for (std::size_t f = 0; f < cfg.D; ++f) proj[f] += coef * gt.context_basis(f, c);
        }
        for (const auto& [a, coef] : gt.sample_atoms[i])
            for (std::size_t f = 0; f < cfg.D; ++f) atomic[f] += coef * gt.atom_dictionary(f, a);
        for (std::size_t f = 0; f < cfg.D; ++f)
            worst_residual = std::max(worst_residual, std::abs(x[f] - proj[f] - atomic[f]));

        if (d.y[i] == 1) {
            std::vector<double> motif_sum(cfg.D, 0.0), innov(cfg.D);
            for (auto a : gt.motif_table[static_cast<std::size_t>(gt.motif_assignments[i])])
                for (std::size_t f = 0; f < cfg.D; ++f) motif_sum[f] += gt.atom_dictionary(f, a);
            for (std::size_t f = 0; f < cfg.D; ++f) innov[f] = x[f] - proj[f];
            worst_corr = std::min(worst_corr, cosine(innov, motif_sum));
        }
    }
    CHECK(worst_residual < 1e-9);
    CHECK(worst_corr > 0.99);
}

TEST_CASE("planted manifold: no atoms means pure context") {
    ManifoldConfig cfg;
    cfg.n = 200;
    cfg.noise_std = 0.0;
    cfg.background_atoms = 0;
    const auto [d, gt] = generate_synthetic_manifold(cfg);
    for (std::size_t i = 0; i < d.n(); ++i) {
        if (gt.motif_assignments[i] >= 0) continue;
        const auto x = d.X.row(i);
        double resid = 0.0;
        std::vector<double> proj(cfg.D, 0.0);
        for (std::size_t c = 0; c < cfg.r; ++c) {
            double coef = 0.0;
            for (std::size_t f = 0; f < cfg.D; ++f) coef += gt.context_basis(f, c) * x[f];
            for (std::size_t f = 0; f < cfg.D; ++f) proj[f] += coef * gt.context_basis(f, c);
        }
        for (std::size_t f = 0; f < cfg.D; ++f) resid = std::max(resid, std::abs(x[f] - proj[f]));
        CHECK(resid < 1e-9);
    }
}

TEST_CASE("planted manifold: prevalence, motifs, determinism") {
    ManifoldConfig cfg;
    cfg.prevalence = 0.01;
    cfg.rng_seed = 2;
    const auto [d, gt] = generate_synthetic_manifold(cfg);
    CHECK(std::abs(static_cast<double>(d.positives()) - 200.0) <= 20.0);
    CHECK(gt.motif_table.size() == cfg.n_motifs);
    for (const auto& m : gt.motif_table) CHECK(m.size() == cfg.atoms_per_motif);
    for (std::size_t k = 1; k < cfg.n_motifs; ++k) {
        std::size_t shared = 0;
        for (auto a : gt.motif_table[k])
            shared += std::count(gt.motif_table[0].begin(), gt.motif_table[0].end(), a);
        CHECK(shared == cfg.motif_overlap);
    }
    for (std::size_t i = 0; i < d.n(); ++i)
        CHECK(d.y[i] == (gt.positive_motif_ids.contains(gt.motif_assignments[i]) ? 1 : 0));

    const auto [d2, gt2] = generate_synthetic_manifold(cfg);
    CHECK(d2.X == d.X);
    cfg.rng_seed = 3;
    const auto [d3, gt3] = generate_synthetic_manifold(cfg);
    CHECK_FALSE(d3.X == d.X);
}

TEST_CASE("planted manifold: full-overlap decoys share motif 0's atoms") {
    ManifoldConfig cfg;
    cfg.n = 500;
    cfg.motif_overlap = cfg.atoms_per_motif;
    const auto [d, gt] = generate_synthetic_manifold(cfg);
    for (const auto& m : gt.motif_table) CHECK(m == gt.motif_table[0]);
}

TEST_CASE("planted manifold: config validation") {
    ManifoldConfig cfg;
    cfg.r = 40;
    CHECK_THROWS_AS(generate_synthetic_manifold(cfg), Error);
    cfg = {};
    cfg.motif_overlap = cfg.atoms_per_motif + 1;
    CHECK_THROWS_AS(generate_synthetic_manifold(cfg), Error);
    cfg = {};
    cfg.prevalence = 0.0;
    CHECK_THROWS_AS(generate_synthetic_manifold(cfg), Error);
    cfg = {};
    cfg.n_motifs = 40;
    CHECK_THROWS_AS(generate_synthetic_manifold(cfg), Error);
}

TEST_CASE("ground truth persists") {
    const auto dir = scratch_dir("gt");
    ManifoldConfig cfg;
    cfg.n = 300;
    const auto [d, gt] = generate_synthetic_manifold(cfg);
    gt.save(dir / "gt.json");
    const auto back = PlantedGroundTruth::load(dir / "gt.json");
    CHECK(back.context_basis == gt.context_basis);
    CHECK(back.atom_dictionary == gt.atom_dictionary);
    CHECK(back.motif_table == gt.motif_table);
    CHECK(back.motif_assignments == gt.motif_assignments);
    CHECK(back.positive_motif_ids == gt.positive_motif_ids);
    CHECK(back.context_codes == gt.context_codes);
}
