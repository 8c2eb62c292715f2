#include <doctest.h>

#include <cmath>
#include <limits>

#include "hhsae/evaluation.hpp"
#include "support/oracles.hpp"

using namespace hhsae;

namespace {

// Random instance with both classes and plenty of ties.
void random_instance(Rng& rng, std::vector<double>& s, std::vector<int>& y) {
    const std::size_t n = 2 + rng.below(29);
    s.resize(n);
    y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(rng.below(8)) / 4.0;
        y[i] = rng.uniform() < 0.4;
    }
    y[0] = 1;
    y[1] = 0;
}

Dataset gaussian_dataset(std::size_t n, std::size_t d, std::uint64_t seed, double shift) {
    Rng rng(seed);
    Dataset out;
    out.X = Matrix(n, d);
    out.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.y[i] = i % 5 == 0;
        for (std::size_t f = 0; f < d; ++f) out.X(i, f) = rng.normal() + (out.y[i] && f == 0 ? shift : 0.0);
    }
    for (std::size_t f = 0; f < d; ++f) out.feature_names.push_back("x" + std::to_string(f));
    out.feature_kinds.assign(d, FeatureKind::Continuous);
    return out;
}

}  // namespace

TEST_CASE("metric examples") {
    const std::vector<int> y = {1, 1, 0, 0};
    const std::vector<double> perfect = {0.9, 0.8, 0.2, 0.1};
    const std::vector<double> flat = {0.5, 0.5, 0.5, 0.5};
    const std::vector<double> reversed = {0.1, 0.2, 0.8, 0.9};
    CHECK(auc(perfect, y) == 1.0);
    CHECK(auc(flat, y) == 0.5);
    CHECK(auprc(perfect, y) == 1.0);
    CHECK(auprc(flat, y) == 0.5);
    CHECK(auprc(std::vector<double>(10, 1.0), std::vector<int>{1, 0, 0, 0, 0, 0, 0, 0, 0, 0}) ==
          doctest::Approx(0.1));
    CHECK(recall_at_specificity(perfect, y) == 1.0);
    CHECK(recall_at_specificity(reversed, y) == 0.0);
    CHECK(best_f1(perfect, y) == 1.0);

    CHECK_THROWS_AS(auc(perfect, std::vector<int>{1, 1, 1, 1}), Error);
    CHECK_THROWS_AS(auprc(perfect, std::vector<int>{0, 0, 0, 0}), Error);
    CHECK_THROWS_AS(recall_at_specificity(perfect, std::vector<int>{0, 0, 0, 0}), Error);
    CHECK_THROWS_AS(auc(perfect, std::vector<int>{1, 0}), Error);
}

TEST_CASE("metrics agree with brute-force enumeration") {
    Rng rng(42);
    std::vector<double> s;
    std::vector<int> y;
    for (int trial = 0; trial < 300; ++trial) {
        random_instance(rng, s, y);
        REQUIRE(auc(s, y) == oracle::auc(s, y));
        REQUIRE(auprc(s, y) == doctest::Approx(oracle::auprc(s, y)).epsilon(1e-14));
        REQUIRE(recall_at_specificity(s, y, 0.9) == oracle::recall_at_specificity(s, y, 0.9));
        REQUIRE(recall_at_specificity(s, y, 0.5) == oracle::recall_at_specificity(s, y, 0.5));
        REQUIRE(best_f1(s, y) == doctest::Approx(oracle::best_f1(s, y)).epsilon(1e-14));
    }
}

TEST_CASE("auc is invariant under strictly monotone transforms") {
    Rng rng(3);
    std::vector<double> s;
    std::vector<int> y;
    for (int trial = 0; trial < 50; ++trial) {
        random_instance(rng, s, y);
        std::vector<double> t(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
        CHECK(auc(t, y) == auc(s, y));
    }
}

TEST_CASE("recall at specificity never undershoots the target") {
    Rng rng(5);
    std::vector<double> s;
    std::vector<int> y;
    for (int trial = 0; trial < 200; ++trial) {
        random_instance(rng, s, y);
        const double r = recall_at_specificity(s, y, 0.9);
        // Find the threshold that produced r and confirm its specificity.
        bool witnessed = false;
        auto ts = oracle::thresholds_desc(s);
        ts.push_back(std::numeric_limits<double>::infinity());
        for (double t : ts) {
            const auto c = oracle::confusion_at(s, y, t);
            const double spec = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
            const double rec = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
            if (spec >= 0.9 && rec == r) witnessed = true;
        }
        CHECK(witnessed);
    }
}

TEST_CASE("logistic probe: null, separable, monotone loss") {
    Dataset noise = gaussian_dataset(900, 4, 1, 0.0);
    Rng rng(8);
    for (auto& v : noise.y) v = rng.uniform() < 0.3;
    const auto null = fit_linear_probe(noise.X, noise.y, 1e-3, 3, 0);
    CHECK(std::abs(null.auc - 0.5) < 0.05);
    CHECK(null.fold_count == 3);
    CHECK(null.fold_aucs.size() == 3);

    Matrix x(40, 2);
    std::vector<int> y(40);
    for (std::size_t i = 0; i < 40; ++i) {
        y[i] = i % 2;
        x(i, 0) = (y[i] ? 1.0 : -1.0) + 0.01 * static_cast<double>(i);
        x(i, 1) = std::sin(static_cast<double>(i));
    }
    CHECK(fit_linear_probe(x, y, 1e-3, 3, 1).auc == 1.0);

    const Dataset d = gaussian_dataset(300, 3, 2, 1.5);
    const auto fit = fit_logistic(d.X, d.y, 1e-3);
    REQUIRE(fit.loss_history.size() >= 2);
    for (std::size_t i = 1; i < fit.loss_history.size(); ++i)
        CHECK(fit.loss_history[i] <= fit.loss_history[i - 1]);
    CHECK((fit.grad_norm < 1e-6 || fit.iterations == 5000));

    std::vector<int> single(40, 1);
    CHECK_THROWS_AS(fit_linear_probe(x, single, 1e-3, 3, 0), Error);
}

TEST_CASE("stratified folds are seeded and balanced") {
    std::vector<int> y(60, 0);
    for (std::size_t i = 0; i < 60; i += 4) y[i] = 1;
    const auto a = stratified_folds(y, 3, 9);
    CHECK(a == stratified_folds(y, 3, 9));
    CHECK_FALSE(a == stratified_folds(y, 3, 10));
    for (int f = 0; f < 3; ++f) {
        std::size_t pos = 0, all = 0;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (a[i] == f) {
                ++all;
                pos += y[i];
            }
        CHECK(all == 20);
        CHECK(pos == 5);
    }
}

TEST_CASE("untrained model probes near chance") {
    const Dataset d = gaussian_dataset(600, 6, 4, 0.0);
    Dataset shuffled = d;
    Rng rng(11);
    for (auto& v : shuffled.y) v = rng.uniform() < 0.25;
    ModelDims dims;
    dims.D = 6;
    dims.d_dense = 2;
    dims.d1 = 16;
    dims.k1 = 3;
    dims.d2 = 6;
    dims.k2 = 2;
    const auto rep = hierarchical_utility_report(init_model(dims, 1), shuffled, {});
    REQUIRE(rep.tiers.size() == 7);
    for (const auto& t : rep.tiers) CHECK_MESSAGE(std::abs(t.auc - 0.5) < 0.08, t.tier);
    CHECK(rep.at("L0").gain_vs_L0 == 0.0);
    CHECK(rep.denoising_delta == doctest::Approx(rep.at("f1_hat").auc - rep.at("f1").auc));
    CHECK_THROWS_AS(rep.at("nope"), Error);
}

TEST_CASE("augmentation: empty synthetic set reproduces the baseline") {
    const Dataset train = gaussian_dataset(400, 3, 5, 1.0);
    const Dataset test = gaussian_dataset(400, 3, 6, 1.0);
    Dataset empty = train.subset(std::vector<std::size_t>{});
    AugmentationOptions o;
    o.n_runs = 3;
    const auto r = augmentation_experiment(train, test, empty, o, "none");
    CHECK(r.augmented.run_auprc == r.baseline.run_auprc);
    CHECK(r.augmented.delta_prc_relative == 0.0);
    for (double d : r.run_delta_prc) CHECK(d == 0.0);
    CHECK(r.augmented.method == "none");

    Dataset wrong = gaussian_dataset(10, 4, 7, 0.0);
    CHECK_THROWS_AS(augmentation_experiment(train, test, wrong, o), Error);

    // Same inputs, same numbers.
    const Dataset copy = train.with_label(1);
    const auto a = augmentation_experiment(train, test, copy, o, "copy");
    const auto b = augmentation_experiment(train, test, copy, o, "copy");
    CHECK(a.augmented.run_auprc == b.augmented.run_auprc);
    CHECK(a.run_delta_prc.size() == 3);
}

TEST_CASE("summarize uses the sample standard deviation") {
    const auto m = summarize({1.0, 2.0, 3.0, 4.0});
    CHECK(m.mean == doctest::Approx(2.5));
    CHECK(m.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(summarize({7.0}).sd == 0.0);
}

TEST_CASE("ablation report is deterministic and trains without the dense path") {
    ManifoldConfig mc;
    mc.n = 600;
    mc.D = 12;
    mc.r = 3;
    mc.m = 20;
    mc.prevalence = 0.1;
    auto [raw, gt] = generate_synthetic_manifold(mc);
    const Dataset d = preprocess_apply(raw, preprocess_fit(raw, {0.0, 1.0}, {}));
    TrainConfig c;
    c.epochs = 2;
    c.batch_size = 32;
    c.dims.d_dense = 3;
    c.dims.d1 = 24;
    c.dims.k1 = 3;
    c.dims.d2 = 6;
    c.dims.k2 = 2;
    const auto full = train(d, c).params;
    const auto a = ablation_report(full, d, d, c, {});
    const auto b = ablation_report(full, d, d, c, {});
    CHECK_FALSE(a.ablated_model.dims.dense_enabled);
    CHECK(a.ablated_model == b.ablated_model);
    CHECK(a.gap == b.gap);
    CHECK(a.gap == doctest::Approx(a.full.at("L0+f1").auc - a.ablated.at("f1+f2").auc));
    CHECK(a.ablated.at("f1").gain_vs_L0 == doctest::Approx(a.ablated.at("f1").auc - a.full.at("L0").auc));
}
