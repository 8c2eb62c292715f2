#include <doctest.h>

#include <cmath>

#include "hhsae/numerics.hpp"

using namespace hhsae;

TEST_CASE("seeded_gaussian is a function of the seed") {
    CHECK(seeded_gaussian(7, 2, 2) == seeded_gaussian(7, 2, 2));
    CHECK_FALSE(seeded_gaussian(7, 2, 2) == seeded_gaussian(8, 2, 2));

    const Matrix big = seeded_gaussian(3, 1, 100000);
    double mean = 0.0, var = 0.0;
    for (double v : big.flat()) mean += v;
    mean /= 100000.0;
    for (double v : big.flat()) var += (v - mean) * (v - mean);
    var /= 99999.0;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("derived streams are independent of each other") {
    CHECK(derive_seed(5, stream::kInit) == derive_seed(5, stream::kInit));
    CHECK(derive_seed(5, stream::kInit) != derive_seed(5, stream::kBatching));
    CHECK(derive_seed(5, stream::kInit, 0) != derive_seed(5, stream::kInit, 1));
    CHECK(derive_seed(5, stream::kInit) != derive_seed(6, stream::kInit));

    Rng a(11, stream::kSynthesis), b(11, stream::kSynthesis);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("Rng draws stay in range") {
    Rng r(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        CHECK((u >= 0.0 && u < 1.0));
        const double v = r.uniform(-2.0, 3.0);
        CHECK((v >= -2.0 && v < 3.0));
        CHECK(r.below(7) < 7);
    }
    std::vector<int> v = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    r.shuffle(v);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("matrix products agree with explicit loops") {
    const Matrix a = seeded_gaussian(1, 3, 4), b = seeded_gaussian(2, 4, 5), c = seeded_gaussian(3, 5, 4);
    const Matrix ab = matmul(a, b);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
            CHECK(ab(i, j) == doctest::Approx(s).epsilon(1e-14));
        }
    CHECK(max_abs_diff(matmul_bt(a, c), matmul(a, transpose(c))) < 1e-14);
    CHECK_THROWS_AS(matmul(a, a), Error);

    const Matrix h = hconcat(a, a);
    CHECK(h.cols() == 8);
    CHECK(h(2, 5) == a(2, 1));
    const Matrix v = vconcat(a, a);
    CHECK(v.rows() == 6);
    CHECK(v(4, 3) == a(1, 3));
}

TEST_CASE("cosine and norms") {
    const std::vector<double> x = {3, 4}, y = {-3, -4}, z = {4, -3};
    CHECK(norm2(x) == doctest::Approx(5.0));
    CHECK(cosine(x, x) == doctest::Approx(1.0));
    CHECK(cosine(x, y) == doctest::Approx(-1.0));
    CHECK(cosine(x, z) == doctest::Approx(0.0));
}

TEST_CASE("adam_step examples") {
    AdamConfig cfg;
    cfg.weight_decay = 0.0;

    Matrix p(1, 1, 1.5);
    AdamState s = AdamState::like(p);
    adam_step(p, Matrix(1, 1, 0.0), s, cfg);
    CHECK(p(0, 0) == 1.5);
    CHECK(s.step == 1);

    cfg.lr = 0.1;
    Matrix q(1, 1, 1.0);
    AdamState t = AdamState::like(q);
    adam_step(q, Matrix(1, 1, 1.0), t, cfg);
    CHECK(q(0, 0) == doctest::Approx(0.9).epsilon(1e-6));

    cfg.weight_decay = 0.1;
    Matrix w(1, 1, 1.0);
    AdamState u = AdamState::like(w);
    adam_step(w, Matrix(1, 1, 0.0), u, cfg);
    CHECK(w(0, 0) == doctest::Approx(0.99).epsilon(1e-12));

    Matrix bad(1, 1, 0.0);
    AdamState sb = AdamState::like(bad);
    CHECK_THROWS_AS(adam_step(bad, Matrix(2, 1, 0.0), sb, cfg), Error);
}

TEST_CASE("finite differences") {
    const auto sq = [](const Matrix& x) {
        double s = 0.0;
        for (double v : x.flat()) s += v * v;
        return s;
    };
    const Matrix g = finite_difference_gradient(sq, Matrix(1, 2, std::vector<double>{1.0, 2.0}), 1e-5);
    CHECK(g(0, 0) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(g(0, 1) == doctest::Approx(4.0).epsilon(1e-8));

    const Matrix z = finite_difference_gradient([](const Matrix&) { return 3.0; }, Matrix(2, 2, 1.0), 1e-5);
    CHECK(z == Matrix(2, 2, 0.0));
}
