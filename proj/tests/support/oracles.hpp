#pragma once

// Brute-force and combinatorial reference implementations used by the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "hhsae/numerics.hpp"

namespace oracle {

// Maximum-weight one-to-one assignment of rows to columns (rows <= cols),
// Kuhn-Munkres with potentials on the negated weights. Returns the column
// assigned to each row.
inline std::vector<std::size_t> hungarian_max(const hhsae::Matrix& w) {
    const std::size_t n = w.rows(), m = w.cols();
    if (n > m) throw hhsae::Error("hungarian: more rows than columns");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = -w(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<std::size_t> out(n);
    for (std::size_t j = 1; j <= m; ++j)
        if (p[j]) out[p[j] - 1] = j - 1;
    return out;
}

// Adjusted Rand index between two labelings of the same items.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<int, int>, double> nij;
    std::map<int, double> ai, bj;
    for (std::size_t i = 0; i < a.size(); ++i) {
        nij[{a[i], b[i]}] += 1;
        ai[a[i]] += 1;
        bj[b[i]] += 1;
    }
    auto c2 = [](double x) { return x * (x - 1) / 2; };
    double sum_ij = 0, sum_a = 0, sum_b = 0;
    for (auto& [k, v] : nij) sum_ij += c2(v);
    for (auto& [k, v] : ai) sum_a += c2(v);
    for (auto& [k, v] : bj) sum_b += c2(v);
    const double expected = sum_a * sum_b / c2(static_cast<double>(a.size()));
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (sum_ij - expected) / (max_index - expected);
}

// --- metric oracles: enumerate pairs or thresholds directly -----------------------

inline double auc(const std::vector<double>& s, const std::vector<int>& y) {
    std::uint64_t twice = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < s.size(); ++i) (y[i] ? pos : neg)++;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] == 1 && y[j] == 0) twice += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
    return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

// Distinct scores, descending.
inline std::vector<double> thresholds_desc(std::vector<double> s) {
    std::sort(s.begin(), s.end(), std::greater<>());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion confusion_at(const std::vector<double>& s, const std::vector<int>& y, double t) {
    Confusion c;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const bool pred = s[i] >= t;
        if (pred && y[i]) ++c.tp;
        else if (pred) ++c.fp;
        else if (y[i]) ++c.fn;
        else ++c.tn;
    }
    return c;
}

inline double auprc(const std::vector<double>& s, const std::vector<int>& y) {
    std::size_t pos = 0;
    for (int v : y) pos += v;
    double ap = 0.0;
    std::size_t tp_prev = 0;
    for (double t : thresholds_desc(s)) {
        const auto c = confusion_at(s, y, t);
        const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
        ap += static_cast<double>(c.tp - tp_prev) / static_cast<double>(pos) * precision;
        tp_prev = c.tp;
    }
    return ap;
}

inline double recall_at_specificity(const std::vector<double>& s, const std::vector<int>& y, double target) {
    auto ts = thresholds_desc(s);
    std::reverse(ts.begin(), ts.end());
    ts.push_back(std::numeric_limits<double>::infinity());
    for (double t : ts) {
        const auto c = confusion_at(s, y, t);
        if (static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp) >= target)
            return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    }
    return 0.0;
}

inline double best_f1(const std::vector<double>& s, const std::vector<int>& y) {
    auto ts = thresholds_desc(s);
    ts.push_back(std::numeric_limits<double>::infinity());
    double best = 0.0;
    for (double t : ts) {
        const auto c = confusion_at(s, y, t);
        const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
        if (denom > 0) best = std::max(best, 2.0 * static_cast<double>(c.tp) / denom);
    }
    return best;
}

}  // namespace oracle
