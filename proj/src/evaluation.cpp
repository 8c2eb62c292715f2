#include "hhsae/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hhsae {

using nlohmann::json;

namespace {

struct ClassCounts {
    std::size_t pos = 0, neg = 0;
};

ClassCounts count_classes(const std::vector<double>& scores, const std::vector<int>& labels, const char* who) {
    if (scores.size() != labels.size())
        throw Error(std::string(who) + ": scores and labels differ in length");
    ClassCounts c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw Error(std::string(who) + ": labels must be 0/1");
        if (!std::isfinite(scores[i])) throw Error(std::string(who) + ": non-finite score");
        (labels[i] ? c.pos : c.neg)++;
    }
    return c;
}

// Tie groups in descending score order: (positives, negatives) per group.
std::vector<ClassCounts> groups_descending(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<ClassCounts> groups;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (i == 0 || scores[idx[i]] != scores[idx[i - 1]]) groups.emplace_back();
        (labels[idx[i]] ? groups.back().pos : groups.back().neg)++;
    }
    return groups;
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    const auto c = count_classes(scores, labels, "auc");
    if (c.pos == 0 || c.neg == 0) throw Error("auc: both classes must be present");
    auto groups = groups_descending(scores, labels);
    // Twice the Mann-Whitney count, kept integral.
    std::uint64_t twice = 0, neg_below = c.neg;
    for (const auto& g : groups) {
        neg_below -= g.neg;
        twice += g.pos * (2 * neg_below + g.neg);
    }
    return static_cast<double>(twice) / (2.0 * static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    const auto c = count_classes(scores, labels, "auprc");
    if (c.pos == 0) throw Error("auprc: no positive labels");
    double ap = 0.0;
    std::size_t tp = 0, fp = 0;
    for (const auto& g : groups_descending(scores, labels)) {
        const std::size_t tp_prev = tp;
        tp += g.pos;
        fp += g.neg;
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += static_cast<double>(tp - tp_prev) / static_cast<double>(c.pos) * precision;
    }
    return ap;
}

double recall_at_specificity(const std::vector<double>& scores, const std::vector<int>& labels, double spec_target) {
    const auto c = count_classes(scores, labels, "recall_at_specificity");
    if (c.pos == 0 || c.neg == 0) throw Error("recall_at_specificity: both classes must be present");
    auto groups = groups_descending(scores, labels);
    std::reverse(groups.begin(), groups.end());
    // Ascending thresholds: at group g everything below it is predicted negative.
    std::size_t neg_below = 0, pos_below = 0;
    for (const auto& g : groups) {
        if (static_cast<double>(neg_below) / static_cast<double>(c.neg) >= spec_target)
            return static_cast<double>(c.pos - pos_below) / static_cast<double>(c.pos);
        neg_below += g.neg;
        pos_below += g.pos;
    }
    return 0.0;  // threshold +inf
}

double best_f1(const std::vector<double>& scores, const std::vector<int>& labels) {
    const auto c = count_classes(scores, labels, "best_f1");
    if (c.pos == 0) throw Error("best_f1: no positive labels");
    double best = 0.0;  // threshold +inf
    std::size_t tp = 0, fp = 0;
    for (const auto& g : groups_descending(scores, labels)) {
        tp += g.pos;
        fp += g.neg;
        best = std::max(best, 2.0 * static_cast<double>(tp) / static_cast<double>(tp + fp + c.pos));
    }
    return best;
}

// --- logistic probe -------------------------------------------------------------

namespace {

// Row-sparse copy: most probe blocks are top-k codes.
struct Csr {
    std::size_t rows = 0, cols = 0;
    std::vector<std::size_t> start, col;
    std::vector<double> val;

    explicit Csr(const Matrix& x) : rows(x.rows()), cols(x.cols()) {
        start.reserve(rows + 1);
        start.push_back(0);
        for (std::size_t i = 0; i < rows; ++i) {
            auto r = x.row(i);
            for (std::size_t j = 0; j < cols; ++j)
                if (r[j] != 0.0) {
                    col.push_back(j);
                    val.push_back(r[j]);
                }
            start.push_back(col.size());
        }
    }
};

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

class LogisticProblem {
public:
    LogisticProblem(const Matrix& x, const std::vector<int>& y, double l2) : x_(x), y_(y), l2_(l2) {
        const std::size_t n = x.rows(), p = x.cols();
        mean_.assign(p, 0.0);
        scale_.assign(p, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < p; ++j) mean_[j] += x(i, j);
        for (auto& m : mean_) m /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < p; ++j) {
                const double d = x(i, j) - mean_[j];
                scale_[j] += d * d;
            }
        for (auto& s : scale_) {
            s = std::sqrt(s / static_cast<double>(n));
            if (s < 1e-12) s = 1.0;
        }
    }

    std::size_t dim() const { return x_.cols + 1; }  // last entry is the bias

    // Loss at theta; fills logits.
    double loss(const std::vector<double>& theta, std::vector<double>& z) const {
        const std::size_t p = x_.cols;
        double offset = theta[p];
        std::vector<double> v(p);
        double reg = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            v[j] = theta[j] / scale_[j];
            offset -= mean_[j] * v[j];
            reg += theta[j] * theta[j];
        }
        z.assign(x_.rows, offset);
        double total = 0.0;
        for (std::size_t i = 0; i < x_.rows; ++i) {
            for (std::size_t e = x_.start[i]; e < x_.start[i + 1]; ++e) z[i] += x_.val[e] * v[x_.col[e]];
            total += softplus(z[i]) - (y_[i] ? z[i] : 0.0);
        }
        return total / static_cast<double>(x_.rows) + 0.5 * l2_ * reg;
    }

    std::vector<double> gradient(const std::vector<double>& theta, const std::vector<double>& z) const {
        const std::size_t p = x_.cols;
        const double n = static_cast<double>(x_.rows);
        std::vector<double> xr(p, 0.0);
        double rsum = 0.0;
        for (std::size_t i = 0; i < x_.rows; ++i) {
            const double r = sigmoid(z[i]) - (y_[i] ? 1.0 : 0.0);
            rsum += r;
            for (std::size_t e = x_.start[i]; e < x_.start[i + 1]; ++e) xr[x_.col[e]] += x_.val[e] * r;
        }
        std::vector<double> g(p + 1);
        for (std::size_t j = 0; j < p; ++j) g[j] = (xr[j] - mean_[j] * rsum) / (n * scale_[j]) + l2_ * theta[j];
        g[p] = rsum / n;
        return g;
    }

    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& scale() const { return scale_; }

private:
    Csr x_;
    const std::vector<int>& y_;
    double l2_;
    std::vector<double> mean_, scale_;
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

std::vector<double> LogisticFit::decision(const Matrix& x) const {
    if (x.cols() != w.size()) throw Error("logistic probe: feature count differs from the fitted model");
    std::vector<double> out(x.rows(), bias);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        for (std::size_t j = 0; j < w.size(); ++j) out[i] += w[j] * (r[j] - mean[j]) / scale[j];
    }
    return out;
}

LogisticFit fit_logistic(const Matrix& x, const std::vector<int>& y, double l2_reg, std::size_t max_iter, double tol) {
    if (x.rows() != y.size()) throw Error("logistic probe: features and labels differ in length");
    if (x.rows() == 0) throw Error("logistic probe: no samples");
    if (l2_reg < 0.0) throw Error("logistic probe: l2_reg must be non-negative");
    LogisticProblem prob(x, y, l2_reg);
    const std::size_t dim = prob.dim();

    std::vector<double> theta(dim, 0.0), z, z_new, theta_new(dim);
    double f = prob.loss(theta, z);
    auto g = prob.gradient(theta, z);
    LogisticFit fit;
    fit.loss_history.push_back(f);
    double step = 1.0;
    std::vector<double> theta_prev, g_prev;
    std::size_t it = 0;
    for (; it < max_iter; ++it) {
        const double gn2 = dot(g, g);
        if (std::sqrt(gn2) < tol) break;
        if (!theta_prev.empty()) {
            double ss = 0.0, sy = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                const double s = theta[i] - theta_prev[i], d = g[i] - g_prev[i];
                ss += s * s;
                sy += s * d;
            }
            step = sy > 0.0 ? ss / sy : 2.0 * step;
        }
        double f_new = f;
        bool accepted = false;
        for (int halvings = 0; halvings < 60; ++halvings, step *= 0.5) {
            for (std::size_t i = 0; i < dim; ++i) theta_new[i] = theta[i] - step * g[i];
            f_new = prob.loss(theta_new, z_new);
            if (f_new <= f - 1e-4 * step * gn2) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        theta_prev = theta;
        g_prev = g;
        theta.swap(theta_new);
        z.swap(z_new);
        f = f_new;
        g = prob.gradient(theta, z);
        fit.loss_history.push_back(f);
    }
    fit.iterations = it;
    fit.grad_norm = std::sqrt(dot(g, g));
    fit.mean = prob.mean();
    fit.scale = prob.scale();
    fit.w.assign(theta.begin(), theta.end() - 1);
    fit.bias = theta.back();
    return fit;
}

std::vector<int> stratified_folds(const std::vector<int>& labels, std::size_t folds, std::uint64_t rng_seed) {
    if (folds < 2) throw Error("stratified folds: need at least 2 folds");
    Rng rng(rng_seed, stream::kFolds);
    std::vector<int> out(labels.size(), -1);
    std::size_t next = 0;
    for (int cls : {0, 1}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) idx.push_back(i);
        rng.shuffle(idx);
        for (auto i : idx) out[i] = static_cast<int>(next++ % folds);
    }
    return out;
}

MetricSummary summarize(const std::vector<double>& v) {
    MetricSummary s;
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

ProbeReport fit_linear_probe(const Matrix& features, const std::vector<int>& labels, double l2_reg,
                             std::size_t folds, std::uint64_t rng_seed) {
    if (features.rows() != labels.size()) throw Error("probe: features and labels differ in length");
    const auto fold = stratified_folds(labels, folds, rng_seed);
    ProbeReport rep;
    rep.fold_count = folds;
    for (std::size_t k = 0; k < folds; ++k) {
        std::vector<std::size_t> tr, te;
        for (std::size_t i = 0; i < labels.size(); ++i) (fold[i] == static_cast<int>(k) ? te : tr).push_back(i);
        std::vector<int> ytr, yte;
        for (auto i : tr) ytr.push_back(labels[i]);
        for (auto i : te) yte.push_back(labels[i]);
        auto single = [](const std::vector<int>& y) {
            return std::all_of(y.begin(), y.end(), [&](int v) { return v == y.front(); });
        };
        if (ytr.empty() || yte.empty() || single(ytr) || single(yte))
            throw Error("probe: fold " + std::to_string(k) + " is degenerate (single class)");
        const auto fit = fit_logistic(select_rows(features, tr), ytr, l2_reg);
        rep.fold_aucs.push_back(auc(fit.decision(select_rows(features, te)), yte));
    }
    const auto s = summarize(rep.fold_aucs);
    rep.auc = s.mean;
    rep.auc_sd = s.sd;
    return rep;
}

// --- tier reports ---------------------------------------------------------------

const ProbeReport& UtilityReport::at(const std::string& tier) const {
    for (const auto& t : tiers)
        if (t.tier == tier) return t;
    throw Error("utility report: no tier '" + tier + "'");
}

UtilityReport hierarchical_utility_report(const ModelParams& model, const Dataset& data, const ProbeOptions& opts,
                                          const double* reference_L0_auc) {
    const auto t = full_forward(data.X, model);
    const std::vector<std::pair<std::string, Matrix>> blocks = {
        {"L0", t.z_dense},
        {"f1", t.z1},
        {"f2", t.z2},
        {"f1_hat", t.z1_hat},
        {"L0+f1", hconcat(t.z_dense, t.z1)},
        {"L0+f2", hconcat(t.z_dense, t.z2)},
        {"f1+f2", hconcat(t.z1, t.z2)},
    };
    UtilityReport rep;
    for (const auto& [name, feats] : blocks) {
        auto r = fit_linear_probe(feats, data.y, opts.l2_reg, opts.folds, opts.rng_seed);
        r.tier = name;
        rep.tiers.push_back(std::move(r));
    }
    const double base = reference_L0_auc ? *reference_L0_auc : rep.at("L0").auc;
    for (auto& r : rep.tiers) r.gain_vs_L0 = r.auc - base;
    rep.denoising_delta = rep.at("f1_hat").auc - rep.at("f1").auc;
    return rep;
}

AblationReport ablation_report(const ModelParams& full_model, const Dataset& train_data, const Dataset& eval,
                               const TrainConfig& cfg, const ProbeOptions& opts) {
    TrainConfig sparse = cfg;
    sparse.dims = full_model.dims;
    sparse.dims.dense_enabled = false;
    sparse.loss.lambda_s = 0.0;
    auto trained = train(train_data, sparse);
    if (trained.diverged) throw Error("ablation: sparse-only training diverged: " + trained.message);

    AblationReport rep;
    rep.full = hierarchical_utility_report(full_model, eval, opts);
    const double l0 = rep.full.at("L0").auc;
    rep.ablated = hierarchical_utility_report(trained.params, eval, opts, &l0);
    rep.ablated_model = std::move(trained.params);
    rep.gap = rep.full.at("L0+f1").auc - rep.ablated.at("f1+f2").auc;
    return rep;
}

// --- augmentation -------------------------------------------------------------------

namespace {

struct RunMetrics {
    double auc, auprc, recall, f1;
};

RunMetrics score_run(const Dataset& fit_on, const Dataset& test, const AugmentationOptions& opts) {
    const auto fit = fit_logistic(fit_on.X, fit_on.y, opts.l2_reg);
    const auto s = fit.decision(test.X);
    return {auc(s, test.y), auprc(s, test.y), recall_at_specificity(s, test.y, opts.spec_target), best_f1(s, test.y)};
}

AugmentationReport collect(const std::string& method, const std::vector<RunMetrics>& runs) {
    AugmentationReport r;
    r.method = method;
    std::vector<double> a, p, rc, f;
    for (const auto& m : runs) {
        a.push_back(m.auc);
        p.push_back(m.auprc);
        rc.push_back(m.recall);
        f.push_back(m.f1);
    }
    r.auc = summarize(a);
    r.auprc = summarize(p);
    r.recall_at_spec = summarize(rc);
    r.best_f1 = summarize(f);
    r.run_auprc = p;
    return r;
}

}  // namespace

AugmentationResult augmentation_experiment(const Dataset& real_train, const Dataset& test, const Dataset& synthetic,
                                           const AugmentationOptions& opts, const std::string& method) {
    if (synthetic.n() > 0 && (synthetic.feature_names != real_train.feature_names || synthetic.d() != real_train.d()))
        throw Error("augmentation: synthetic schema does not match the real training data");
    if (test.feature_names != real_train.feature_names) throw Error("augmentation: test schema does not match");
    if (opts.n_runs == 0) throw Error("augmentation: n_runs must be positive");
    if (!(opts.subsample > 0.0 && opts.subsample <= 1.0)) throw Error("augmentation: subsample must be in (0, 1]");

    std::vector<RunMetrics> base, aug;
    AugmentationResult out;
    for (std::size_t run = 0; run < opts.n_runs; ++run) {
        const std::uint64_t run_seed = derive_seed(opts.rng_seed, stream::kAugment, run);
        Dataset real = real_train;
        if (opts.subsample < 1.0) real = stratified_split(real_train, opts.subsample, run_seed).first;

        Dataset augmented = real;
        if (synthetic.n() > 0) {
            const auto want = static_cast<std::size_t>(
                std::llround(opts.synthetic_ratio * static_cast<double>(real.positives())));
            Rng rng(run_seed, stream::kSynthesis);
            std::vector<std::size_t> idx(synthetic.n());
            std::iota(idx.begin(), idx.end(), 0);
            rng.shuffle(idx);
            idx.resize(std::min(want, idx.size()));
            std::sort(idx.begin(), idx.end());
            if (!idx.empty()) augmented = concat(real, synthetic.subset(idx));
        }
        base.push_back(score_run(real, test, opts));
        aug.push_back(synthetic.n() > 0 ? score_run(augmented, test, opts) : base.back());
        out.run_delta_prc.push_back(aug.back().auprc - base.back().auprc);
    }
    out.baseline = collect("baseline", base);
    out.augmented = collect(method, aug);
    out.augmented.delta_prc_relative = (out.augmented.auprc.mean - out.baseline.auprc.mean) / out.baseline.auprc.mean;
    return out;
}

json to_json(const ProbeReport& r) {
    return {{"tier", r.tier},       {"auc", r.auc},
            {"auc_sd", r.auc_sd},   {"gain_vs_L0", r.gain_vs_L0},
            {"fold_count", r.fold_count}, {"fold_aucs", r.fold_aucs}};
}

json to_json(const UtilityReport& r) {
    json tiers = json::array();
    for (const auto& t : r.tiers) tiers.push_back(to_json(t));
    return {{"tiers", tiers}, {"denoising_delta", r.denoising_delta}};
}

json to_json(const AugmentationReport& r) {
    auto ms = [](const MetricSummary& m) { return json{{"mean", m.mean}, {"sd", m.sd}}; };
    return {{"method", r.method},
            {"auc", ms(r.auc)},
            {"auprc", ms(r.auprc)},
            {"recall_at_spec", ms(r.recall_at_spec)},
            {"best_f1", ms(r.best_f1)},
            {"delta_prc_relative", r.delta_prc_relative},
            {"run_auprc", r.run_auprc}};
}

}  // namespace hhsae
