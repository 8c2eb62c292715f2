#include "hhsae/trainer.hpp"

#include <cmath>
#include <numeric>

#include "hhsae/tensor_io.hpp"

namespace hhsae {

using nlohmann::json;

void TrainConfig::validate() const {
    if (epochs < 1) throw Error("train config: epochs must be >= 1");
    if (batch_size < 1) throw Error("train config: batch_size must be >= 1");
    if (!(lr >= 0.0)) throw Error("train config: lr must be >= 0");
    if (!(lr_decay_gamma > 0.0 && lr_decay_gamma <= 1.0))
        throw Error("train config: lr_decay_gamma must be in (0, 1]");
    if (!(weight_decay >= 0.0)) throw Error("train config: weight_decay must be >= 0");
    loss.validate();
}

double TrainConfig::lr_at(std::size_t epoch) const {
    return lr * std::pow(lr_decay_gamma, static_cast<double>(epoch));
}

// --- diagnostics ------------------------------------------------------------

double dead_feature_ratio(const Matrix& codes) {
    if (codes.rows() == 0) throw Error("dead_feature_ratio: empty dataset");
    std::vector<char> alive(codes.cols(), 0);
    for (std::size_t b = 0; b < codes.rows(); ++b) {
        auto r = codes.row(b);
        for (std::size_t i = 0; i < r.size(); ++i)
            if (r[i] != 0.0) alive[i] = 1;
    }
    const auto n_alive = std::accumulate(alive.begin(), alive.end(), std::size_t{0});
    return 1.0 - static_cast<double>(n_alive) / static_cast<double>(codes.cols());
}

double active_fraction(const Matrix& codes) {
    if (codes.rows() == 0 || codes.cols() == 0) return 0.0;
    std::size_t nnz = 0;
    for (double v : codes.flat()) nnz += v != 0.0;
    return static_cast<double>(nnz) / static_cast<double>(codes.size());
}

double activation_energy(const Matrix& codes) {
    if (codes.rows() == 0) return 0.0;
    double total = 0.0;
    for (std::size_t b = 0; b < codes.rows(); ++b) {
        double s = 0.0;
        std::size_t nnz = 0;
        for (double v : codes.row(b))
            if (v != 0.0) {
                s += std::abs(v);
                ++nnz;
            }
        if (nnz > 0) total += s / static_cast<double>(nnz);
    }
    return total / static_cast<double>(codes.rows());
}

double dead_feature_ratio(const ModelParams& model, const Dataset& data, Tier tier) {
    if (data.n() == 0) throw Error("dead_feature_ratio: empty dataset");
    const auto t = full_forward(data.X, model);
    return dead_feature_ratio(tier == Tier::L1 ? t.z1 : t.z2);
}

double activation_energy(const ModelParams& model, const Dataset& data, Tier tier) {
    if (data.n() == 0) return 0.0;
    const auto t = full_forward(data.X, model);
    return activation_energy(tier == Tier::L1 ? t.z1 : t.z2);
}

namespace {

std::pair<double, double> class_mse_from_trace(const ForwardTrace& t, const Dataset& data) {
    double sp = 0.0, sn = 0.0;
    std::size_t np = 0, nn = 0;
    for (std::size_t b = 0; b < data.n(); ++b) {
        double e = 0.0;
        auto x = data.X.row(b);
        auto xh = t.x_hat.row(b);
        for (std::size_t f = 0; f < x.size(); ++f) e += (x[f] - xh[f]) * (x[f] - xh[f]);
        e /= static_cast<double>(x.size());
        if (data.y[b] == 1) {
            sp += e;
            ++np;
        } else {
            sn += e;
            ++nn;
        }
    }
    return {np ? sp / static_cast<double>(np) : 0.0, nn ? sn / static_cast<double>(nn) : 0.0};
}

}  // namespace

std::pair<double, double> class_conditional_mse(const ModelParams& model, const Dataset& data) {
    return class_mse_from_trace(full_forward(data.X, model), data);
}

EpochReport diagnose(const ModelParams& model, const Dataset& data) {
    if (data.n() == 0) throw Error("diagnose: empty dataset");
    const auto t = full_forward(data.X, model);
    EpochReport r;
    r.dead_feature_ratio_L1 = dead_feature_ratio(t.z1);
    r.dead_feature_ratio_L2 = dead_feature_ratio(t.z2);
    r.active_fraction_L1 = active_fraction(t.z1);
    r.active_fraction_L2 = active_fraction(t.z2);
    r.energy_L1 = activation_energy(t.z1);
    r.energy_L2 = activation_energy(t.z2);
    std::tie(r.mse_pos, r.mse_neg) = class_mse_from_trace(t, data);
    return r;
}

// --- training loop ----------------------------------------------------------

namespace {

bool finite(const LossBreakdown& l) {
    return std::isfinite(l.total) && std::isfinite(l.recon) && std::isfinite(l.dir) && std::isfinite(l.mag);
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (data.n() == 0) throw Error("train: empty dataset");
    TrainConfig cfg = config;
    cfg.dims.D = data.d();
    cfg.dims.validate();

    TrainResult result;
    result.params = init_model(cfg.dims, cfg.rng_seed);
    ModelParams& params = result.params;

    std::vector<AdamState> states;
    for (const auto& [name, m] : params.tensors()) states.push_back(AdamState::like(*m));

    Rng batch_rng(cfg.rng_seed, stream::kBatching);
    std::vector<std::size_t> order(data.n());
    std::iota(order.begin(), order.end(), 0);

    ModelParams last_good = params;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        AdamConfig adam{cfg.lr_at(epoch), cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};
        batch_rng.shuffle(order);

        LossBreakdown sum;
        bool diverged = false;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::span<const std::size_t> idx(order.data() + start, stop - start);
            const Matrix xb = select_rows(data.X, idx);
            std::vector<int> yb;
            yb.reserve(idx.size());
            for (auto i : idx) yb.push_back(data.y[i]);

            LossAndGradients lg;
            try {
                lg = total_loss_and_gradients(xb, yb, params, cfg.loss);
            } catch (const Error& e) {
                diverged = true;
                result.message = e.what();
                break;
            }
            if (!finite(lg.loss)) {
                diverged = true;
                result.message = "non-finite loss at epoch " + std::to_string(epoch);
                break;
            }
            const double wgt = static_cast<double>(idx.size());
            sum.recon += wgt * lg.loss.recon;
            sum.smooth += wgt * lg.loss.smooth;
            sum.dir += wgt * lg.loss.dir;
            sum.mag += wgt * lg.loss.mag;
            sum.tax1 += wgt * lg.loss.tax1;
            sum.tax2 += wgt * lg.loss.tax2;

            auto ps = params.tensors();
            auto gs = lg.grads.tensors();
            for (std::size_t k = 0; k < ps.size(); ++k) {
                if (ps[k].second->empty()) continue;
                if (!cfg.dims.dense_enabled && ps[k].first == "dense.b_dec0") continue;
                adam_step(*ps[k].second, *gs[k].second, states[k], adam);
            }
            renormalize_decoder_columns(params.atoms.W_dec1);
        }
        if (!diverged) {
            for (const auto& [name, m] : params.tensors())
                if (!m->all_finite()) {
                    diverged = true;
                    result.message = "non-finite parameter " + name + " at epoch " + std::to_string(epoch);
                }
        }
        if (diverged) {
            params = last_good;
            result.diverged = true;
            return result;
        }

        const double n = static_cast<double>(data.n());
        LossBreakdown mean{sum.recon / n, sum.smooth / n, sum.dir / n, sum.mag / n,
                           sum.tax1 / n,  sum.tax2 / n,   0.0};
        EpochReport rep = diagnose(params, data);
        rep.epoch = epoch;
        rep.loss = combine(mean, cfg.loss);
        rep.lr_used = adam.lr;
        result.reports.push_back(rep);
        if (on_epoch) on_epoch(rep);
        last_good = params;
    }
    return result;
}

// --- checkpoints --------------------------------------------------------------

json dims_to_json(const ModelDims& d) {
    return {{"D", d.D},   {"d_dense", d.d_dense}, {"d1", d.d1},
            {"k1", d.k1}, {"d2", d.d2},           {"k2", d.k2},
            {"dense_enabled", d.dense_enabled}};
}

ModelDims dims_from_json(const json& j) {
    ModelDims d;
    d.D = j.at("D").get<std::size_t>();
    d.d_dense = j.at("d_dense").get<std::size_t>();
    d.d1 = j.at("d1").get<std::size_t>();
    d.k1 = j.at("k1").get<std::size_t>();
    d.d2 = j.at("d2").get<std::size_t>();
    d.k2 = j.at("k2").get<std::size_t>();
    d.dense_enabled = j.at("dense_enabled").get<bool>();
    return d;
}

void save_checkpoint(const ModelParams& params, const PreprocessStats* stats,
                     const std::filesystem::path& path, const json& config) {
    params.check_shapes();
    json header{{"kind", "hhsae_checkpoint"}, {"dims", dims_to_json(params.dims)}, {"config", config}};
    if (stats) header["preprocess"] = json::parse(stats->to_json());
    std::vector<NamedTensor> tensors;
    for (const auto& [name, m] : params.tensors()) tensors.emplace_back(name, *m);
    write_tensor_file(path, header, tensors);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto tf = read_tensor_file(path);
    if (tf.header.value("kind", std::string()) != "hhsae_checkpoint")
        throw Error("checkpoint: not an HH-SAE checkpoint: " + path.string());
    Checkpoint ck;
    ck.params.dims = dims_from_json(tf.header.at("dims"));
    for (auto& [name, m] : ck.params.tensors()) *m = tf.get(name);
    try {
        ck.params.check_shapes();
    } catch (const Error& e) {
        throw Error(std::string("checkpoint: dimension mismatch with header: ") + e.what());
    }
    if (tf.header.contains("preprocess"))
        ck.stats = PreprocessStats::from_json(tf.header.at("preprocess").dump());
    ck.config = tf.header.value("config", json::object());
    return ck;
}

}  // namespace hhsae
