#include "hhsae/objective.hpp"

#include <cmath>

namespace hhsae {

void LossWeights::validate() const {
    for (double v : {lambda_s, alpha, beta, lambda_1, lambda_2, omega_rare})
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error("loss weights must be finite and >= 0");
}

namespace {

double row_sq_err(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return s;
}

double sample_weight(int y, double omega_rare) { return 1.0 + y * (omega_rare - 1.0); }

}  // namespace

double recon_loss(const Matrix& x, const Matrix& x_hat, std::span<const int> y, double omega_rare) {
    if (!x.same_shape(x_hat) || y.size() != x.rows()) throw Error("recon_loss: shape mismatch");
    if (x.rows() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t b = 0; b < x.rows(); ++b)
        s += sample_weight(y[b], omega_rare) * row_sq_err(x.row(b), x_hat.row(b));
    return s / static_cast<double>(x.rows());
}

double smooth_loss(const Matrix& x_hat_cont) {
    if (x_hat_cont.rows() == 0) return 0.0;
    double s = 0.0;
    for (double v : x_hat_cont.flat()) s += v * v;
    return s / static_cast<double>(x_hat_cont.rows());
}

double dir_loss(const Matrix& z1_hat, const Matrix& z1) {
    if (!z1.same_shape(z1_hat)) throw Error("dir_loss: shape mismatch");
    if (z1.rows() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t b = 0; b < z1.rows(); ++b) s += cosine(z1_hat.row(b), z1.row(b));
    return 1.0 - s / static_cast<double>(z1.rows());
}

double mag_loss(const Matrix& z1_hat, const Matrix& z1) {
    if (!z1.same_shape(z1_hat)) throw Error("mag_loss: shape mismatch");
    if (z1.rows() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t b = 0; b < z1.rows(); ++b) {
        const double d = norm2(z1_hat.row(b)) - norm2(z1.row(b));
        s += d * d;
    }
    return s / static_cast<double>(z1.rows());
}

std::pair<double, double> sparsity_tax(const Matrix& z1, const Matrix& z2) {
    auto l1 = [](const Matrix& m) {
        if (m.rows() == 0) return 0.0;
        double s = 0.0;
        for (double v : m.flat()) s += std::abs(v);
        return s / static_cast<double>(m.rows());
    };
    return {l1(z1), l1(z2)};
}

LossBreakdown combine(const LossBreakdown& t, const LossWeights& w) {
    LossBreakdown out = t;
    out.total = t.recon + w.lambda_s * t.smooth + w.alpha * t.dir + w.beta * t.mag +
                w.lambda_1 * t.tax1 + w.lambda_2 * t.tax2;
    return out;
}

LossBreakdown evaluate_loss(const ForwardTrace& t, const Matrix& x, std::span<const int> y,
                            const LossWeights& w, bool dense_enabled) {
    LossBreakdown l;
    l.recon = recon_loss(x, t.x_hat, y, w.omega_rare);
    l.smooth = dense_enabled ? smooth_loss(t.x_hat_cont) : 0.0;
    l.dir = dir_loss(t.z1_hat, t.z1_target);
    l.mag = mag_loss(t.z1_hat, t.z1_target);
    std::tie(l.tax1, l.tax2) = sparsity_tax(t.z1, t.z2);
    return combine(l, w);
}

LossBreakdown total_loss(const Matrix& x, std::span<const int> y, const ModelParams& params,
                         const LossWeights& w, const DetachedValues* detached) {
    const auto t = full_forward(x, params, detached);
    return evaluate_loss(t, x, y, w, params.dims.dense_enabled);
}

LossAndGradients total_loss_and_gradients(const Matrix& x, std::span<const int> y,
                                          const ModelParams& params, const LossWeights& w,
                                          const GradientOptions& opts) {
    if (x.rows() == 0) throw Error("total_loss_and_gradients: empty batch");
    if (y.size() != x.rows()) throw Error("total_loss_and_gradients: label count mismatch");
    const auto& dims = params.dims;
    const std::size_t B = x.rows(), D = dims.D, d1 = dims.d1, d2 = dims.d2;
    const double invB = 1.0 / static_cast<double>(B);

    LossAndGradients out;
    out.trace = full_forward(x, params);
    const ForwardTrace& t = out.trace;
    out.loss = evaluate_loss(t, x, y, w, dims.dense_enabled);
    out.grads = ModelParams::zeros(dims);
    auto& g = out.grads;

    const auto& atoms = params.atoms;
    const auto& comp = params.comp;
    std::vector<double> scale(d1);
    for (std::size_t i = 0; i < d1; ++i) scale[i] = std::exp(atoms.r_mag[i]);

    std::vector<double> g_xhat(D), g_xc(D), g_z1(d1), g_pre(d1), g_resid(D), g_z1h(d1), g_z2(d2);

    for (std::size_t b = 0; b < B; ++b) {
        const auto xr = x.row(b);
        const auto xh = t.x_hat.row(b);
        const double wb = 2.0 * sample_weight(y[b], w.omega_rare) * invB;
        for (std::size_t f = 0; f < D; ++f) g_xhat[f] = wb * (xh[f] - xr[f]);

        // Sparse decoder: x_hat_innov = W_dec1 z1 + b_dec1.
        const auto z1 = t.z1.row(b);
        std::fill(g_z1.begin(), g_z1.end(), 0.0);
        for (std::size_t f = 0; f < D; ++f) g.atoms.b_dec1[f] += g_xhat[f];
        for (std::size_t i = 0; i < d1; ++i) {
            if (z1[i] == 0.0) continue;
            double acc = 0.0;
            for (std::size_t f = 0; f < D; ++f) {
                g.atoms.W_dec1(f, i) += g_xhat[f] * z1[i];
                acc += atoms.W_dec1(f, i) * g_xhat[f];
            }
            g_z1[i] = acc + w.lambda_1 * invB;
        }

        // Gated encoder, selected coordinates only.
        const auto resid = t.x_resid.row(b);
        const auto pre = t.atom_pre.row(b);
        std::fill(g_resid.begin(), g_resid.end(), 0.0);
        for (std::size_t i = 0; i < d1; ++i) {
            if (z1[i] == 0.0) continue;
            g_pre[i] = g_z1[i] * scale[i];
            g.atoms.r_mag[i] += g_z1[i] * scale[i] * pre[i];
            g.atoms.b_mag[i] += g_z1[i];
            auto gw = g.atoms.W_gate.row(i);
            const auto wg = atoms.W_gate.row(i);
            for (std::size_t f = 0; f < D; ++f) {
                gw[f] += g_pre[i] * resid[f];
                g_resid[f] += wg[f] * g_pre[i];
            }
        }

        // Dense path: recon through x_hat, smooth, and optionally the residual.
        if (dims.dense_enabled) {
            const auto xc = t.x_hat_cont.row(b);
            for (std::size_t f = 0; f < D; ++f) {
                g_xc[f] = g_xhat[f] + w.lambda_s * 2.0 * invB * xc[f];
                if (!opts.detach_residual) g_xc[f] -= g_resid[f];
            }
            const auto zd = t.z_dense.row(b);
            for (std::size_t f = 0; f < D; ++f) {
                g.dense.b_dec0[f] += g_xc[f];
                auto gw = g.dense.W_dec0.row(f);
                for (std::size_t k = 0; k < dims.d_dense; ++k) gw[k] += g_xc[f] * zd[k];
            }
            for (std::size_t k = 0; k < dims.d_dense; ++k) {
                double gz = 0.0;
                for (std::size_t f = 0; f < D; ++f) gz += params.dense.W_dec0(f, k) * g_xc[f];
                auto gw = g.dense.W_enc0.row(k);
                for (std::size_t f = 0; f < D; ++f) gw[f] += gz * xr[f];
            }
        }

        // Coherence terms on z1_hat against the detached target.
        const auto h = t.z1_hat.row(b);
        const auto tgt = t.z1_target.row(b);
        const double nh = norm2(h), nt = norm2(tgt);
        std::fill(g_z1h.begin(), g_z1h.end(), 0.0);
        if (nh > 0.0) {
            if (nt > 0.0 && w.alpha != 0.0) {
                const double cs = dot(h, tgt) / (nh * nt);
                const double c = -w.alpha * invB;
                for (std::size_t i = 0; i < d1; ++i)
                    g_z1h[i] += c * (tgt[i] / (nh * nt) - cs * h[i] / (nh * nh));
            }
            if (w.beta != 0.0) {
                const double c = w.beta * invB * 2.0 * (nh - nt) / nh;
                for (std::size_t i = 0; i < d1; ++i) g_z1h[i] += c * h[i];
            }
        }

        // Compository decoder and encoder (input is the detached z1).
        const auto z2 = t.z2.row(b);
        for (std::size_t i = 0; i < d1; ++i) g.comp.b_dec2[i] += g_z1h[i];
        for (std::size_t j = 0; j < d2; ++j) {
            if (z2[j] == 0.0) {
                g_z2[j] = 0.0;
                continue;
            }
            double acc = 0.0;
            for (std::size_t i = 0; i < d1; ++i) {
                g.comp.W_dec2(i, j) += g_z1h[i] * z2[j];
                acc += comp.W_dec2(i, j) * g_z1h[i];
            }
            g_z2[j] = acc + w.lambda_2 * invB;
            g.comp.b_enc2[j] += g_z2[j];
            auto gw = g.comp.W_enc2.row(j);
            for (std::size_t i = 0; i < d1; ++i)
                if (tgt[i] != 0.0) gw[i] += g_z2[j] * tgt[i];
        }
    }

    for (const auto& [name, m] : out.grads.tensors())
        if (!m->all_finite()) throw Error("non-finite gradient in parameter " + name);
    return out;
}

}  // namespace hhsae
