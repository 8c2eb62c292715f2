#include "hhsae/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hhsae {

void ModelDims::validate() const {
    if (D == 0) throw Error("model dims: D must be positive");
    if (dense_enabled && (d_dense == 0 || d_dense >= D))
        throw Error("model dims: require 0 < d_dense < D (got d_dense=" + std::to_string(d_dense) +
                    ", D=" + std::to_string(D) + ")");
    if (d1 <= D) throw Error("model dims: atomic layer must be overcomplete (d1 > D)");
    if (d2 == 0 || d2 >= d1) throw Error("model dims: require 0 < d2 < d1");
    if (k1 == 0 || k1 > d1) throw Error("model dims: require 1 <= k1 <= d1");
    if (k2 == 0 || k2 > d2) throw Error("model dims: require 1 <= k2 <= d2");
}

ModelParams ModelParams::zeros(const ModelDims& dims) {
    const std::size_t dd = dims.dense_enabled ? dims.d_dense : 0;
    ModelParams p;
    p.dims = dims;
    p.dense = {Matrix(dd, dims.D), Matrix(dims.D, dd), Matrix(dims.D, 1)};
    p.atoms = {Matrix(dims.d1, dims.D), Matrix(dims.d1, 1), Matrix(dims.d1, 1),
               Matrix(dims.d1, 1),      Matrix(dims.D, dims.d1), Matrix(dims.D, 1)};
    p.comp = {Matrix(dims.d2, dims.d1), Matrix(dims.d2, 1), Matrix(dims.d1, dims.d2), Matrix(dims.d1, 1)};
    return p;
}

std::vector<std::pair<std::string, Matrix*>> ModelParams::tensors() {
    return {{"dense.W_enc0", &dense.W_enc0}, {"dense.W_dec0", &dense.W_dec0},
            {"dense.b_dec0", &dense.b_dec0}, {"atoms.W_gate", &atoms.W_gate},
            {"atoms.b_gate", &atoms.b_gate}, {"atoms.r_mag", &atoms.r_mag},
            {"atoms.b_mag", &atoms.b_mag},   {"atoms.W_dec1", &atoms.W_dec1},
            {"atoms.b_dec1", &atoms.b_dec1}, {"comp.W_enc2", &comp.W_enc2},
            {"comp.b_enc2", &comp.b_enc2},   {"comp.W_dec2", &comp.W_dec2},
            {"comp.b_dec2", &comp.b_dec2}};
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::tensors() const {
    std::vector<std::pair<std::string, const Matrix*>> out;
    for (auto& [name, m] : const_cast<ModelParams*>(this)->tensors()) out.emplace_back(name, m);
    return out;
}

void ModelParams::check_shapes() const {
    dims.validate();
    const auto expected = zeros(dims);
    const auto want = expected.tensors();
    const auto have = tensors();
    for (std::size_t i = 0; i < want.size(); ++i)
        require_shape(*have[i].second, want[i].second->rows(), want[i].second->cols(), have[i].first);
}

void renormalize_decoder_columns(Matrix& W) {
    for (std::size_t c = 0; c < W.cols(); ++c) {
        double ss = 0.0;
        for (std::size_t r = 0; r < W.rows(); ++r) ss += W(r, c) * W(r, c);
        const double n = std::sqrt(ss);
        if (n == 0.0) continue;
        for (std::size_t r = 0; r < W.rows(); ++r) W(r, c) /= n;
    }
}

ModelParams init_model(const ModelDims& dims, std::uint64_t rng_seed) {
    dims.validate();
    ModelParams p = ModelParams::zeros(dims);
    Rng rng(rng_seed, stream::kInit);
    auto gaussian = [&](Matrix& m, double scale) {
        for (auto& v : m.flat()) v = scale * rng.normal();
    };
    if (dims.dense_enabled) {
        gaussian(p.dense.W_enc0, 1.0 / std::sqrt(static_cast<double>(dims.D)));
        p.dense.W_dec0 = transpose(p.dense.W_enc0);
    }
    gaussian(p.atoms.W_gate, 1.0 / std::sqrt(static_cast<double>(dims.D)));
    p.atoms.W_dec1 = transpose(p.atoms.W_gate);
    renormalize_decoder_columns(p.atoms.W_dec1);
    gaussian(p.comp.W_dec2, 1.0);
    renormalize_decoder_columns(p.comp.W_dec2);
    p.comp.W_enc2 = transpose(p.comp.W_dec2);
    return p;
}

void topk_rows(Matrix& values, std::size_t k) {
    std::vector<std::size_t> idx;
    idx.reserve(values.cols());
    for (std::size_t r = 0; r < values.rows(); ++r) {
        auto row = values.row(r);
        idx.clear();
        for (std::size_t c = 0; c < row.size(); ++c)
            if (row[c] > 0.0) idx.push_back(c);
            else row[c] = 0.0;
        if (idx.size() <= k) continue;
        std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                         [&](std::size_t a, std::size_t b) {
                             return row[a] > row[b] || (row[a] == row[b] && a < b);
                         });
        for (std::size_t i = k; i < idx.size(); ++i) row[idx[i]] = 0.0;
    }
}

std::pair<Matrix, Matrix> dense_forward(const Matrix& x, const DensePathParams& p) {
    if (x.cols() != p.W_enc0.cols()) throw Error("dense_forward: input has wrong feature count");
    Matrix z = matmul_bt(x, p.W_enc0);
    Matrix xc = matmul_bt(z, p.W_dec0);
    for (std::size_t i = 0; i < xc.rows(); ++i) {
        auto row = xc.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += p.b_dec0[j];
    }
    return {std::move(z), std::move(xc)};
}

Matrix gated_topk_encode(const Matrix& x_resid, const GatedAtomParams& p, std::size_t k1, Matrix* atom_pre) {
    if (x_resid.cols() != p.W_gate.cols()) throw Error("gated_topk_encode: input has wrong feature count");
    Matrix pre = matmul_bt(x_resid, p.W_gate);
    Matrix z(pre.rows(), pre.cols());
    std::vector<double> scale(p.r_mag.size());
    for (std::size_t i = 0; i < scale.size(); ++i) scale[i] = std::exp(p.r_mag[i]);
    for (std::size_t b = 0; b < pre.rows(); ++b) {
        auto pr = pre.row(b);
        auto zr = z.row(b);
        for (std::size_t i = 0; i < pr.size(); ++i) {
            const bool open = pr[i] + p.b_gate[i] > 0.0;
            const double mag = scale[i] * pr[i] + p.b_mag[i];
            zr[i] = (open && mag > 0.0) ? mag : 0.0;
        }
    }
    topk_rows(z, k1);
    if (atom_pre) *atom_pre = std::move(pre);
    return z;
}

std::pair<Matrix, Matrix> compository_encode(const Matrix& z1, const CompositoryParams& p, std::size_t k2) {
    if (z1.cols() != p.W_enc2.cols()) throw Error("compository_encode: input has wrong width");
    const std::size_t d1 = p.W_enc2.cols(), d2 = p.W_enc2.rows();
    Matrix z2(z1.rows(), d2);
    for (std::size_t b = 0; b < z1.rows(); ++b) {
        auto in = z1.row(b);
        auto out = z2.row(b);
        for (std::size_t j = 0; j < d2; ++j) out[j] = p.b_enc2[j];
        for (std::size_t i = 0; i < d1; ++i) {
            if (in[i] == 0.0) continue;
            for (std::size_t j = 0; j < d2; ++j) out[j] += p.W_enc2(j, i) * in[i];
        }
    }
    topk_rows(z2, k2);  // also applies the relu

    Matrix z1_hat(z1.rows(), d1);
    for (std::size_t b = 0; b < z1.rows(); ++b) {
        auto zr = z2.row(b);
        auto out = z1_hat.row(b);
        for (std::size_t i = 0; i < d1; ++i) out[i] = p.b_dec2[i];
        for (std::size_t j = 0; j < d2; ++j) {
            if (zr[j] == 0.0) continue;
            for (std::size_t i = 0; i < d1; ++i) out[i] += p.W_dec2(i, j) * zr[j];
        }
    }
    return {std::move(z2), std::move(z1_hat)};
}

namespace {

// W (D x d) times sparse code rows, plus bias.
Matrix decode_sparse(const Matrix& codes, const Matrix& W, const Matrix& bias) {
    Matrix out(codes.rows(), W.rows());
    for (std::size_t b = 0; b < codes.rows(); ++b) {
        auto c = codes.row(b);
        auto o = out.row(b);
        for (std::size_t f = 0; f < o.size(); ++f) o[f] = bias[f];
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (c[i] == 0.0) continue;
            for (std::size_t f = 0; f < o.size(); ++f) o[f] += W(f, i) * c[i];
        }
    }
    return out;
}

}  // namespace

ForwardTrace full_forward(const Matrix& x, const ModelParams& params, const DetachedValues* detached) {
    const auto& dims = params.dims;
    require_shape(x, x.rows(), dims.D, "full_forward input");
    ForwardTrace t;
    if (dims.dense_enabled) {
        std::tie(t.z_dense, t.x_hat_cont) = dense_forward(x, params.dense);
    } else {
        t.z_dense = Matrix(x.rows(), 0);
        t.x_hat_cont = Matrix(x.rows(), dims.D);
    }

    if (detached && !detached->x_resid.empty()) {
        require_shape(detached->x_resid, x.rows(), dims.D, "detached x_resid");
        t.x_resid = detached->x_resid;
    } else {
        t.x_resid = x;
        for (std::size_t i = 0; i < x.size(); ++i) t.x_resid[i] -= t.x_hat_cont[i];
    }

    t.z1 = gated_topk_encode(t.x_resid, params.atoms, dims.k1, &t.atom_pre);
    t.x_hat_innov = decode_sparse(t.z1, params.atoms.W_dec1, params.atoms.b_dec1);

    if (detached && !detached->z1.empty()) {
        require_shape(detached->z1, x.rows(), dims.d1, "detached z1");
        t.z1_target = detached->z1;
    } else {
        t.z1_target = t.z1;
    }
    std::tie(t.z2, t.z1_hat) = compository_encode(t.z1_target, params.comp, dims.k2);

    t.x_hat = t.x_hat_cont;
    for (std::size_t i = 0; i < t.x_hat.size(); ++i) t.x_hat[i] += t.x_hat_innov[i];
    return t;
}

Matrix decode_innovation(const Matrix& z2, const ModelParams& params) {
    require_shape(z2, z2.rows(), params.dims.d2, "decode_innovation input");
    const auto& c = params.comp;
    Matrix z1_hat = decode_sparse(z2, c.W_dec2, c.b_dec2);
    // z1_hat is dense; plain product.
    Matrix out = matmul_bt(z1_hat, params.atoms.W_dec1);
    for (std::size_t b = 0; b < out.rows(); ++b) {
        auto o = out.row(b);
        for (std::size_t f = 0; f < o.size(); ++f) o[f] += params.atoms.b_dec1[f];
    }
    return out;
}

}  // namespace hhsae
