#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hhsae/numerics.hpp"

namespace hhsae {

struct ModelDims {
    std::size_t D = 32;
    std::size_t d_dense = 8;
    std::size_t d1 = 256;
    std::size_t k1 = 4;
    std::size_t d2 = 32;
    std::size_t k2 = 4;
    // false = sparse-only ablation: x_resid = x and the dense path is absent.
    bool dense_enabled = true;

    void validate() const;
    bool operator==(const ModelDims&) const = default;
};

// Stiff contextual path. Strictly linear: x_hat_cont = W_dec0 (W_enc0 x) + b_dec0.
struct DensePathParams {
    Matrix W_enc0;  // d_dense x D
    Matrix W_dec0;  // D x d_dense
    Matrix b_dec0;  // D x 1

    bool operator==(const DensePathParams&) const = default;
};

// Gated top-k atomic layer. Magnitude weights are tied to the gate weights:
// W_mag = diag(exp(r_mag)) W_gate.
struct GatedAtomParams {
    Matrix W_gate;  // d1 x D
    Matrix b_gate;  // d1 x 1
    Matrix r_mag;   // d1 x 1
    Matrix b_mag;   // d1 x 1
    Matrix W_dec1;  // D x d1, unit-norm columns
    Matrix b_dec1;  // D x 1

    bool operator==(const GatedAtomParams&) const = default;
};

struct CompositoryParams {
    Matrix W_enc2;  // d2 x d1
    Matrix b_enc2;  // d2 x 1
    Matrix W_dec2;  // d1 x d2
    Matrix b_dec2;  // d1 x 1

    bool operator==(const CompositoryParams&) const = default;
};

struct ModelParams {
    ModelDims dims;
    DensePathParams dense;
    GatedAtomParams atoms;
    CompositoryParams comp;

    // Zero tensors with the shapes implied by dims.
    static ModelParams zeros(const ModelDims& dims);

    // Every tensor with a stable dotted name, in checkpoint order.
    std::vector<std::pair<std::string, Matrix*>> tensors();
    std::vector<std::pair<std::string, const Matrix*>> tensors() const;

    void check_shapes() const;
    bool operator==(const ModelParams&) const = default;
};

// Seeded initialization: Gaussian encoders scaled by 1/sqrt(fan_in) with tied
// decoders (W_dec1 columns normalized); the compository layer starts from
// unit-norm W_dec2 columns with W_enc2 = W_dec2^T. Biases start at zero.
ModelParams init_model(const ModelDims& dims, std::uint64_t rng_seed);

void renormalize_decoder_columns(Matrix& W_dec1);

// Values that the objective treats as constants. When supplied to the forward
// pass they replace the live quantities at the detach boundaries, which lets a
// finite-difference oracle see exactly the surrogate loss the analytic
// gradients differentiate.
struct DetachedValues {
    Matrix x_resid;  // B x D, replaces x - x_hat_cont
    Matrix z1;       // B x d1, compository input and coherence target
};

struct ForwardTrace {
    Matrix z_dense;      // B x d_dense
    Matrix x_hat_cont;   // B x D
    Matrix x_resid;      // B x D
    Matrix atom_pre;     // B x d1, W_gate x_resid (before biases)
    Matrix z1;           // B x d1, at most k1 nonzeros per row
    Matrix z1_target;    // B x d1, the detached copy fed to the compository layer
    Matrix z2;           // B x d2, at most k2 nonzeros per row
    Matrix z1_hat;       // B x d1
    Matrix x_hat_innov;  // B x D
    Matrix x_hat;        // B x D
};

// Keep the k largest strictly positive entries of each row; ties go to the
// lower index. Rows with fewer than k positive entries keep all of them.
void topk_rows(Matrix& values, std::size_t k);

std::pair<Matrix, Matrix> dense_forward(const Matrix& x, const DensePathParams& p);
Matrix gated_topk_encode(const Matrix& x_resid, const GatedAtomParams& p, std::size_t k1,
                         Matrix* atom_pre = nullptr);
std::pair<Matrix, Matrix> compository_encode(const Matrix& z1, const CompositoryParams& p, std::size_t k2);
ForwardTrace full_forward(const Matrix& x, const ModelParams& params,
                          const DetachedValues* detached = nullptr);

// W_dec1 (W_dec2 z2 + b_dec2) + b_dec1, the linear synthesis decode.
Matrix decode_innovation(const Matrix& z2, const ModelParams& params);

}  // namespace hhsae
