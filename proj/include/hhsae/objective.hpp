#pragma once

#include <span>
#include <utility>

#include "hhsae/model.hpp"

namespace hhsae {

struct LossWeights {
    double lambda_s = 0.01;   // contextual stiffness
    double alpha = 1.0;       // directional coherence
    double beta = 0.1;        // magnitude coherence
    double lambda_1 = 1e-3;   // L1 tax on z1
    double lambda_2 = 1e-3;   // L1 tax on z2
    double omega_rare = 10.0; // reconstruction weight of label-1 samples

    void validate() const;
};

struct LossBreakdown {
    double recon = 0.0;
    double smooth = 0.0;
    double dir = 0.0;
    double mag = 0.0;
    double tax1 = 0.0;
    double tax2 = 0.0;
    double total = 0.0;
};

// Individual terms; every one is a batch mean.
double recon_loss(const Matrix& x, const Matrix& x_hat, std::span<const int> y, double omega_rare);
double smooth_loss(const Matrix& x_hat_cont);
// A sample whose z1 or z1_hat is the zero vector contributes 1.
double dir_loss(const Matrix& z1_hat, const Matrix& z1);
double mag_loss(const Matrix& z1_hat, const Matrix& z1);
std::pair<double, double> sparsity_tax(const Matrix& z1, const Matrix& z2);

LossBreakdown combine(const LossBreakdown& terms, const LossWeights& w);
LossBreakdown evaluate_loss(const ForwardTrace& t, const Matrix& x, std::span<const int> y,
                            const LossWeights& w, bool dense_enabled = true);

// Loss of the forward pass with the given detached values frozen. This is the
// function the analytic gradients differentiate.
LossBreakdown total_loss(const Matrix& x, std::span<const int> y, const ModelParams& params,
                         const LossWeights& w, const DetachedValues* detached = nullptr);

struct GradientOptions {
    // Off only for verification: lets the residual route feed the dense path.
    bool detach_residual = true;
};

struct LossAndGradients {
    LossBreakdown loss;
    ModelParams grads;  // same shapes as the parameters
    ForwardTrace trace;
};

// Gradients flow through the surviving top-k coordinates only; the gate and
// selection indicators contribute none. Throws naming the parameter when a
// gradient is not finite.
LossAndGradients total_loss_and_gradients(const Matrix& x, std::span<const int> y,
                                          const ModelParams& params, const LossWeights& w,
                                          const GradientOptions& opts = {});

}  // namespace hhsae
