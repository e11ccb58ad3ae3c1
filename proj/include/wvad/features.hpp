#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "wvad/errors.hpp"

namespace wvad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Guard thresholds for near-zero norms in f_r and f_c.
inline constexpr double kNormGuard = 1e-12;

// Bumped whenever a guard fires; purely diagnostic.
struct FeatureGuardCounters {
    std::uint64_t recon_denominator = 0;  // ||x||^2 below guard in f_r
    std::uint64_t cosine_norm = 0;        // ||x|| or ||x_hat|| below guard in f_c
};

// Shannon entropy of the cluster posterior in nats; 0*log(0) := 0.
double cluster_entropy(const Vector& y);

// f_r = ||x - x_hat||^2 / ||x||^2 with an epsilon-guarded denominator.
double relative_recon_error(const Vector& x, const Vector& x_hat,
                            FeatureGuardCounters* counters = nullptr);

// Standard cosine similarity, clamped to [-1, 1].
double cosine_similarity(const Vector& x, const Vector& x_hat,
                         FeatureGuardCounters* counters = nullptr);

// Concatenation [y; z; f_e; f_r; f_c], length K + L + 3.
Vector assemble_features(const Vector& y, const Vector& z, const Vector& x, const Vector& x_hat,
                         FeatureGuardCounters* counters = nullptr);

// Batch rows assembled in one call; Y is B x K, Z is B x L, X / X_hat are B x D.
Matrix assemble_feature_batch(const Matrix& y, const Matrix& z, const Matrix& x,
                              const Matrix& x_hat, FeatureGuardCounters* counters = nullptr);

// Backward pass of assemble_feature_batch. `grad_f` is dLoss/d(features),
// B x (K+L+3). Accumulates into the per-input gradients (+=), all of which
// must be pre-sized to match their inputs.
void feature_batch_backward(const Matrix& y, const Matrix& z, const Matrix& x,
                            const Matrix& x_hat, const Matrix& grad_f, Matrix& grad_y,
                            Matrix& grad_z, Matrix& grad_x_hat);

}  // namespace wvad
