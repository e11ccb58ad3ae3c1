#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

#include "wvad/errors.hpp"

namespace wvad::gmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Diagonal-covariance mixture parameters.
struct GmmParams {
    Vector weights;  // K, non-negative, sums to 1
    Matrix means;    // K x L
    Matrix vars;     // K x L, each >= the variance floor used to fit
};

struct EmOptions {
    int max_iters = 200;
    double tol = 1e-5;        // on the change in average log-likelihood
    double var_floor = 1e-6;
    std::uint64_t seed = 0;   // k-means++ seeding and empty-component reinit
    // Called once per iteration with the parameters whose average
    // log-likelihood is `avg_ll` (i.e. before that iteration's M-step).
    std::function<void(int iter, double avg_ll, const GmmParams& params)> on_iteration;
};

struct EmResult {
    GmmParams params;
    double avg_log_likelihood = 0.0;
    int iterations = 0;
    std::vector<int> reinit_iters;  // iterations where an empty component was re-seeded
};

EmResult em_fit(const Matrix& latents, int k, const EmOptions& opts = {});

// Posterior p(y=k | x) per row, log-domain with log-sum-exp.
Matrix responsibilities(const GmmParams& params, const Matrix& latents);

// Mean over rows of log p(x) under the mixture.
double avg_log_likelihood(const GmmParams& params, const Matrix& latents);

}  // namespace wvad::gmm
