#pragma once

#include <random>
#include <vector>

#include "wvad/nn.hpp"

namespace wvad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Mean binary cross-entropy evaluated from pre-activations o (the sigmoid is
// fused in): loss_row = softplus(o) - t*o, grad_row = (sigmoid(o) - t) / B.
struct CeResult {
    double loss = 0.0;
    Matrix grad_pre;  // dLoss/d(o), B x 1
};

CeResult ce_loss_from_preact(const Matrix& o, const std::vector<int>& targets);

// Literal -[t log s + (1-t) log(1-s)]/B; only for cross-checking the stable
// form where it is finite.
double ce_loss_naive(const Vector& s, const std::vector<int>& targets);

// Fully-connected scorer [F, 2F, 2F, 1]; the last layer is linear and the
// sigmoid is applied on read so training can work on pre-activations.
class ScoreEstimator {
public:
    ScoreEstimator() = default;
    explicit ScoreEstimator(int feature_dim);

    int feature_dim() const { return net_.input_dim(); }
    nn::DenseNet& net() { return net_; }
    const nn::DenseNet& net() const { return net_; }

    void init_params(std::mt19937_64& rng) { net_.init_params(rng); }

    // Pre-activation column, B x 1.
    Matrix preactivation(const Matrix& features, nn::ForwardCache* cache = nullptr) const;

    // Scores in (0, 1), one per feature row.
    Vector score(const Matrix& features) const;

private:
    nn::DenseNet net_;
};

}  // namespace wvad
