#include "wvad/score_estimator.hpp"

#include <cmath>
#include <string>

namespace wvad {

CeResult ce_loss_from_preact(const Matrix& o, const std::vector<int>& targets) {
    const Eigen::Index b = o.rows();
    if (o.cols() != 1) throw DimensionError("ce_loss_from_preact: expected a B x 1 column");
    if (b < 1) throw ValidationError("ce_loss_from_preact: empty batch");
    if (static_cast<Eigen::Index>(targets.size()) != b) {
        throw DimensionError("ce_loss_from_preact: targets length mismatch");
    }
    CeResult out;
    out.grad_pre = Matrix::Zero(b, 1);
    for (Eigen::Index r = 0; r < b; ++r) {
        const int t = targets[static_cast<std::size_t>(r)];
        if (t != 0 && t != 1) {
            throw ValidationError("ce_loss_from_preact: target must be 0 or 1, got " +
                                  std::to_string(t));
        }
        const double pre = o(r, 0);
        out.loss += nn::softplus(pre) - static_cast<double>(t) * pre;
        out.grad_pre(r, 0) = (nn::sigmoid(pre) - static_cast<double>(t)) / static_cast<double>(b);
    }
    out.loss /= static_cast<double>(b);
    return out;
}

double ce_loss_naive(const Vector& s, const std::vector<int>& targets) {
    if (s.size() < 1 || static_cast<std::size_t>(s.size()) != targets.size()) {
        throw DimensionError("ce_loss_naive: shape mismatch");
    }
    double loss = 0.0;
    for (Eigen::Index r = 0; r < s.size(); ++r) {
        const double t = static_cast<double>(targets[static_cast<std::size_t>(r)]);
        loss -= t * std::log(s[r]) + (1.0 - t) * std::log(1.0 - s[r]);
    }
    return loss / static_cast<double>(s.size());
}

ScoreEstimator::ScoreEstimator(int feature_dim) {
    if (feature_dim < 1) throw ValidationError("ScoreEstimator: feature dimension must be >= 1");
    net_ = nn::DenseNet::mlp({feature_dim, 2 * feature_dim, 2 * feature_dim, 1},
                             nn::Activation::Softplus, nn::Activation::Linear);
}

Matrix ScoreEstimator::preactivation(const Matrix& features, nn::ForwardCache* cache) const {
    return net_.forward(features, cache);
}

Vector ScoreEstimator::score(const Matrix& features) const {
    const Matrix o = net_.forward(features);
    Vector s(o.rows());
    for (Eigen::Index r = 0; r < o.rows(); ++r) s[r] = nn::sigmoid(o(r, 0));
    return s;
}

}  // namespace wvad
