#include "wvad/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace wvad {

namespace {

void check_pair(const Vector& x, const Vector& x_hat, const char* what) {
    if (x.size() == 0) throw DimensionError(std::string(what) + ": empty input");
    if (x.size() != x_hat.size()) {
        throw DimensionError(std::string(what) + ": x has " + std::to_string(x.size()) +
                             " entries, x_hat has " + std::to_string(x_hat.size()));
    }
}

}  // namespace

double cluster_entropy(const Vector& y) {
    if (y.size() == 0) throw DimensionError("cluster_entropy: empty posterior");
    double h = 0.0;
    for (Eigen::Index k = 0; k < y.size(); ++k) {
        const double p = y[k];
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

double relative_recon_error(const Vector& x, const Vector& x_hat,
                            FeatureGuardCounters* counters) {
    check_pair(x, x_hat, "relative_recon_error");
    const double num = (x - x_hat).squaredNorm();
    double den = x.squaredNorm();
    if (den < kNormGuard) {
        den = kNormGuard;
        if (counters) ++counters->recon_denominator;
    }
    return num / den;
}

double cosine_similarity(const Vector& x, const Vector& x_hat, FeatureGuardCounters* counters) {
    check_pair(x, x_hat, "cosine_similarity");
    double den = x.norm() * x_hat.norm();
    if (den < kNormGuard) {
        den = kNormGuard;
        if (counters) ++counters->cosine_norm;
    }
    return std::clamp(x.dot(x_hat) / den, -1.0, 1.0);
}

Vector assemble_features(const Vector& y, const Vector& z, const Vector& x, const Vector& x_hat,
                         FeatureGuardCounters* counters) {
    if (y.size() == 0 || z.size() == 0) {
        throw DimensionError("assemble_features: empty y or z");
    }
    Vector f(y.size() + z.size() + 3);
    f.head(y.size()) = y;
    f.segment(y.size(), z.size()) = z;
    f[y.size() + z.size()] = cluster_entropy(y);
    f[y.size() + z.size() + 1] = relative_recon_error(x, x_hat, counters);
    f[y.size() + z.size() + 2] = cosine_similarity(x, x_hat, counters);
    return f;
}

Matrix assemble_feature_batch(const Matrix& y, const Matrix& z, const Matrix& x,
                              const Matrix& x_hat, FeatureGuardCounters* counters) {
    const Eigen::Index b = y.rows();
    if (z.rows() != b || x.rows() != b || x_hat.rows() != b) {
        throw DimensionError("assemble_feature_batch: row counts differ");
    }
    Matrix f(b, y.cols() + z.cols() + 3);
    for (Eigen::Index r = 0; r < b; ++r) {
        f.row(r) = assemble_features(y.row(r), z.row(r), x.row(r), x_hat.row(r), counters);
    }
    return f;
}

void feature_batch_backward(const Matrix& y, const Matrix& z, const Matrix& x,
                            const Matrix& x_hat, const Matrix& grad_f, Matrix& grad_y,
                            Matrix& grad_z, Matrix& grad_x_hat) {
    const Eigen::Index b = y.rows();
    const Eigen::Index k = y.cols();
    const Eigen::Index l = z.cols();
    if (grad_f.rows() != b || grad_f.cols() != k + l + 3) {
        throw DimensionError("feature_batch_backward: grad_f shape mismatch");
    }
    if (grad_y.rows() != b || grad_y.cols() != k || grad_z.rows() != b || grad_z.cols() != l ||
        grad_x_hat.rows() != b || grad_x_hat.cols() != x_hat.cols()) {
        throw DimensionError("feature_batch_backward: gradient buffers mis-sized");
    }
    for (Eigen::Index r = 0; r < b; ++r) {
        // Pass-through slots.
        grad_y.row(r) += grad_f.row(r).head(k);
        grad_z.row(r) += grad_f.row(r).segment(k, l);

        // f_e = -sum y log y: d/dy_k = -(log y_k + 1). Softmax outputs are
        // strictly positive; a hard zero contributes nothing to f_e and is
        // given zero gradient.
        const double dfe = grad_f(r, k + l);
        if (dfe != 0.0) {
            for (Eigen::Index j = 0; j < k; ++j) {
                if (y(r, j) > 0.0) grad_y(r, j) += dfe * (-(std::log(y(r, j)) + 1.0));
            }
        }

        // f_r = ||x - x_hat||^2 / den, den independent of x_hat.
        const double dfr = grad_f(r, k + l + 1);
        if (dfr != 0.0) {
            const double den = std::max(x.row(r).squaredNorm(), kNormGuard);
            grad_x_hat.row(r) += dfr * 2.0 / den * (x_hat.row(r) - x.row(r));
        }

        // f_c = dot / (||x|| ||x_hat||); the clamp is inactive except for
        // rounding at +-1, where we keep the raw derivative.
        const double dfc = grad_f(r, k + l + 2);
        if (dfc != 0.0) {
            const double nx = x.row(r).norm();
            const double nh = x_hat.row(r).norm();
            const double den = nx * nh;
            if (den < kNormGuard) {
                grad_x_hat.row(r) += dfc / kNormGuard * x.row(r);
            } else {
                const double dot = x.row(r).dot(x_hat.row(r));
                grad_x_hat.row(r) +=
                    dfc * (x.row(r) / den - dot / (den * nh * nh) * x_hat.row(r));
            }
        }
    }
}

}  // namespace wvad
