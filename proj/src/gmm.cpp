#include "wvad/gmm.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "wvad/rng.hpp"

namespace wvad::gmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

void check_params(const GmmParams& p) {
    const auto k = p.weights.size();
    if (k < 1 || p.means.rows() != k || p.vars.rows() != k ||
        p.means.cols() != p.vars.cols()) {
        throw DimensionError("gmm: inconsistent parameter shapes");
    }
    for (Eigen::Index c = 0; c < k; ++c) {
        for (Eigen::Index l = 0; l < p.vars.cols(); ++l) {
            const double v = p.vars(c, l);
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw NumericError("gmm: component " + std::to_string(c) +
                                   " has non-positive variance");
            }
        }
    }
}

// Per-row, per-component log(pi_k) + log N(x | mu_k, var_k), N x K.
Matrix weighted_log_density(const GmmParams& p, const Matrix& x) {
    const Eigen::Index n = x.rows();
    const Eigen::Index k = p.weights.size();
    const Eigen::Index dim = p.means.cols();
    if (x.cols() != dim) {
        throw DimensionError("gmm: latents have " + std::to_string(x.cols()) +
                             " columns, parameters expect " + std::to_string(dim));
    }
    Matrix out(n, k);
    for (Eigen::Index c = 0; c < k; ++c) {
        double log_norm = -0.5 * static_cast<double>(dim) * kLog2Pi;
        for (Eigen::Index l = 0; l < dim; ++l) log_norm -= 0.5 * std::log(p.vars(c, l));
        const double log_w =
            p.weights[c] > 0.0 ? std::log(p.weights[c]) : -std::numeric_limits<double>::infinity();
        for (Eigen::Index r = 0; r < n; ++r) {
            double quad = 0.0;
            for (Eigen::Index l = 0; l < dim; ++l) {
                const double d = x(r, l) - p.means(c, l);
                quad += d * d / p.vars(c, l);
            }
            out(r, c) = log_w + log_norm - 0.5 * quad;
        }
    }
    return out;
}

double logsumexp_row(const Eigen::RowVectorXd& v) {
    const double mx = v.maxCoeff();
    if (!std::isfinite(mx)) return mx;  // all -inf stays -inf
    return mx + std::log((v.array() - mx).exp().sum());
}

// k-means++ seeding: first mean uniform, the rest proportional to the
// squared distance to the nearest already-chosen mean.
Matrix seed_means(const Matrix& x, int k, std::mt19937_64& rng) {
    const Eigen::Index n = x.rows();
    Matrix means(k, x.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    means.row(0) = x.row(first(rng));
    Vector d2 = (x.rowwise() - means.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick;
        if (total <= 0.0) {
            pick = first(rng);  // all points coincide with chosen means
        } else {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            pick = n - 1;
            for (Eigen::Index r = 0; r < n; ++r) {
                target -= d2[r];
                if (target <= 0.0) {
                    pick = r;
                    break;
                }
            }
        }
        means.row(c) = x.row(pick);
        d2 = d2.cwiseMin((x.rowwise() - means.row(c)).rowwise().squaredNorm());
    }
    return means;
}

}  // namespace

Matrix responsibilities(const GmmParams& params, const Matrix& latents) {
    check_params(params);
    const Matrix wld = weighted_log_density(params, latents);
    Matrix resp(wld.rows(), wld.cols());
    for (Eigen::Index r = 0; r < wld.rows(); ++r) {
        const double lse = logsumexp_row(wld.row(r));
        if (!std::isfinite(lse)) {
            throw NumericError("gmm: all components underflow for row " + std::to_string(r));
        }
        resp.row(r) = (wld.row(r).array() - lse).exp();
    }
    return resp;
}

double avg_log_likelihood(const GmmParams& params, const Matrix& latents) {
    check_params(params);
    const Matrix wld = weighted_log_density(params, latents);
    double total = 0.0;
    for (Eigen::Index r = 0; r < wld.rows(); ++r) total += logsumexp_row(wld.row(r));
    return total / static_cast<double>(latents.rows());
}

EmResult em_fit(const Matrix& latents, int k, const EmOptions& opts) {
    const Eigen::Index n = latents.rows();
    const Eigen::Index dim = latents.cols();
    if (k < 1) throw ValidationError("em_fit: K must be positive");
    if (dim < 1) throw ValidationError("em_fit: latent dimension must be positive");
    if (n < k) {
        throw ValidationError("em_fit: " + std::to_string(n) + " rows < K=" + std::to_string(k));
    }
    if (!latents.allFinite()) throw ValidationError("em_fit: non-finite latents");

    auto rng = make_rng(opts.seed);

    // Global per-dimension variance doubles as the initial component variance
    // and the reinit variance for emptied components.
    const Eigen::RowVectorXd col_mean = latents.colwise().mean();
    Eigen::RowVectorXd global_var =
        (latents.rowwise() - col_mean).array().square().colwise().mean();
    global_var = global_var.cwiseMax(opts.var_floor);

    EmResult result;
    GmmParams& p = result.params;
    p.weights = Vector::Constant(k, 1.0 / static_cast<double>(k));
    p.means = seed_means(latents, k, rng);
    p.vars = global_var.replicate(k, 1);

    double prev_ll = -std::numeric_limits<double>::infinity();
    bool converged = false;
    for (int iter = 0; iter < opts.max_iters; ++iter) {
        // E-step quantities and the likelihood of the current parameters.
        const Matrix wld = weighted_log_density(p, latents);
        Matrix resp(n, k);
        double ll = 0.0;
        for (Eigen::Index r = 0; r < n; ++r) {
            const double lse = logsumexp_row(wld.row(r));
            if (!std::isfinite(lse)) {
                throw NumericError("em_fit: likelihood underflow at row " + std::to_string(r));
            }
            ll += lse;
            resp.row(r) = (wld.row(r).array() - lse).exp();
        }
        ll /= static_cast<double>(n);
        if (opts.on_iteration) opts.on_iteration(iter, ll, p);
        if (iter > 0 && std::abs(ll - prev_ll) < opts.tol) {
            result.avg_log_likelihood = ll;
            result.iterations = iter;
            converged = true;
            break;
        }
        prev_ll = ll;

        // M-step.
        const Vector nk = resp.colwise().sum().transpose();
        std::uniform_int_distribution<Eigen::Index> pick_row(0, n - 1);
        for (int c = 0; c < k; ++c) {
            if (nk[c] <= 1e-12) {
                // Dead component: re-seed it from a random data point.
                p.means.row(c) = latents.row(pick_row(rng));
                p.vars.row(c) = global_var;
                p.weights[c] = 1.0 / static_cast<double>(n);
                result.reinit_iters.push_back(iter);
                std::fprintf(stderr, "[gmm] iter %d: component %d emptied, re-seeded\n", iter, c);
                continue;
            }
            p.weights[c] = nk[c] / static_cast<double>(n);
            p.means.row(c) = (resp.col(c).transpose() * latents) / nk[c];
            Eigen::RowVectorXd var =
                (resp.col(c).transpose() *
                 (latents.rowwise() - p.means.row(c)).array().square().matrix()) /
                nk[c];
            p.vars.row(c) = var.cwiseMax(opts.var_floor);
        }
        p.weights /= p.weights.sum();
    }
    if (!converged) {
        result.avg_log_likelihood = avg_log_likelihood(p, latents);
        result.iterations = opts.max_iters;
    }
    return result;
}

}  // namespace wvad::gmm
