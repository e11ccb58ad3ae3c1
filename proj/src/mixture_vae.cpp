#include "wvad/mixture_vae.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace wvad {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

Vector log_softmax(const Vector& v) {
    const double mx = v.maxCoeff();
    const double lse = mx + std::log((v.array() - mx).exp().sum());
    return v.array() - lse;
}

}  // namespace

Vector MixturePrior::weights() const {
    return log_softmax(logits).array().exp();
}

MixtureVae::MixtureVae(int k, const std::vector<int>& encoder_widths) : widths_(encoder_widths) {
    if (k < 1) throw ValidationError("MixtureVae: K must be >= 1");
    if (widths_.size() < 2) throw ValidationError("MixtureVae: need widths [D, ..., L]");
    for (int w : widths_) {
        if (w < 1) throw ValidationError("MixtureVae: widths must be positive");
    }
    const int latent = widths_.back();

    std::vector<int> enc_net = widths_;
    enc_net.back() = 2 * latent;  // mean | logvar
    encoder_ = nn::DenseNet::mlp(enc_net, nn::Activation::Softplus, nn::Activation::Linear);

    std::vector<int> dec_net(widths_.rbegin(), widths_.rend());
    decoder_ = nn::DenseNet::mlp(dec_net, nn::Activation::Softplus, nn::Activation::Linear);

    prior_.logits = Vector::Zero(k);
    prior_.means = Matrix::Zero(k, latent);
    prior_.logvars = Matrix::Zero(k, latent);
}

std::vector<int> MixtureVae::derived_widths(int d) {
    if (d < 1) throw ValidationError("MixtureVae: data dimension must be >= 1");
    return {d, std::max(1, d / 2), std::max(1, d / 4), std::max(1, d / 8)};
}

void MixtureVae::init_params(std::mt19937_64& encoder_rng, std::mt19937_64& decoder_rng) {
    encoder_.init_params(encoder_rng);
    decoder_.init_params(decoder_rng);
}

MixtureVae::Encoded MixtureVae::encode(const Matrix& x, const Matrix* eps,
                                       nn::ForwardCache* cache) const {
    if (!x.allFinite()) throw ValidationError("encode: non-finite input");
    const int latent = latent_dim();
    const Matrix out = encoder_.forward(x, cache);
    Encoded enc;
    enc.mean = out.leftCols(latent);
    enc.logvar = out.rightCols(latent);
    if (eps) {
        if (eps->rows() != x.rows() || eps->cols() != latent) {
            throw DimensionError("encode: eps must be B x L");
        }
        enc.z = enc.mean.array() + (enc.logvar.array() / 2.0).exp() * eps->array();
    } else {
        enc.z = enc.mean;
    }
    return enc;
}

Matrix MixtureVae::decode(const Matrix& z, nn::ForwardCache* cache) const {
    // A non-finite z means the encoder blew up mid-training, not bad user
    // input, so this is a numeric failure rather than a validation one.
    if (!z.allFinite()) throw NumericError("decode: non-finite latent");
    return decoder_.forward(z, cache);
}

MixtureVae::ClusterPosterior MixtureVae::cluster_posterior(const Matrix& z) const {
    const Eigen::Index b = z.rows();
    const Eigen::Index k = prior_.k();
    const Eigen::Index l = prior_.l();
    if (z.cols() != l) throw DimensionError("cluster_posterior: z must be B x L");

    const Vector log_pi = log_softmax(prior_.logits);
    ClusterPosterior post;
    post.a.resize(b, k);
    for (Eigen::Index c = 0; c < k; ++c) {
        double log_norm = log_pi[c] - 0.5 * static_cast<double>(l) * kLog2Pi -
                          0.5 * prior_.logvars.row(c).sum();
        for (Eigen::Index r = 0; r < b; ++r) {
            double quad = 0.0;
            for (Eigen::Index d = 0; d < l; ++d) {
                const double diff = z(r, d) - prior_.means(c, d);
                quad += diff * diff * std::exp(-prior_.logvars(c, d));
            }
            post.a(r, c) = log_norm - 0.5 * quad;
        }
    }
    post.y = nn::apply_activation(nn::Activation::Softmax, post.a);
    if (!post.y.allFinite()) {
        throw NumericError("cluster_posterior: non-finite responsibilities");
    }
    return post;
}

void MixtureVae::cluster_posterior_backward(const Matrix& z, const ClusterPosterior& post,
                                            const Matrix& grad_y, Matrix& grad_z,
                                            PriorGrad& prior_grad) const {
    const Eigen::Index b = z.rows();
    const Eigen::Index k = prior_.k();
    const Eigen::Index l = prior_.l();
    if (grad_y.rows() != b || grad_y.cols() != k) {
        throw DimensionError("cluster_posterior_backward: grad_y must be B x K");
    }
    const Vector pi = prior_.weights();
    const Matrix da = nn::activation_backward(nn::Activation::Softmax, post.y, grad_y);
    for (Eigen::Index r = 0; r < b; ++r) {
        const double da_sum = da.row(r).sum();
        for (Eigen::Index c = 0; c < k; ++c) {
            prior_grad.logits[c] += da(r, c) - pi[c] * da_sum;
            const double dac = da(r, c);
            if (dac == 0.0) continue;
            for (Eigen::Index d = 0; d < l; ++d) {
                const double inv_var = std::exp(-prior_.logvars(c, d));
                const double t = (z(r, d) - prior_.means(c, d)) * inv_var;
                grad_z(r, d) -= dac * t;
                prior_grad.means(c, d) += dac * t;
                prior_grad.logvars(c, d) +=
                    dac * (-0.5 + 0.5 * (z(r, d) - prior_.means(c, d)) * t);
            }
        }
    }
}

Matrix MixtureVae::gaussian_kl(const Matrix& mean, const Matrix& logvar) const {
    const Eigen::Index b = mean.rows();
    const Eigen::Index k = prior_.k();
    const Eigen::Index l = prior_.l();
    if (mean.cols() != l || logvar.rows() != b || logvar.cols() != l) {
        throw DimensionError("gaussian_kl: mean/logvar must be B x L");
    }
    Matrix g = Matrix::Zero(b, k);
    for (Eigen::Index r = 0; r < b; ++r) {
        for (Eigen::Index c = 0; c < k; ++c) {
            double acc = 0.0;
            for (Eigen::Index d = 0; d < l; ++d) {
                const double u = prior_.logvars(c, d);
                const double diff = mean(r, d) - prior_.means(c, d);
                acc += u - logvar(r, d) +
                       (std::exp(logvar(r, d)) + diff * diff) * std::exp(-u) - 1.0;
            }
            g(r, c) = 0.5 * acc;
        }
    }
    return g;
}

void MixtureVae::gaussian_kl_backward(const Matrix& mean, const Matrix& logvar,
                                      const Matrix& grad_g, Matrix& grad_mean,
                                      Matrix& grad_logvar, PriorGrad& prior_grad) const {
    const Eigen::Index b = mean.rows();
    const Eigen::Index k = prior_.k();
    const Eigen::Index l = prior_.l();
    if (grad_g.rows() != b || grad_g.cols() != k) {
        throw DimensionError("gaussian_kl_backward: grad_g must be B x K");
    }
    for (Eigen::Index r = 0; r < b; ++r) {
        for (Eigen::Index c = 0; c < k; ++c) {
            const double dg = grad_g(r, c);
            if (dg == 0.0) continue;
            for (Eigen::Index d = 0; d < l; ++d) {
                const double inv_var = std::exp(-prior_.logvars(c, d));
                const double diff = mean(r, d) - prior_.means(c, d);
                const double ev = std::exp(logvar(r, d));
                grad_mean(r, d) += dg * diff * inv_var;
                grad_logvar(r, d) += dg * 0.5 * (ev * inv_var - 1.0);
                prior_grad.means(c, d) -= dg * diff * inv_var;
                prior_grad.logvars(c, d) +=
                    dg * 0.5 * (1.0 - (ev + diff * diff) * inv_var);
            }
        }
    }
}

VaeGrads MixtureVae::zero_grads() const {
    VaeGrads g;
    g.encoder = encoder_.zero_grads();
    g.decoder = decoder_.zero_grads();
    g.prior.logits = Vector::Zero(prior_.k());
    g.prior.means = Matrix::Zero(prior_.k(), prior_.l());
    g.prior.logvars = Matrix::Zero(prior_.k(), prior_.l());
    return g;
}

std::vector<nn::ParamBlock> MixtureVae::param_blocks(VaeGrads& grads) {
    auto blocks = encoder_.param_blocks(grads.encoder, "encoder");
    auto dec = decoder_.param_blocks(grads.decoder, "decoder");
    blocks.insert(blocks.end(), dec.begin(), dec.end());
    blocks.push_back({"prior.logits", prior_.logits.data(), grads.prior.logits.data(),
                      prior_.logits.size()});
    blocks.push_back(
        {"prior.means", prior_.means.data(), grads.prior.means.data(), prior_.means.size()});
    blocks.push_back({"prior.logvars", prior_.logvars.data(), grads.prior.logvars.data(),
                      prior_.logvars.size()});
    return blocks;
}

BatchForward vae_forward(const MixtureVae& model, const Matrix& x, const Matrix* eps) {
    BatchForward fwd;
    fwd.enc = model.encode(x, eps, &fwd.enc_cache);
    fwd.recon = model.decode(fwd.enc.z, &fwd.dec_cache);
    fwd.post = model.cluster_posterior(fwd.enc.z);
    return fwd;
}

double ElboTerms::mean_loss() const {
    return loss.size() > 0 ? loss.mean() : 0.0;
}

ElboTerms elbo_terms(const MixtureVae& model, const Matrix& x, const BatchForward& fwd,
                     const std::vector<int>& weak) {
    const Eigen::Index b = x.rows();
    if (static_cast<Eigen::Index>(weak.size()) != b) {
        throw DimensionError("elbo_terms: weak labels must match batch rows");
    }
    const Vector log_pi = log_softmax(model.prior().logits);
    const Matrix g = model.gaussian_kl(fwd.enc.mean, fwd.enc.logvar);

    ElboTerms t;
    t.r.resize(b);
    t.kl_cat.resize(b);
    t.kl_z.resize(b);
    t.loss.resize(b);
    for (Eigen::Index r = 0; r < b; ++r) {
        t.r[r] = 0.5 * (x.row(r) - fwd.recon.row(r)).squaredNorm();
        double cat = 0.0;
        for (Eigen::Index c = 0; c < fwd.post.y.cols(); ++c) {
            const double yk = fwd.post.y(r, c);
            if (yk > 0.0) cat += yk * (std::log(yk) - log_pi[c]);
        }
        t.kl_cat[r] = cat;
        t.kl_z[r] = fwd.post.y.row(r).dot(g.row(r));
        if (weak[static_cast<std::size_t>(r)] == 0) {
            t.loss[r] = t.r[r] + t.kl_cat[r] + t.kl_z[r];
        } else {
            if (t.r[r] < kClampEps) ++t.clamp_recon;
            if (t.kl_z[r] < kClampEps) ++t.clamp_klz;
            t.loss[r] = 1.0 / (t.r[r] + kClampEps) + t.kl_cat[r] + 1.0 / (t.kl_z[r] + kClampEps);
        }
        if (!std::isfinite(t.loss[r])) {
            std::ostringstream msg;
            msg << "elbo: non-finite loss at row " << r << " (recon=" << t.r[r]
                << ", kl_cat=" << t.kl_cat[r] << ", kl_z=" << t.kl_z[r] << ")";
            throw NumericError(msg.str());
        }
    }
    return t;
}

void elbo_backward(const MixtureVae& model, const Matrix& x, const BatchForward& fwd,
                   const std::vector<int>& weak, const Matrix* extra_dy, const Matrix* extra_dz,
                   const Matrix* extra_dxhat, VaeGrads& grads) {
    const Eigen::Index b = x.rows();
    const Eigen::Index k = model.prior().k();
    const Eigen::Index l = model.prior().l();
    if (static_cast<Eigen::Index>(weak.size()) != b) {
        throw DimensionError("elbo_backward: weak labels must match batch rows");
    }
    const double w = 1.0 / static_cast<double>(b);
    const Vector log_pi = log_softmax(model.prior().logits);
    const Vector pi = log_pi.array().exp();
    const Matrix& y = fwd.post.y;
    const Matrix g = model.gaussian_kl(fwd.enc.mean, fwd.enc.logvar);

    // Per-row scale of the recon and z-KL terms: 1 for unlabeled rows,
    // -1/(t + eps)^2 for inverted anomaly terms.
    Vector s_r(b), s_z(b);
    for (Eigen::Index r = 0; r < b; ++r) {
        if (weak[static_cast<std::size_t>(r)] == 0) {
            s_r[r] = 1.0;
            s_z[r] = 1.0;
        } else {
            const double rr = 0.5 * (x.row(r) - fwd.recon.row(r)).squaredNorm();
            const double klz = y.row(r).dot(g.row(r));
            s_r[r] = -1.0 / ((rr + kClampEps) * (rr + kClampEps));
            s_z[r] = -1.0 / ((klz + kClampEps) * (klz + kClampEps));
        }
    }

    // d(loss)/dy: categorical KL, the y-weighting of the Gaussian KL, and
    // the injected feature-path gradient.
    Matrix dy = extra_dy ? *extra_dy : Matrix::Zero(b, k);
    for (Eigen::Index r = 0; r < b; ++r) {
        for (Eigen::Index c = 0; c < k; ++c) {
            const double yk = y(r, c);
            const double log_y = yk > 0.0 ? std::log(yk) : -745.0;  // saturated guard
            dy(r, c) += w * (log_y - log_pi[c] + 1.0) + w * s_z[r] * g(r, c);
        }
    }

    // y -> (z, prior) through the softmax over log-joint densities.
    Matrix dz = extra_dz ? *extra_dz : Matrix::Zero(b, l);
    model.cluster_posterior_backward(fwd.enc.z, fwd.post, dy, dz, grads.prior);

    // Direct dependence of the categorical KL on pi (through the logits).
    for (Eigen::Index r = 0; r < b; ++r) {
        for (Eigen::Index c = 0; c < k; ++c) {
            grads.prior.logits[c] += w * (pi[c] - y(r, c));
        }
    }

    // z-KL: dG(r, c) = w * s_z_r * y(r, c).
    Matrix dg(b, k);
    for (Eigen::Index r = 0; r < b; ++r) dg.row(r) = w * s_z[r] * y.row(r);
    Matrix dmean = Matrix::Zero(b, l);
    Matrix dlogvar = Matrix::Zero(b, l);
    model.gaussian_kl_backward(fwd.enc.mean, fwd.enc.logvar, dg, dmean, dlogvar, grads.prior);

    // Reconstruction term plus the injected feature-path gradient on x_hat.
    Matrix dxhat = extra_dxhat ? *extra_dxhat : Matrix::Zero(b, x.cols());
    for (Eigen::Index r = 0; r < b; ++r) {
        dxhat.row(r) += w * s_r[r] * (fwd.recon.row(r) - x.row(r));
    }
    dz += model.decoder().backward(fwd.dec_cache, dxhat, grads.decoder);

    // Reparameterization: z = mean + exp(logvar/2) .* eps, so
    // dmean += dz and dlogvar += dz .* (z - mean) / 2.
    dmean += dz;
    dlogvar.array() += dz.array() * (fwd.enc.z - fwd.enc.mean).array() / 2.0;

    Matrix enc_grad(b, 2 * l);
    enc_grad << dmean, dlogvar;
    model.encoder().backward(fwd.enc_cache, enc_grad, grads.encoder);
}

namespace {

ElboResult run_elbo(const MixtureVae& model, const Matrix& x, const Matrix& eps, int weak_value,
                    VaeGrads* grads) {
    const std::vector<int> weak(static_cast<std::size_t>(x.rows()), weak_value);
    const BatchForward fwd = vae_forward(model, x, &eps);
    const ElboTerms t = elbo_terms(model, x, fwd, weak);
    if (grads) elbo_backward(model, x, fwd, weak, nullptr, nullptr, nullptr, *grads);
    ElboResult res;
    res.loss = t.mean_loss();
    res.mean_r = t.r.mean();
    res.mean_kl_cat = t.kl_cat.mean();
    res.mean_kl_z = t.kl_z.mean();
    res.clamp_recon = t.clamp_recon;
    res.clamp_klz = t.clamp_klz;
    return res;
}

}  // namespace

ElboResult elbo_unlabeled(const MixtureVae& model, const Matrix& x, const Matrix& eps,
                          VaeGrads* grads) {
    return run_elbo(model, x, eps, 0, grads);
}

ElboResult elbo_labeled_anomaly(const MixtureVae& model, const Matrix& x, const Matrix& eps,
                                VaeGrads* grads) {
    return run_elbo(model, x, eps, 1, grads);
}

PretrainResult pretrain_batch(const MixtureVae& model, const Matrix& x,
                              const std::vector<int>& weak, VaeGrads* grads) {
    const Eigen::Index b = x.rows();
    if (static_cast<Eigen::Index>(weak.size()) != b) {
        throw DimensionError("pretrain_batch: weak labels must match batch rows");
    }
    Eigen::Index n_u = 0, n_a = 0;
    for (int wl : weak) {
        if (wl == 0) ++n_u;
        else if (wl == 1) ++n_a;
        else throw ValidationError("pretrain_batch: weak labels must be 0 or 1");
    }

    // Vanilla autoencoder mode: z = mean, no sampling.
    nn::ForwardCache enc_cache, dec_cache;
    const MixtureVae::Encoded enc = model.encode(x, nullptr, &enc_cache);
    const Matrix recon = model.decode(enc.z, &dec_cache);

    PretrainResult res;
    res.anomaly_term_omitted = (n_a == 0);
    Vector rho(b);
    for (Eigen::Index r = 0; r < b; ++r) {
        rho[r] = (x.row(r) - recon.row(r)).squaredNorm();
        if (weak[static_cast<std::size_t>(r)] == 0) {
            res.mean_recon_u += rho[r];
        } else {
            if (rho[r] < kClampEps) ++res.clamp_recon;
            res.mean_inv_recon_a += 1.0 / (rho[r] + kClampEps);
        }
    }
    if (n_u > 0) res.mean_recon_u /= static_cast<double>(n_u);
    if (n_a > 0) res.mean_inv_recon_a /= static_cast<double>(n_a);
    res.loss = res.mean_recon_u + res.mean_inv_recon_a;
    if (!std::isfinite(res.loss)) {
        throw NumericError("pretrain_batch: non-finite loss");
    }

    if (grads) {
        Matrix dxhat(b, x.cols());
        for (Eigen::Index r = 0; r < b; ++r) {
            if (weak[static_cast<std::size_t>(r)] == 0) {
                dxhat.row(r) = 2.0 / static_cast<double>(n_u) * (recon.row(r) - x.row(r));
            } else {
                const double guarded = rho[r] + kClampEps;
                dxhat.row(r) = -2.0 / (guarded * guarded * static_cast<double>(n_a)) *
                               (recon.row(r) - x.row(r));
            }
        }
        const Matrix dz = model.decoder().backward(dec_cache, dxhat, grads->decoder);
        Matrix enc_grad(b, 2 * model.latent_dim());
        enc_grad << dz, Matrix::Zero(b, model.latent_dim());
        model.encoder().backward(enc_cache, enc_grad, grads->encoder);
    }
    return res;
}

}  // namespace wvad
