#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "wvad/nn.hpp"

namespace wvad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// epsilon for the reciprocal guards in the labeled-anomaly and pretraining
// losses; operands below this also bump the clamp counters.
inline constexpr double kClampEps = 1e-6;

// Trainable mixture prior p(y) = Cat(softmax(logits)), p(z|y=k) =
// N(means_k, exp(logvars_k) diag).
struct MixturePrior {
    Vector logits;   // K
    Matrix means;    // K x L
    Matrix logvars;  // K x L

    Eigen::Index k() const { return logits.size(); }
    Eigen::Index l() const { return means.cols(); }
    Vector weights() const;  // softmax(logits)
};

struct PriorGrad {
    Vector logits;
    Matrix means;
    Matrix logvars;
};

// Gradient buffers for everything elbo_backward touches.
struct VaeGrads {
    std::vector<nn::LayerGrad> encoder;
    std::vector<nn::LayerGrad> decoder;
    PriorGrad prior;
};

class MixtureVae {
public:
    MixtureVae() = default;

    // encoder_widths runs [D, ..., L]; the encoder net emits 2L values
    // (mean | logvar) and the decoder mirrors the widths back to D.
    MixtureVae(int k, const std::vector<int>& encoder_widths);

    // [D, D/2, D/4, D/8] with every width floored at 1.
    static std::vector<int> derived_widths(int d);

    int data_dim() const { return widths_.empty() ? 0 : widths_.front(); }
    int latent_dim() const { return widths_.empty() ? 0 : widths_.back(); }
    int cluster_count() const { return static_cast<int>(prior_.k()); }
    const std::vector<int>& encoder_widths() const { return widths_; }

    nn::DenseNet& encoder() { return encoder_; }
    const nn::DenseNet& encoder() const { return encoder_; }
    nn::DenseNet& decoder() { return decoder_; }
    const nn::DenseNet& decoder() const { return decoder_; }
    MixturePrior& prior() { return prior_; }
    const MixturePrior& prior() const { return prior_; }

    // Separate streams so adding a layer to one net cannot shift the other.
    void init_params(std::mt19937_64& encoder_rng, std::mt19937_64& decoder_rng);

    struct Encoded {
        Matrix mean;    // B x L
        Matrix logvar;  // B x L
        Matrix z;       // B x L
    };

    // eps == nullptr -> deterministic mode, z = mean; otherwise
    // z = mean + exp(logvar/2) .* eps (B x L of standard normal draws).
    Encoded encode(const Matrix& x, const Matrix* eps = nullptr,
                   nn::ForwardCache* cache = nullptr) const;

    Matrix decode(const Matrix& z, nn::ForwardCache* cache = nullptr) const;

    struct ClusterPosterior {
        Matrix y;  // B x K, rows on the simplex
        Matrix a;  // B x K pre-softmax log-joint, kept for the backward pass
    };

    // q(y|x) = p(y|z): y_k proportional to pi_k N(z | means_k, vars_k),
    // computed in the log domain.
    ClusterPosterior cluster_posterior(const Matrix& z) const;

    // Accumulates d(loss)/dz and prior gradients given d(loss)/dy.
    void cluster_posterior_backward(const Matrix& z, const ClusterPosterior& post,
                                    const Matrix& grad_y, Matrix& grad_z,
                                    PriorGrad& prior_grad) const;

    // G(r, k) = KL(N(mean_r, exp(logvar_r)) || N(means_k, exp(logvars_k))).
    Matrix gaussian_kl(const Matrix& mean, const Matrix& logvar) const;

    void gaussian_kl_backward(const Matrix& mean, const Matrix& logvar, const Matrix& grad_g,
                              Matrix& grad_mean, Matrix& grad_logvar,
                              PriorGrad& prior_grad) const;

    VaeGrads zero_grads() const;

    // Encoder, decoder, then prior blocks; order is the checkpoint order.
    std::vector<nn::ParamBlock> param_blocks(VaeGrads& grads);

private:
    std::vector<int> widths_;  // [D, ..., L]
    nn::DenseNet encoder_;
    nn::DenseNet decoder_;
    MixturePrior prior_;
};

// One batch through encoder, decoder, and cluster posterior, caches kept.
struct BatchForward {
    nn::ForwardCache enc_cache;
    nn::ForwardCache dec_cache;
    MixtureVae::Encoded enc;
    Matrix recon;  // B x D
    MixtureVae::ClusterPosterior post;
};

BatchForward vae_forward(const MixtureVae& model, const Matrix& x, const Matrix* eps);

// Per-row negative-ELBO terms. Rows with weak label 0 use the unlabeled
// objective R + KLcat + KLz with R = 0.5 ||x - x_hat||^2; rows with weak
// label 1 use the inverted form 1/(R + eps) + KLcat + 1/(KLz + eps).
struct ElboTerms {
    Vector r;       // raw 0.5 ||x - x_hat||^2
    Vector kl_cat;  // raw categorical KL
    Vector kl_z;    // raw y-weighted Gaussian KL
    Vector loss;    // per-row loss with inversions applied
    std::uint64_t clamp_recon = 0;  // anomaly rows with R below the clamp eps
    std::uint64_t clamp_klz = 0;    // anomaly rows with KLz below the clamp eps
    double mean_loss() const;
};

ElboTerms elbo_terms(const MixtureVae& model, const Matrix& x, const BatchForward& fwd,
                     const std::vector<int>& weak);

// Backward of mean-over-rows of ElboTerms::loss. The extra_* inputs inject
// externally produced gradients (the score-estimator path of the joint loss)
// w.r.t. y, z and x_hat; pass nullptr when unused. Accumulates into grads.
void elbo_backward(const MixtureVae& model, const Matrix& x, const BatchForward& fwd,
                   const std::vector<int>& weak, const Matrix* extra_dy, const Matrix* extra_dz,
                   const Matrix* extra_dxhat, VaeGrads& grads);

// Convenience wrappers for single-objective batches.
struct ElboResult {
    double loss = 0.0;
    double mean_r = 0.0;
    double mean_kl_cat = 0.0;
    double mean_kl_z = 0.0;
    std::uint64_t clamp_recon = 0;
    std::uint64_t clamp_klz = 0;
};

ElboResult elbo_unlabeled(const MixtureVae& model, const Matrix& x, const Matrix& eps,
                          VaeGrads* grads = nullptr);
ElboResult elbo_labeled_anomaly(const MixtureVae& model, const Matrix& x, const Matrix& eps,
                                VaeGrads* grads = nullptr);

// Pretraining objective: mean_U ||x - x_hat||^2 + mean_A 1/(||x - x_hat||^2
// + eps), in vanilla-autoencoder mode (z = mean, the logvar half of the
// encoder output is unused and receives zero gradient).
struct PretrainResult {
    double loss = 0.0;
    double mean_recon_u = 0.0;     // mean squared residual over unlabeled rows
    double mean_inv_recon_a = 0.0; // mean guarded inverse over anomaly rows
    std::uint64_t clamp_recon = 0;
    bool anomaly_term_omitted = false;  // batch had no labeled anomalies
};

PretrainResult pretrain_batch(const MixtureVae& model, const Matrix& x,
                              const std::vector<int>& weak, VaeGrads* grads = nullptr);

}  // namespace wvad
