#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wvad/errors.hpp"

namespace wvad::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { Linear, Softplus, Sigmoid, Softmax };

const char* activation_name(Activation a);

// Numerically stable scalar forms, shared by layers and losses.
double softplus(double x);
double sigmoid(double x);

struct Layer {
    Matrix w;   // out x in
    Vector b;   // out
    Activation act = Activation::Linear;
};

struct LayerGrad {
    Matrix w;
    Vector b;
};

// Everything backward() needs from the matching forward() call.
struct ForwardCache {
    std::vector<Matrix> inputs;  // input to each layer, B x in
    std::vector<Matrix> post;    // post-activation output of each layer, B x out
    Eigen::Index batch = 0;
    bool valid = false;
};

// A mutable view of one parameter array and its gradient, used by the
// optimizer and the finite-difference checker.
struct ParamBlock {
    std::string name;
    double* value = nullptr;
    double* grad = nullptr;
    Eigen::Index size = 0;
};

// Fixed-topology fully-connected network. Widths [d0, d1, ..., dn] give n
// layers; each layer has its own activation tag.
class DenseNet {
public:
    DenseNet() = default;
    DenseNet(std::vector<int> widths, std::vector<Activation> acts);

    // Hidden layers share one activation, the last layer gets `output`.
    static DenseNet mlp(const std::vector<int>& widths, Activation hidden, Activation output);

    int input_dim() const { return widths_.empty() ? 0 : widths_.front(); }
    int output_dim() const { return widths_.empty() ? 0 : widths_.back(); }
    const std::vector<int>& widths() const { return widths_; }
    std::size_t layer_count() const { return layers_.size(); }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }

    // Fan-in-scaled uniform weights, zero biases.
    void init_params(std::mt19937_64& rng);

    Matrix forward(const Matrix& x, ForwardCache* cache = nullptr) const;

    // grad_out is dLoss/d(output), B x out. Accumulates parameter gradients
    // into `grads` (+=) and returns dLoss/d(input).
    Matrix backward(const ForwardCache& cache, const Matrix& grad_out,
                    std::vector<LayerGrad>& grads) const;

    std::vector<LayerGrad> zero_grads() const;
    Eigen::Index param_count() const;

    // Parameter/gradient views in a stable order (w then b per layer).
    // `grads` must have been created by zero_grads() for this net.
    std::vector<ParamBlock> param_blocks(std::vector<LayerGrad>& grads,
                                         const std::string& prefix);

private:
    std::vector<int> widths_;
    std::vector<Layer> layers_;
};

Matrix apply_activation(Activation act, const Matrix& pre);
// dLoss/d(pre) from dLoss/d(post); `post` is the activation output.
Matrix activation_backward(Activation act, const Matrix& post, const Matrix& grad_post);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Moment accumulators for one parameter array. Sized on first use.
struct AdamState {
    std::int64_t step = 0;
    Vector m;
    Vector v;
    AdamConfig cfg;
};

// In-place update: p -= lr * m_hat / (sqrt(v_hat) + eps).
// Throws NumericError naming the offending index on non-finite gradients.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const std::string& name = "params");

// Steps a set of blocks in lockstep, one AdamState per block.
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}
    void add_blocks(const std::vector<ParamBlock>& blocks);
    void step();
    std::int64_t step_count() const { return t_; }

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<ParamBlock> blocks_;
    std::vector<AdamState> states_;
};

// ---------------------------------------------------------------------------
// Finite-difference checking
// ---------------------------------------------------------------------------

struct LossProbe {
    double value = 0.0;
    Matrix grad_output;  // dLoss/d(net output), B x out
};
using LossFn = std::function<LossProbe(const Matrix& output)>;

// Max over all net parameters of |analytic - numeric| / max(|a|, |n|, 1e-8),
// central differences with the given step. Throws UsageError if the loss is
// not deterministic at the base point.
double grad_check(DenseNet& net, const LossFn& loss, const Matrix& batch, double step = 1e-5);

// Generic form for composite models: `loss` re-evaluates the scalar from the
// blocks' current values, `fill_grads` recomputes every block's gradient.
double fd_max_rel_error(std::span<ParamBlock> blocks, const std::function<double()>& loss,
                        const std::function<void()>& fill_grads, double step = 1e-5);

}  // namespace wvad::nn
