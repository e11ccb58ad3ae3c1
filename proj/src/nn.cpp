#include "wvad/nn.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace wvad::nn {

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Linear: return "linear";
        case Activation::Softplus: return "softplus";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Softmax: return "softmax";
    }
    return "?";
}

double softplus(double x) {
    // max(x,0) + log1p(exp(-|x|)) never overflows and keeps full precision
    // in both tails.
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

DenseNet::DenseNet(std::vector<int> widths, std::vector<Activation> acts)
    : widths_(std::move(widths)) {
    if (widths_.size() < 2) {
        throw ValidationError("DenseNet needs at least [in, out] widths");
    }
    if (acts.size() != widths_.size() - 1) {
        throw ValidationError("DenseNet: one activation per layer required");
    }
    for (int w : widths_) {
        if (w <= 0) throw ValidationError("DenseNet: widths must be positive");
    }
    layers_.resize(widths_.size() - 1);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i].w = Matrix::Zero(widths_[i + 1], widths_[i]);
        layers_[i].b = Vector::Zero(widths_[i + 1]);
        layers_[i].act = acts[i];
    }
}

DenseNet DenseNet::mlp(const std::vector<int>& widths, Activation hidden, Activation output) {
    if (widths.size() < 2) {
        throw ValidationError("DenseNet::mlp needs at least [in, out] widths");
    }
    std::vector<Activation> acts(widths.size() - 1, hidden);
    acts.back() = output;
    return DenseNet(widths, std::move(acts));
}

void DenseNet::init_params(std::mt19937_64& rng) {
    for (auto& layer : layers_) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.w.cols()));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Eigen::Index j = 0; j < layer.w.cols(); ++j) {
            for (Eigen::Index i = 0; i < layer.w.rows(); ++i) {
                layer.w(i, j) = dist(rng);
            }
        }
        layer.b.setZero();
    }
}

Matrix apply_activation(Activation act, const Matrix& pre) {
    switch (act) {
        case Activation::Linear:
            return pre;
        case Activation::Softplus:
            return pre.unaryExpr([](double v) { return softplus(v); });
        case Activation::Sigmoid:
            return pre.unaryExpr([](double v) { return sigmoid(v); });
        case Activation::Softmax: {
            Matrix out(pre.rows(), pre.cols());
            for (Eigen::Index r = 0; r < pre.rows(); ++r) {
                const double mx = pre.row(r).maxCoeff();
                Eigen::RowVectorXd e = (pre.row(r).array() - mx).exp();
                out.row(r) = e / e.sum();
            }
            return out;
        }
    }
    throw ValidationError("unknown activation");
}

Matrix activation_backward(Activation act, const Matrix& post, const Matrix& grad_post) {
    switch (act) {
        case Activation::Linear:
            return grad_post;
        case Activation::Softplus:
            // d softplus(x)/dx = sigmoid(x); recover sigmoid from the output:
            // post = softplus(pre) => sigmoid(pre) = 1 - exp(-post).
            return grad_post.cwiseProduct(
                post.unaryExpr([](double p) { return 1.0 - std::exp(-p); }));
        case Activation::Sigmoid:
            return grad_post.cwiseProduct(
                post.unaryExpr([](double s) { return s * (1.0 - s); }));
        case Activation::Softmax: {
            // dpre_k = y_k * (dpost_k - sum_j dpost_j y_j), rowwise.
            Matrix out(post.rows(), post.cols());
            for (Eigen::Index r = 0; r < post.rows(); ++r) {
                const double dot = grad_post.row(r).dot(post.row(r));
                out.row(r) =
                    post.row(r).array() * (grad_post.row(r).array() - dot);
            }
            return out;
        }
    }
    throw ValidationError("unknown activation");
}

Matrix DenseNet::forward(const Matrix& x, ForwardCache* cache) const {
    if (x.cols() != input_dim()) {
        throw DimensionError("DenseNet::forward: got " + std::to_string(x.cols()) +
                             " columns, expected " + std::to_string(input_dim()));
    }
    if (cache) {
        cache->inputs.clear();
        cache->post.clear();
        cache->inputs.reserve(layers_.size());
        cache->post.reserve(layers_.size());
        cache->batch = x.rows();
        cache->valid = true;
    }
    Matrix cur = x;
    for (const auto& layer : layers_) {
        if (cache) cache->inputs.push_back(cur);
        Matrix pre = cur * layer.w.transpose();
        pre.rowwise() += layer.b.transpose();
        cur = apply_activation(layer.act, pre);
        if (cache) cache->post.push_back(cur);
    }
    return cur;
}

Matrix DenseNet::backward(const ForwardCache& cache, const Matrix& grad_out,
                          std::vector<LayerGrad>& grads) const {
    if (!cache.valid || cache.inputs.size() != layers_.size()) {
        throw UsageError("DenseNet::backward: cache does not match this net");
    }
    if (grads.size() != layers_.size()) {
        throw UsageError("DenseNet::backward: grads must come from zero_grads()");
    }
    if (grad_out.rows() != cache.batch || grad_out.cols() != output_dim()) {
        throw DimensionError("DenseNet::backward: grad_out shape mismatch");
    }
    Matrix g = grad_out;
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const auto& layer = layers_[li];
        const Matrix dpre = activation_backward(layer.act, cache.post[li], g);
        grads[li].w.noalias() += dpre.transpose() * cache.inputs[li];
        grads[li].b += dpre.colwise().sum().transpose();
        g.noalias() = dpre * layer.w;
    }
    return g;
}

std::vector<LayerGrad> DenseNet::zero_grads() const {
    std::vector<LayerGrad> grads(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        grads[i].w = Matrix::Zero(layers_[i].w.rows(), layers_[i].w.cols());
        grads[i].b = Vector::Zero(layers_[i].b.size());
    }
    return grads;
}

Eigen::Index DenseNet::param_count() const {
    Eigen::Index n = 0;
    for (const auto& layer : layers_) n += layer.w.size() + layer.b.size();
    return n;
}

std::vector<ParamBlock> DenseNet::param_blocks(std::vector<LayerGrad>& grads,
                                               const std::string& prefix) {
    if (grads.size() != layers_.size()) {
        throw UsageError("DenseNet::param_blocks: grads must come from zero_grads()");
    }
    std::vector<ParamBlock> blocks;
    blocks.reserve(layers_.size() * 2);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        blocks.push_back({prefix + ".w" + std::to_string(i), layers_[i].w.data(),
                          grads[i].w.data(), layers_[i].w.size()});
        blocks.push_back({prefix + ".b" + std::to_string(i), layers_[i].b.data(),
                          grads[i].b.data(), layers_[i].b.size()});
    }
    return blocks;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const std::string& name) {
    if (params.size() != grads.size()) {
        throw UsageError("adam_step: params/grads size mismatch for " + name);
    }
    const auto n = static_cast<Eigen::Index>(params.size());
    if (state.m.size() != n) {
        state.m = Vector::Zero(n);
        state.v = Vector::Zero(n);
        state.step = 0;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(grads[i])) {
            throw NumericError("non-finite gradient in " + name + "[" + std::to_string(i) + "]");
        }
    }
    state.step += 1;
    const auto& c = state.cfg;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double g = grads[i];
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
}

void AdamOptimizer::add_blocks(const std::vector<ParamBlock>& blocks) {
    for (const auto& b : blocks) {
        blocks_.push_back(b);
        AdamState s;
        s.cfg = cfg_;
        states_.push_back(std::move(s));
    }
}

void AdamOptimizer::step() {
    ++t_;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        auto& b = blocks_[i];
        adam_step(std::span<double>(b.value, static_cast<std::size_t>(b.size)),
                  std::span<const double>(b.grad, static_cast<std::size_t>(b.size)), states_[i],
                  b.name);
    }
}

double fd_max_rel_error(std::span<ParamBlock> blocks, const std::function<double()>& loss,
                        const std::function<void()>& fill_grads, double step) {
    const double base1 = loss();
    const double base2 = loss();
    if (base1 != base2) {
        throw UsageError("fd_max_rel_error: loss is not deterministic at the base point");
    }
    fill_grads();
    // Snapshot analytic gradients before the probes overwrite them.
    std::vector<std::vector<double>> analytic(blocks.size());
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        analytic[bi].assign(blocks[bi].grad, blocks[bi].grad + blocks[bi].size);
    }
    double worst = 0.0;
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        auto& blk = blocks[bi];
        for (Eigen::Index i = 0; i < blk.size; ++i) {
            const double saved = blk.value[i];
            blk.value[i] = saved + step;
            const double up = loss();
            blk.value[i] = saved - step;
            const double down = loss();
            blk.value[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[bi][i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

double grad_check(DenseNet& net, const LossFn& loss, const Matrix& batch, double step) {
    auto grads = net.zero_grads();
    auto blocks = net.param_blocks(grads, "net");
    auto scalar = [&]() {
        const Matrix out = net.forward(batch);
        return loss(out).value;
    };
    auto fill = [&]() {
        for (auto& g : grads) {
            g.w.setZero();
            g.b.setZero();
        }
        ForwardCache cache;
        const Matrix out = net.forward(batch, &cache);
        const LossProbe probe = loss(out);
        net.backward(cache, probe.grad_output, grads);
    };
    return fd_max_rel_error(blocks, scalar, fill, step);
}

}  // namespace wvad::nn
