#pragma once

// Small dense networks over flat parameter vectors: a tanh MLP and a stacked
// LSTM with a linear head. Backpropagation is written out by hand and checked
// against central differences in the tests.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "aor/errors.hpp"
#include "aor/rng.hpp"

namespace aor::nn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using MatMap = Eigen::Map<Mat>;
using CMatMap = Eigen::Map<const Mat>;
using VecMap = Eigen::Map<Vec>;
using CVecMap = Eigen::Map<const Vec>;

inline Vec softmax(const Vec& z) {
    Vec e = (z.array() - z.maxCoeff()).exp();
    return e / e.sum();
}

inline double log_sum_exp(const Vec& z) {
    const double m = z.maxCoeff();
    return m + std::log((z.array() - m).exp().sum());
}

inline Vec sigmoid(const Vec& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

inline Vec to_vec(std::span<const double> x) { return CVecMap(x.data(), static_cast<Eigen::Index>(x.size())); }

/// Cross-entropy of softmax(logits) against `target`; writes d/dlogits.
inline double softmax_cross_entropy(const Vec& logits, std::size_t target, Vec* grad) {
    const double loss = log_sum_exp(logits) - logits(static_cast<Eigen::Index>(target));
    if (grad) {
        *grad = softmax(logits);
        (*grad)(static_cast<Eigen::Index>(target)) -= 1.0;
    }
    return loss;
}

/// Cross-entropy of softmax(logits) against a target distribution.
inline double softmax_cross_entropy(const Vec& logits, const Vec& target, Vec* grad) {
    const double lse = log_sum_exp(logits);
    const double loss = target.sum() * lse - target.dot(logits);
    if (grad) *grad = softmax(logits) * target.sum() - target;
    return loss;
}

/// Rescales `grad` so that its L2 norm is at most `max_norm`; returns the
/// norm before clipping.
inline double clip_norm(std::vector<double>& grad, double max_norm) {
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm)
        for (double& g : grad) g *= max_norm / norm;
    return norm;
}

/// Plain gradient descent step with norm clipping.
inline void sgd_step(std::vector<double>& params, std::vector<double> grad, double lr, double max_norm) {
    if (grad.size() != params.size()) throw DimensionMismatch("gradient and parameter sizes differ");
    clip_norm(grad, max_norm);
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
}

/// Fully connected net, tanh on hidden layers, linear output. Layer l stores
/// W_l (out x in, column-major) followed by b_l.
class Mlp {
public:
    struct Cache {
        std::vector<Vec> act;  // input, then each layer's output
    };

    Mlp() = default;
    explicit Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
        if (sizes_.size() < 2) throw InvalidParams("an MLP needs input and output sizes");
        for (std::size_t s : sizes_)
            if (s == 0) throw InvalidParams("layer sizes must be positive");
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            offsets_.push_back(n);
            n += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
        }
        params_.assign(n, 0.0);
    }

    void init(Rng& rng) {
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            const double r = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
            auto w = weights(l);
            for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-r, r);
            bias(l).setZero();
        }
    }

    std::size_t input_dim() const { return sizes_.front(); }
    std::size_t output_dim() const { return sizes_.back(); }
    std::size_t num_layers() const { return sizes_.size() - 1; }
    /// Parameter count of each layer (weights then bias) in storage order.
    std::vector<std::size_t> block_sizes() const {
        std::vector<std::size_t> out;
        for (std::size_t l = 0; l < num_layers(); ++l) out.push_back(sizes_[l + 1] * sizes_[l] + sizes_[l + 1]);
        return out;
    }
    const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
    std::vector<double>& params() noexcept { return params_; }
    const std::vector<double>& params() const noexcept { return params_; }

    Vec forward(const Vec& x, Cache* cache = nullptr) const {
        if (static_cast<std::size_t>(x.size()) != input_dim()) throw DimensionMismatch("MLP input size");
        Vec a = x;
        if (cache) cache->act.assign(1, a);
        for (std::size_t l = 0; l < num_layers(); ++l) {
            Vec z = weights(l) * a + bias(l);
            a = l + 1 < num_layers() ? Vec(z.array().tanh()) : z;
            if (cache) cache->act.push_back(a);
        }
        return a;
    }

    /// Adds dL/dparams into `grad` and returns dL/dinput.
    Vec backward(const Cache& cache, const Vec& grad_out, std::vector<double>& grad) const {
        Vec delta = grad_out;
        for (std::size_t l = num_layers(); l-- > 0;) {
            if (l + 1 < num_layers()) delta = delta.cwiseProduct((1.0 - cache.act[l + 1].array().square()).matrix());
            MatMap gw(grad.data() + offsets_[l], rows(l), cols(l));
            VecMap gb(grad.data() + offsets_[l] + rows(l) * cols(l), rows(l));
            gw.noalias() += delta * cache.act[l].transpose();
            gb += delta;
            delta = weights(l).transpose() * delta;
        }
        return delta;
    }

private:
    Eigen::Index rows(std::size_t l) const { return static_cast<Eigen::Index>(sizes_[l + 1]); }
    Eigen::Index cols(std::size_t l) const { return static_cast<Eigen::Index>(sizes_[l]); }
    MatMap weights(std::size_t l) { return {params_.data() + offsets_[l], rows(l), cols(l)}; }
    CMatMap weights(std::size_t l) const { return {params_.data() + offsets_[l], rows(l), cols(l)}; }
    VecMap bias(std::size_t l) { return {params_.data() + offsets_[l] + rows(l) * cols(l), rows(l)}; }
    CVecMap bias(std::size_t l) const { return {params_.data() + offsets_[l] + rows(l) * cols(l), rows(l)}; }

    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

struct LstmShape {
    std::size_t input_dim = 0;
    std::size_t hidden = 32;
    std::size_t layers = 3;
    std::size_t outputs = 0;

    friend bool operator==(const LstmShape&, const LstmShape&) = default;
};

/// Stacked LSTM with a linear head producing one logit vector per timestep.
/// Layer k stores W_k (4H x (in_k + H), column-major, gate rows ordered
/// input, forget, candidate, output) and b_k (4H); the head stores W (A x H)
/// and b (A).
class LstmNet {
public:
    enum Gate : std::size_t { input_gate = 0, forget_gate = 1, candidate = 2, output_gate = 3 };

    struct State {
        std::vector<Vec> h, c;
    };

    struct LayerStep {
        Vec z;  // [layer input; h_prev]
        Vec i, f, g, o, c_prev, c, tanh_c;
    };

    struct SeqCache {
        std::vector<std::vector<LayerStep>> steps;  // [t][layer]
    };

    LstmNet() = default;
    explicit LstmNet(LstmShape shape) : shape_(shape) {
        if (shape.input_dim == 0 || shape.hidden == 0 || shape.layers == 0 || shape.outputs == 0)
            throw InvalidParams("LSTM dimensions must be positive");
        std::size_t n = 0;
        for (std::size_t k = 0; k < shape.layers; ++k) {
            offsets_.push_back(n);
            n += 4 * shape.hidden * (layer_input(k) + shape.hidden) + 4 * shape.hidden;
        }
        head_offset_ = n;
        n += shape.outputs * shape.hidden + shape.outputs;
        params_.assign(n, 0.0);
    }

    /// Uniform(+-1/sqrt(H)) weights, zero biases except forget gates at 1.
    void init(Rng& rng) {
        const double r = 1.0 / std::sqrt(static_cast<double>(shape_.hidden));
        for (double& p : params_) p = rng.uniform(-r, r);
        const auto h = static_cast<Eigen::Index>(shape_.hidden);
        for (std::size_t k = 0; k < shape_.layers; ++k) {
            auto b = bias(k);
            b.setZero();
            b.segment(h, h).setOnes();
        }
        head_bias().setZero();
    }

    const LstmShape& shape() const noexcept { return shape_; }
    std::vector<double>& params() noexcept { return params_; }
    const std::vector<double>& params() const noexcept { return params_; }

    /// Parameter count of each LSTM layer and of the head, in storage order.
    std::vector<std::size_t> block_sizes() const {
        std::vector<std::size_t> out;
        for (std::size_t k = 0; k < shape_.layers; ++k)
            out.push_back((k + 1 < shape_.layers ? offsets_[k + 1] : head_offset_) - offsets_[k]);
        out.push_back(params_.size() - head_offset_);
        return out;
    }

    /// Flat indices of one gate's weights and bias in layer k.
    std::vector<std::size_t> gate_indices(std::size_t k, Gate gate) const {
        std::vector<std::size_t> out;
        const std::size_t rows = 4 * shape_.hidden, cols = layer_input(k) + shape_.hidden;
        for (std::size_t c = 0; c < cols; ++c)
            for (std::size_t r = gate * shape_.hidden; r < (gate + 1) * shape_.hidden; ++r)
                out.push_back(offsets_[k] + c * rows + r);
        for (std::size_t r = gate * shape_.hidden; r < (gate + 1) * shape_.hidden; ++r)
            out.push_back(offsets_[k] + rows * cols + r);
        return out;
    }

    State initial_state() const {
        State s;
        s.h.assign(shape_.layers, Vec::Zero(static_cast<Eigen::Index>(shape_.hidden)));
        s.c = s.h;
        return s;
    }

    /// One timestep; returns the head's logits.
    Vec step(State& state, const Vec& x, std::vector<LayerStep>* cache = nullptr) const {
        if (static_cast<std::size_t>(x.size()) != shape_.input_dim) throw DimensionMismatch("LSTM input size");
        const auto h = static_cast<Eigen::Index>(shape_.hidden);
        if (cache) cache->resize(shape_.layers);
        Vec in = x;
        for (std::size_t k = 0; k < shape_.layers; ++k) {
            LayerStep s;
            s.z.resize(in.size() + h);
            s.z << in, state.h[k];
            const Vec pre = weights(k) * s.z + bias(k);
            s.i = sigmoid(pre.segment(0, h));
            s.f = sigmoid(pre.segment(h, h));
            s.g = pre.segment(2 * h, h).array().tanh();
            s.o = sigmoid(pre.segment(3 * h, h));
            s.c_prev = state.c[k];
            s.c = s.f.cwiseProduct(s.c_prev) + s.i.cwiseProduct(s.g);
            s.tanh_c = s.c.array().tanh();
            state.c[k] = s.c;
            state.h[k] = s.o.cwiseProduct(s.tanh_c);
            in = state.h[k];
            if (cache) (*cache)[k] = std::move(s);
        }
        return head_weights() * in + head_bias();
    }

    std::vector<Vec> forward(const std::vector<Vec>& inputs, SeqCache* cache = nullptr) const {
        State state = initial_state();
        std::vector<Vec> logits;
        logits.reserve(inputs.size());
        if (cache) cache->steps.assign(inputs.size(), {});
        for (std::size_t t = 0; t < inputs.size(); ++t)
            logits.push_back(step(state, inputs[t], cache ? &cache->steps[t] : nullptr));
        return logits;
    }

    /// Backpropagation through time; adds dL/dparams into `grad`.
    void backward(const SeqCache& cache, const std::vector<Vec>& grad_logits, std::vector<double>& grad) const {
        const std::size_t T = cache.steps.size();
        const std::size_t L = shape_.layers;
        const auto h = static_cast<Eigen::Index>(shape_.hidden);
        if (grad_logits.size() != T) throw DimensionMismatch("one logit gradient per timestep is required");
        MatMap g_head(grad.data() + head_offset_, static_cast<Eigen::Index>(shape_.outputs), h);
        VecMap g_head_b(grad.data() + head_offset_ + shape_.outputs * shape_.hidden,
                        static_cast<Eigen::Index>(shape_.outputs));

        std::vector<Vec> dh_next(L, Vec::Zero(h)), dc_next(L, Vec::Zero(h));
        for (std::size_t t = T; t-- > 0;) {
            const auto& steps = cache.steps[t];
            const Vec top_h = steps[L - 1].o.cwiseProduct(steps[L - 1].tanh_c);
            g_head.noalias() += grad_logits[t] * top_h.transpose();
            g_head_b += grad_logits[t];
            Vec dh_from_above = head_weights().transpose() * grad_logits[t];
            for (std::size_t k = L; k-- > 0;) {
                const auto& s = steps[k];
                const Vec dh = dh_from_above + dh_next[k];
                const Vec d_o = dh.cwiseProduct(s.tanh_c);
                const Vec dc = dc_next[k] + dh.cwiseProduct(s.o).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix());
                const Vec d_f = dc.cwiseProduct(s.c_prev);
                const Vec d_i = dc.cwiseProduct(s.g);
                const Vec d_g = dc.cwiseProduct(s.i);
                Vec dpre(4 * h);
                dpre.segment(0, h) = d_i.cwiseProduct(s.i).cwiseProduct((1.0 - s.i.array()).matrix());
                dpre.segment(h, h) = d_f.cwiseProduct(s.f).cwiseProduct((1.0 - s.f.array()).matrix());
                dpre.segment(2 * h, h) = d_g.cwiseProduct((1.0 - s.g.array().square()).matrix());
                dpre.segment(3 * h, h) = d_o.cwiseProduct(s.o).cwiseProduct((1.0 - s.o.array()).matrix());
                MatMap gw(grad.data() + offsets_[k], 4 * h, static_cast<Eigen::Index>(layer_input(k)) + h);
                VecMap gb(grad.data() + offsets_[k] + 4 * h * gw.cols(), 4 * h);
                gw.noalias() += dpre * s.z.transpose();
                gb += dpre;
                const Vec dz = weights(k).transpose() * dpre;
                const auto in = static_cast<Eigen::Index>(layer_input(k));
                dh_next[k] = dz.segment(in, h);
                dc_next[k] = dc.cwiseProduct(s.f);
                dh_from_above = dz.segment(0, in);
            }
        }
    }

private:
    std::size_t layer_input(std::size_t k) const { return k == 0 ? shape_.input_dim : shape_.hidden; }
    Eigen::Index cols(std::size_t k) const { return static_cast<Eigen::Index>(layer_input(k) + shape_.hidden); }
    Eigen::Index gates() const { return static_cast<Eigen::Index>(4 * shape_.hidden); }
    CMatMap weights(std::size_t k) const { return {params_.data() + offsets_[k], gates(), cols(k)}; }
    VecMap bias(std::size_t k) { return {params_.data() + offsets_[k] + gates() * cols(k), gates()}; }
    CVecMap bias(std::size_t k) const { return {params_.data() + offsets_[k] + gates() * cols(k), gates()}; }
    CMatMap head_weights() const {
        return {params_.data() + head_offset_, static_cast<Eigen::Index>(shape_.outputs),
                static_cast<Eigen::Index>(shape_.hidden)};
    }
    VecMap head_bias() {
        return {params_.data() + head_offset_ + shape_.outputs * shape_.hidden,
                static_cast<Eigen::Index>(shape_.outputs)};
    }
    CVecMap head_bias() const {
        return {params_.data() + head_offset_ + shape_.outputs * shape_.hidden,
                static_cast<Eigen::Index>(shape_.outputs)};
    }

    LstmShape shape_;
    std::vector<std::size_t> offsets_;
    std::size_t head_offset_ = 0;
    std::vector<double> params_;
};

/// Mean cross-entropy over all targeted timesteps of a batch of sequences.
/// Each target is a distribution over actions; an empty vector masks the
/// step. When `grad` is non-null it receives the gradient of that mean.
inline double sequence_loss(const LstmNet& net, const std::vector<std::vector<Vec>>& inputs,
                            const std::vector<std::vector<Vec>>& targets, std::vector<double>* grad) {
    if (inputs.size() != targets.size()) throw DimensionMismatch("one target sequence per input sequence");
    std::size_t count = 0;
    for (const auto& t : targets)
        for (const auto& y : t) count += y.size() != 0;
    if (grad) grad->assign(net.params().size(), 0.0);
    if (count == 0) return 0.0;
    double total = 0.0;
    const double scale = 1.0 / static_cast<double>(count);
    for (std::size_t n = 0; n < inputs.size(); ++n) {
        if (inputs[n].size() != targets[n].size()) throw DimensionMismatch("one target per timestep");
        LstmNet::SeqCache cache;
        const auto logits = net.forward(inputs[n], grad ? &cache : nullptr);
        std::vector<Vec> dlogits(logits.size());
        for (std::size_t t = 0; t < logits.size(); ++t) {
            dlogits[t] = Vec::Zero(logits[t].size());
            if (targets[n][t].size() == 0) continue;
            Vec g;
            total += softmax_cross_entropy(logits[t], targets[n][t], grad ? &g : nullptr);
            if (grad) dlogits[t] = g * scale;
        }
        if (grad) net.backward(cache, dlogits, *grad);
    }
    return total * scale;
}

/// One-hot target distribution.
inline Vec one_hot(std::size_t index, std::size_t size) {
    Vec v = Vec::Zero(static_cast<Eigen::Index>(size));
    v(static_cast<Eigen::Index>(index)) = 1.0;
    return v;
}

/// Central-difference check of an analytic gradient at the given parameter
/// indices. Returns the largest |a - n| / max(|a|, |n|, floor). The floor keeps
/// directions where both gradients vanish out of the division; at step 1e-5
/// the difference quotient carries roundoff near 1e-11, so entries below 1e-6
/// are judged on absolute error.
template <class LossFn>
double grad_check(std::vector<double>& params, std::span<const double> analytic, LossFn&& loss,
                  std::span<const std::size_t> indices, double step = 1e-5, double floor = 1e-6) {
    if (analytic.size() != params.size()) throw DimensionMismatch("gradient and parameter sizes differ");
    double worst = 0.0;
    for (std::size_t i : indices) {
        const double saved = params[i];
        params[i] = saved + step;
        const double up = loss();
        params[i] = saved - step;
        const double down = loss();
        params[i] = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
    }
    return worst;
}

/// `count` distinct indices in [0, n) (all of them if count >= n).
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (count >= n) return idx;
    for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
    idx.resize(count);
    return idx;
}

}  // namespace aor::nn
