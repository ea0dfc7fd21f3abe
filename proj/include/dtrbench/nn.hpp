#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtrbench/rng.hpp"

namespace dtr {

class NnError : public std::runtime_error {
public:
    explicit NnError(const std::string& what) : std::runtime_error(what) {}
};

struct MlpConfig {
    std::vector<int> sizes;  // input, hidden..., output
    bool batch_norm = false;
    double dropout = 0.0;

    bool operator==(const MlpConfig&) const = default;
};

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

/// Feedforward network with rectifier hidden layers and an identity output
/// layer. Hidden layers optionally carry batch normalisation (before the
/// rectifier) and inverted dropout (after it). Parameters live in one flat
/// vector so the optimiser, target updates and checkpoints stay simple.
class Mlp {
public:
    Mlp() = default;

    Mlp(MlpConfig cfg, RngStream& rng) : cfg_(std::move(cfg)) {
        if (cfg_.sizes.size() < 2) throw NnError("Mlp: need at least input and output sizes");
        const int L = layer_count();
        layer_off_.resize(L);
        int off = 0;
        for (int l = 0; l < L; ++l) {
            LayerOffsets& o = layer_off_[l];
            o.in = cfg_.sizes[l];
            o.out = cfg_.sizes[l + 1];
            o.w = off; off += o.in * o.out;
            o.b = off; off += o.out;
            if (has_bn(l)) {
                o.gamma = off; off += o.out;
                o.beta = off; off += o.out;
            }
        }
        params_.assign(off, 0.0);
        int buf = 0;
        for (int l = 0; l < L; ++l) {
            if (has_bn(l)) {
                layer_off_[l].run_mean = buf; buf += layer_off_[l].out;
                layer_off_[l].run_var = buf; buf += layer_off_[l].out;
            }
        }
        buffers_.assign(buf, 0.0);
        for (int l = 0; l < L; ++l) {
            const LayerOffsets& o = layer_off_[l];
            const double limit = std::sqrt(6.0 / o.in); // rectifier-friendly init
            for (int i = 0; i < o.in * o.out; ++i) params_[o.w + i] = rng.uniform(-limit, limit);
            if (has_bn(l)) {
                for (int j = 0; j < o.out; ++j) {
                    params_[o.gamma + j] = 1.0;
                    buffers_[o.run_var + j] = 1.0;
                }
            }
        }
        cache_.resize(L);
    }

    const MlpConfig& config() const { return cfg_; }
    int input_dim() const { return cfg_.sizes.front(); }
    int output_dim() const { return cfg_.sizes.back(); }
    int layer_count() const { return static_cast<int>(cfg_.sizes.size()) - 1; }
    int param_count() const { return static_cast<int>(params_.size()); }

    std::vector<double>& parameters() { return params_; }
    const std::vector<double>& parameters() const { return params_; }
    std::vector<double>& buffers() { return buffers_; }
    const std::vector<double>& buffers() const { return buffers_; }

    /// Batch forward pass. X is batch*input_dim row-major. In training mode
    /// batch statistics drive the normalisation and dropout masks are drawn
    /// from `dropout_rng`; in inference mode running statistics are used and
    /// dropout is off. Training mode records the caches backward() needs.
    std::vector<double> forward(std::span<const double> X, int batch, bool training = false,
                                RngStream* dropout_rng = nullptr) {
        if (static_cast<int>(X.size()) != batch * input_dim())
            throw NnError("Mlp::forward: input size mismatch");
        training_batch_ = training ? batch : 0;
        std::vector<double> act(X.begin(), X.end());
        const int L = layer_count();
        for (int l = 0; l < L; ++l) {
            const LayerOffsets& o = layer_off_[l];
            LayerCache& c = cache_[l];
            if (training) c.input = act;
            std::vector<double> z(batch * o.out);
            for (int n = 0; n < batch; ++n) {
                const double* x = act.data() + n * o.in;
                double* zn = z.data() + n * o.out;
                for (int j = 0; j < o.out; ++j) {
                    double s = params_[o.b + j];
                    const double* w = params_.data() + o.w + j * o.in;
                    for (int i = 0; i < o.in; ++i) s += w[i] * x[i];
                    zn[j] = s;
                }
            }
            const bool last = l == L - 1;
            if (has_bn(l)) apply_bn(l, z, batch, training);
            if (!last) {
                if (training) c.pre_act = z;
                for (double& v : z) v = v > 0.0 ? v : 0.0;
                if (cfg_.dropout > 0.0 && training) {
                    if (!dropout_rng) throw NnError("Mlp::forward: dropout needs an RngStream");
                    c.drop_mask.assign(z.size(), 0.0);
                    const double keep = 1.0 - cfg_.dropout;
                    for (std::size_t i = 0; i < z.size(); ++i) {
                        if (dropout_rng->uniform() < keep) {
                            c.drop_mask[i] = 1.0 / keep;
                            z[i] *= c.drop_mask[i];
                        } else {
                            z[i] = 0.0;
                        }
                    }
                }
            }
            act = std::move(z);
        }
        return act;
    }

    /// Convenience single-input inference.
    std::vector<double> predict(std::span<const double> x) {
        return forward(x, 1, false, nullptr);
    }

    /// Reverse-mode gradients for the last training-mode forward pass.
    /// `dY` is batch*output_dim; gradients accumulate into `grad` (same
    /// layout as parameters(), resized/zeroed here).
    void backward(std::span<const double> dY, std::vector<double>& grad) {
        if (training_batch_ <= 0) throw NnError("Mlp::backward: no recorded forward pass");
        const int batch = training_batch_;
        grad.assign(params_.size(), 0.0);
        std::vector<double> delta(dY.begin(), dY.end());
        for (int l = layer_count() - 1; l >= 0; --l) {
            const LayerOffsets& o = layer_off_[l];
            LayerCache& c = cache_[l];
            const bool last = l == layer_count() - 1;
            if (!last) {
                if (cfg_.dropout > 0.0 && !c.drop_mask.empty())
                    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= c.drop_mask[i];
                for (std::size_t i = 0; i < delta.size(); ++i)
                    if (c.pre_act[i] <= 0.0) delta[i] = 0.0;
            }
            if (has_bn(l)) bn_backward(l, delta, batch, grad);
            // linear layer: dW = delta^T input, db = sum delta, dx = W^T delta
            std::vector<double> dx(batch * o.in, 0.0);
            for (int n = 0; n < batch; ++n) {
                const double* x = c.input.data() + n * o.in;
                const double* d = delta.data() + n * o.out;
                double* dxn = dx.data() + n * o.in;
                for (int j = 0; j < o.out; ++j) {
                    grad[o.b + j] += d[j];
                    double* gw = grad.data() + o.w + j * o.in;
                    const double* w = params_.data() + o.w + j * o.in;
                    for (int i = 0; i < o.in; ++i) {
                        gw[i] += d[j] * x[i];
                        dxn[i] += w[i] * d[j];
                    }
                }
            }
            delta = std::move(dx);
        }
    }

    bool compatible(const Mlp& other) const { return cfg_ == other.cfg_; }

    void save(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw NnError("cannot open checkpoint for writing: " + path);
        f << "dtrbench-mlp 1\n";
        f << "sizes " << cfg_.sizes.size();
        for (int s : cfg_.sizes) f << ' ' << s;
        f << "\nbatch_norm " << (cfg_.batch_norm ? 1 : 0) << "\ndropout " << hexd(cfg_.dropout)
          << "\nparams " << params_.size() << '\n';
        for (double v : params_) f << hexd(v) << '\n';
        f << "buffers " << buffers_.size() << '\n';
        for (double v : buffers_) f << hexd(v) << '\n';
        if (!f) throw NnError("failed writing checkpoint: " + path);
    }

    static Mlp load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw NnError("cannot open checkpoint: " + path);
        std::string tag;
        int version = 0;
        f >> tag >> version;
        if (tag != "dtrbench-mlp" || version != 1)
            throw NnError("unrecognised checkpoint format: " + path);
        MlpConfig cfg;
        std::size_t n = 0;
        std::string key, val;
        f >> key >> n;
        cfg.sizes.resize(n);
        for (auto& s : cfg.sizes) f >> s;
        int bn = 0;
        f >> key >> bn;
        cfg.batch_norm = bn != 0;
        f >> key >> val;
        cfg.dropout = std::strtod(val.c_str(), nullptr);
        RngStream dummy(0, 0);
        Mlp net(cfg, dummy);
        f >> key >> n;
        if (n != net.params_.size()) throw NnError("checkpoint parameter count mismatch: " + path);
        for (auto& v : net.params_) {
            f >> val;
            v = std::strtod(val.c_str(), nullptr);
        }
        f >> key >> n;
        if (n != net.buffers_.size()) throw NnError("checkpoint buffer count mismatch: " + path);
        for (auto& v : net.buffers_) {
            f >> val;
            v = std::strtod(val.c_str(), nullptr);
        }
        if (!f) throw NnError("truncated checkpoint: " + path);
        return net;
    }

private:
    struct LayerOffsets {
        int in = 0, out = 0;
        int w = 0, b = 0, gamma = -1, beta = -1;
        int run_mean = -1, run_var = -1;
    };
    struct LayerCache {
        std::vector<double> input;     // linear input
        std::vector<double> pre_act;   // post-BN, pre-rectifier
        std::vector<double> drop_mask;
        // batch-norm intermediates
        std::vector<double> bn_xhat, bn_mean, bn_istd, bn_z;
    };

    bool has_bn(int layer) const { return cfg_.batch_norm && layer < layer_count() - 1; }

    static std::string hexd(double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%a", v);
        return buf;
    }

    void apply_bn(int l, std::vector<double>& z, int batch, bool training) {
        const LayerOffsets& o = layer_off_[l];
        LayerCache& c = cache_[l];
        if (training) {
            c.bn_z = z;
            c.bn_mean.assign(o.out, 0.0);
            c.bn_istd.assign(o.out, 0.0);
            c.bn_xhat.assign(z.size(), 0.0);
            for (int j = 0; j < o.out; ++j) {
                double mean = 0.0;
                for (int n = 0; n < batch; ++n) mean += z[n * o.out + j];
                mean /= batch;
                double var = 0.0;
                for (int n = 0; n < batch; ++n) {
                    const double d = z[n * o.out + j] - mean;
                    var += d * d;
                }
                var /= batch;
                const double istd = 1.0 / std::sqrt(var + kBnEps);
                c.bn_mean[j] = mean;
                c.bn_istd[j] = istd;
                buffers_[o.run_mean + j] =
                    (1.0 - kBnMomentum) * buffers_[o.run_mean + j] + kBnMomentum * mean;
                buffers_[o.run_var + j] =
                    (1.0 - kBnMomentum) * buffers_[o.run_var + j] + kBnMomentum * var;
                for (int n = 0; n < batch; ++n) {
                    const double xh = (z[n * o.out + j] - mean) * istd;
                    c.bn_xhat[n * o.out + j] = xh;
                    z[n * o.out + j] = params_[o.gamma + j] * xh + params_[o.beta + j];
                }
            }
        } else {
            for (int j = 0; j < o.out; ++j) {
                const double istd = 1.0 / std::sqrt(buffers_[o.run_var + j] + kBnEps);
                for (int n = 0; n < batch; ++n) {
                    const double xh = (z[n * o.out + j] - buffers_[o.run_mean + j]) * istd;
                    z[n * o.out + j] = params_[o.gamma + j] * xh + params_[o.beta + j];
                }
            }
        }
    }

    /// Standard batch-norm backward; rewrites `delta` (dL/dy -> dL/dz) and
    /// accumulates the gamma/beta gradients.
    void bn_backward(int l, std::vector<double>& delta, int batch, std::vector<double>& grad) {
        const LayerOffsets& o = layer_off_[l];
        const LayerCache& c = cache_[l];
        for (int j = 0; j < o.out; ++j) {
            double dgamma = 0.0, dbeta = 0.0, dxhat_sum = 0.0, dxhat_xhat_sum = 0.0;
            for (int n = 0; n < batch; ++n) {
                const double dy = delta[n * o.out + j];
                const double xh = c.bn_xhat[n * o.out + j];
                dgamma += dy * xh;
                dbeta += dy;
                dxhat_sum += dy * params_[o.gamma + j];
                dxhat_xhat_sum += dy * params_[o.gamma + j] * xh;
            }
            grad[o.gamma + j] += dgamma;
            grad[o.beta + j] += dbeta;
            const double istd = c.bn_istd[j];
            for (int n = 0; n < batch; ++n) {
                const double dxhat = delta[n * o.out + j] * params_[o.gamma + j];
                const double xh = c.bn_xhat[n * o.out + j];
                delta[n * o.out + j] =
                    istd / batch * (batch * dxhat - dxhat_sum - xh * dxhat_xhat_sum);
            }
        }
    }

    MlpConfig cfg_;
    std::vector<LayerOffsets> layer_off_;
    std::vector<double> params_;
    std::vector<double> buffers_;
    std::vector<LayerCache> cache_;
    int training_batch_ = 0;
};

/// Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<double> m, v;
};

inline void adam_step(std::vector<double>& params, const std::vector<double>& grad,
                      AdamState& st) {
    if (params.size() != grad.size()) throw NnError("adam_step: shape mismatch");
    if (st.m.size() != params.size()) {
        st.m.assign(params.size(), 0.0);
        st.v.assign(params.size(), 0.0);
        st.step = 0;
    }
    ++st.step;
    const double b1c = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double b2c = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
        const double mhat = st.m[i] / b1c;
        const double vhat = st.v[i] / b2c;
        params[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
}

/// target <- (1-tau)*target + tau*online, including normalisation buffers.
/// tau=1 is the hard copy used by the scheduled target refresh.
inline void polyak_update(Mlp& target, const Mlp& online, double tau) {
    if (!target.compatible(online)) throw NnError("polyak_update: architecture mismatch");
    auto blend = [tau](std::vector<double>& t, const std::vector<double>& s) {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = (1.0 - tau) * t[i] + tau * s[i];
    };
    blend(target.parameters(), online.parameters());
    blend(target.buffers(), online.buffers());
}

/// Rescales gradients in place so their global L2 norm is at most max_norm.
inline double clip_grad_norm(std::vector<double>& grad, double max_norm) {
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (double& g : grad) g *= scale;
    }
    return norm;
}

/// Huber (delta=1) value and derivative with respect to the prediction.
inline std::pair<double, double> huber_loss(double pred, double target, double delta = 1.0) {
    const double e = pred - target;
    if (std::abs(e) <= delta) return {0.5 * e * e, e};
    return {delta * (std::abs(e) - 0.5 * delta), e > 0 ? delta : -delta};
}

inline std::pair<double, double> squared_loss(double pred, double target) {
    const double e = pred - target;
    return {e * e, 2.0 * e};
}

} // namespace dtr
