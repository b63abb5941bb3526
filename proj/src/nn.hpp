#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

// Small convolutional network over traffic matrices. The whole stack is
// expressed with 2D primitives: the 1D stage is height-1 tensors, so one
// conv/pool/batchnorm implementation serves both. Templated on the scalar
// type: float for training, double for finite-difference verification.

namespace tp::nn {

struct ConvBlock2d {
    int filters = 0;
    int kh = 0, kw = 0;  // kernel
    int ph = 0, pw = 0;  // max-pool
    double dropout = 0.0;
};

struct ConvBlock1d {
    int filters = 0;
    int k = 0;
    int pool = 0;
    double dropout = 0.0;
};

struct ArchConfig {
    int width = 1800;
    std::vector<ConvBlock2d> blocks2d;
    int reduce_channels = 32;
    std::vector<ConvBlock1d> blocks1d;
    int num_classes = 0;

    static ArchConfig default_for(int width, int num_classes);
    // Throws ShapeError unless the 2D pools collapse the height to exactly 1.
    void validate() const;
    int embedding_dim() const { return blocks1d.empty() ? reduce_channels : blocks1d.back().filters; }
};

template <typename T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(size_t(n_) * c_ * h_ * w_, T(0)) {}

    size_t plane() const { return size_t(h) * size_t(w); }
    size_t size() const { return v.size(); }
    T* chan(int in, int ic) { return v.data() + (size_t(in) * c + size_t(ic)) * plane(); }
    const T* chan(int in, int ic) const {
        return v.data() + (size_t(in) * c + size_t(ic)) * plane();
    }
};

// train: batch statistics + dropout sampling + running-stat updates.
// eval: running statistics, no dropout, fully deterministic.
// measure: batch statistics without side effects, no dropout — used to score
// the current weights on a whole set deterministically.
// calibrate: like measure, but overwrites the running statistics with the
// batch statistics — run once over the training set after the last update so
// eval mode reflects the data exactly rather than the momentum trajectory.
enum class Phase { train, eval, measure, calibrate };

// Named view of one parameter/state tensor inside a layer.
template <typename T>
struct ParamView {
    std::string name;
    T* data = nullptr;
    T* grad = nullptr;  // null for non-trainable state (running stats)
    std::vector<int> dims;
    size_t count = 0;
};

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor<T> forward(const Tensor<T>& x, Phase phase, Rng* rng) = 0;
    virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
    virtual void collect(std::vector<ParamView<T>>&, const std::string&) {}
    virtual void zero_grad() {}
};

template <typename T>
class Conv2d final : public Layer<T> {
public:
    Conv2d(int in_ch, int out_ch, int kh, int kw)
        : in_ch_(in_ch), out_ch_(out_ch), kh_(kh), kw_(kw), pt_((kh - 1) / 2), pl_((kw - 1) / 2),
          w_(size_t(out_ch) * in_ch * kh * kw, T(0)), b_(size_t(out_ch), T(0)),
          gw_(w_.size(), T(0)), gb_(b_.size(), T(0)) {}

    void init(Rng& rng) {
        double fan_in = double(in_ch_) * kh_ * kw_;
        double bound = std::sqrt(1.0 / fan_in);
        for (auto& x : w_) x = T(rng.uniform(-bound, bound));
        std::fill(b_.begin(), b_.end(), T(0));
    }

    Tensor<T> forward(const Tensor<T>& x, Phase, Rng*) override {
        x_ = x;
        Tensor<T> y(x.n, out_ch_, x.h, x.w);
        const int H = x.h, W = x.w;
        for (int n = 0; n < x.n; ++n) {
            for (int oc = 0; oc < out_ch_; ++oc) {
                T* out = y.chan(n, oc);
                std::fill(out, out + y.plane(), b_[size_t(oc)]);
                for (int ic = 0; ic < in_ch_; ++ic) {
                    const T* in = x.chan(n, ic);
                    const T* wk = w_.data() + ((size_t(oc) * in_ch_ + ic) * kh_) * kw_;
                    for (int ky = 0; ky < kh_; ++ky) {
                        for (int yy = 0; yy < H; ++yy) {
                            int iy = yy + ky - pt_;
                            if (iy < 0 || iy >= H) continue;
                            const T* in_row = in + size_t(iy) * W;
                            T* out_row = out + size_t(yy) * W;
                            for (int kx = 0; kx < kw_; ++kx) {
                                T wv = wk[size_t(ky) * kw_ + kx];
                                int shift = kx - pl_;
                                int x0 = std::max(0, -shift);
                                int x1 = std::min(W, W - shift);
                                const T* src = in_row + shift;
                                for (int xx = x0; xx < x1; ++xx) out_row[xx] += src[xx] * wv;
                            }
                        }
                    }
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        const int H = x_.h, W = x_.w;
        Tensor<T> dx(x_.n, in_ch_, H, W);
        for (int n = 0; n < x_.n; ++n) {
            for (int oc = 0; oc < out_ch_; ++oc) {
                const T* d = dy.chan(n, oc);
                T acc = T(0);
                for (size_t i = 0; i < dy.plane(); ++i) acc += d[i];
                gb_[size_t(oc)] += acc;
                for (int ic = 0; ic < in_ch_; ++ic) {
                    const T* in = x_.chan(n, ic);
                    T* dxc = dx.chan(n, ic);
                    T* gwk = gw_.data() + ((size_t(oc) * in_ch_ + ic) * kh_) * kw_;
                    const T* wk = w_.data() + ((size_t(oc) * in_ch_ + ic) * kh_) * kw_;
                    for (int ky = 0; ky < kh_; ++ky) {
                        for (int yy = 0; yy < H; ++yy) {
                            int iy = yy + ky - pt_;
                            if (iy < 0 || iy >= H) continue;
                            const T* in_row = in + size_t(iy) * W;
                            T* dx_row = dxc + size_t(iy) * W;
                            const T* d_row = d + size_t(yy) * W;
                            for (int kx = 0; kx < kw_; ++kx) {
                                int shift = kx - pl_;
                                int x0 = std::max(0, -shift);
                                int x1 = std::min(W, W - shift);
                                T wv = wk[size_t(ky) * kw_ + kx];
                                T gacc = T(0);
                                for (int xx = x0; xx < x1; ++xx) {
                                    gacc += in_row[xx + shift] * d_row[xx];
                                    dx_row[xx + shift] += wv * d_row[xx];
                                }
                                gwk[size_t(ky) * kw_ + kx] += gacc;
                            }
                        }
                    }
                }
            }
        }
        return dx;
    }

    void collect(std::vector<ParamView<T>>& out, const std::string& prefix) override {
        out.push_back({prefix + ".weight", w_.data(), gw_.data(),
                       {out_ch_, in_ch_, kh_, kw_}, w_.size()});
        out.push_back({prefix + ".bias", b_.data(), gb_.data(), {out_ch_}, b_.size()});
    }
    void zero_grad() override {
        std::fill(gw_.begin(), gw_.end(), T(0));
        std::fill(gb_.begin(), gb_.end(), T(0));
    }

private:
    int in_ch_, out_ch_, kh_, kw_, pt_, pl_;
    std::vector<T> w_, b_, gw_, gb_;
    Tensor<T> x_;
};

template <typename T>
class ReLU final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Phase, Rng*) override {
        mask_.assign(x.size(), 0);
        Tensor<T> y = x;
        for (size_t i = 0; i < y.size(); ++i) {
            if (y.v[i] > T(0))
                mask_[i] = 1;
            else
                y.v[i] = T(0);
        }
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx = dy;
        for (size_t i = 0; i < dx.size(); ++i)
            if (!mask_[i]) dx.v[i] = T(0);
        return dx;
    }

private:
    std::vector<uint8_t> mask_;
};

template <typename T>
class BatchNorm final : public Layer<T> {
public:
    explicit BatchNorm(int channels)
        : c_(channels), gamma_(size_t(channels), T(1)), beta_(size_t(channels), T(0)),
          rmean_(size_t(channels), T(0)), rvar_(size_t(channels), T(1)),
          ggamma_(size_t(channels), T(0)), gbeta_(size_t(channels), T(0)) {}

    Tensor<T> forward(const Tensor<T>& x, Phase phase, Rng*) override {
        phase_ = phase;
        Tensor<T> y(x.n, x.c, x.h, x.w);
        xhat_ = Tensor<T>(x.n, x.c, x.h, x.w);
        const size_t plane = x.plane();
        const size_t cnt = size_t(x.n) * plane;
        inv_std_.assign(size_t(c_), T(0));
        for (int ch = 0; ch < c_; ++ch) {
            T mean, var;
            if (phase != Phase::eval) {
                T sum = T(0);
                for (int n = 0; n < x.n; ++n) {
                    const T* p = x.chan(n, ch);
                    for (size_t i = 0; i < plane; ++i) sum += p[i];
                }
                mean = sum / T(cnt);
                T sq = T(0);
                for (int n = 0; n < x.n; ++n) {
                    const T* p = x.chan(n, ch);
                    for (size_t i = 0; i < plane; ++i) {
                        T d = p[i] - mean;
                        sq += d * d;
                    }
                }
                var = sq / T(cnt);  // biased, matching the normalization
                if (phase == Phase::train) {
                    rmean_[size_t(ch)] =
                        T(1 - kMomentum) * rmean_[size_t(ch)] + T(kMomentum) * mean;
                    rvar_[size_t(ch)] = T(1 - kMomentum) * rvar_[size_t(ch)] + T(kMomentum) * var;
                } else if (phase == Phase::calibrate) {
                    rmean_[size_t(ch)] = mean;
                    rvar_[size_t(ch)] = var;
                }
            } else {
                mean = rmean_[size_t(ch)];
                var = rvar_[size_t(ch)];
            }
            T inv = T(1) / std::sqrt(var + T(kEps));
            inv_std_[size_t(ch)] = inv;
            for (int n = 0; n < x.n; ++n) {
                const T* p = x.chan(n, ch);
                T* xh = xhat_.chan(n, ch);
                T* o = y.chan(n, ch);
                T g = gamma_[size_t(ch)], b = beta_[size_t(ch)];
                for (size_t i = 0; i < plane; ++i) {
                    xh[i] = (p[i] - mean) * inv;
                    o[i] = g * xh[i] + b;
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
        const size_t plane = dy.plane();
        const T cnt = T(size_t(dy.n) * plane);
        for (int ch = 0; ch < c_; ++ch) {
            T g = gamma_[size_t(ch)];
            T inv = inv_std_[size_t(ch)];
            T sum_dy = T(0), sum_dy_xhat = T(0);
            for (int n = 0; n < dy.n; ++n) {
                const T* d = dy.chan(n, ch);
                const T* xh = xhat_.chan(n, ch);
                for (size_t i = 0; i < plane; ++i) {
                    sum_dy += d[i];
                    sum_dy_xhat += d[i] * xh[i];
                }
            }
            ggamma_[size_t(ch)] += sum_dy_xhat;
            gbeta_[size_t(ch)] += sum_dy;
            for (int n = 0; n < dy.n; ++n) {
                const T* d = dy.chan(n, ch);
                const T* xh = xhat_.chan(n, ch);
                T* o = dx.chan(n, ch);
                if (phase_ != Phase::eval) {
                    for (size_t i = 0; i < plane; ++i)
                        o[i] = g * inv * (d[i] - sum_dy / cnt - xh[i] * sum_dy_xhat / cnt);
                } else {
                    // frozen statistics: a per-channel affine map
                    for (size_t i = 0; i < plane; ++i) o[i] = g * inv * d[i];
                }
            }
        }
        return dx;
    }

    void collect(std::vector<ParamView<T>>& out, const std::string& prefix) override {
        out.push_back({prefix + ".gamma", gamma_.data(), ggamma_.data(), {c_}, gamma_.size()});
        out.push_back({prefix + ".beta", beta_.data(), gbeta_.data(), {c_}, beta_.size()});
        out.push_back({prefix + ".running_mean", rmean_.data(), nullptr, {c_}, rmean_.size()});
        out.push_back({prefix + ".running_var", rvar_.data(), nullptr, {c_}, rvar_.size()});
    }
    void zero_grad() override {
        std::fill(ggamma_.begin(), ggamma_.end(), T(0));
        std::fill(gbeta_.begin(), gbeta_.end(), T(0));
    }

    static constexpr double kMomentum = 0.1;
    static constexpr double kEps = 1e-5;

private:
    int c_;
    std::vector<T> gamma_, beta_, rmean_, rvar_, ggamma_, gbeta_;
    std::vector<T> inv_std_;
    Tensor<T> xhat_;
    Phase phase_ = Phase::eval;
};

// Ceil-mode max pooling: the last window may be partial, so a pool can never
// produce an empty dimension. Ties go to the first maximum.
template <typename T>
class MaxPool final : public Layer<T> {
public:
    MaxPool(int ph, int pw) : ph_(ph), pw_(pw) {}

    static int out_len(int len, int p) { return (len + p - 1) / p; }

    Tensor<T> forward(const Tensor<T>& x, Phase, Rng*) override {
        in_n_ = x.n; in_c_ = x.c; in_h_ = x.h; in_w_ = x.w;
        int oh = out_len(x.h, ph_), ow = out_len(x.w, pw_);
        Tensor<T> y(x.n, x.c, oh, ow);
        arg_.assign(y.size(), 0);
        size_t oi = 0;
        for (int n = 0; n < x.n; ++n) {
            for (int ch = 0; ch < x.c; ++ch) {
                const T* in = x.chan(n, ch);
                for (int py = 0; py < oh; ++py) {
                    for (int px = 0; px < ow; ++px) {
                        int y0 = py * ph_, y1 = std::min(x.h, y0 + ph_);
                        int x0 = px * pw_, x1 = std::min(x.w, x0 + pw_);
                        T best = in[size_t(y0) * x.w + x0];
                        size_t best_i = size_t(y0) * x.w + x0;
                        for (int iy = y0; iy < y1; ++iy)
                            for (int ix = x0; ix < x1; ++ix) {
                                size_t ii = size_t(iy) * x.w + ix;
                                if (in[ii] > best) {
                                    best = in[ii];
                                    best_i = ii;
                                }
                            }
                        y.v[oi] = best;
                        arg_[oi] = best_i;
                        ++oi;
                    }
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx(in_n_, in_c_, in_h_, in_w_);
        size_t plane_in = size_t(in_h_) * in_w_;
        size_t oi = 0;
        for (int n = 0; n < dy.n; ++n) {
            for (int ch = 0; ch < dy.c; ++ch) {
                T* dst = dx.v.data() + (size_t(n) * in_c_ + ch) * plane_in;
                const T* d = dy.chan(n, ch);
                for (size_t i = 0; i < dy.plane(); ++i, ++oi) dst[arg_[oi]] += d[i];
            }
        }
        return dx;
    }

private:
    int ph_, pw_;
    int in_n_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
    std::vector<size_t> arg_;
};

template <typename T>
class Dropout final : public Layer<T> {
public:
    explicit Dropout(double p) : p_(p) {
        if (p < 0 || p >= 1) fail(TP_E_INVALID, "dropout probability must be in [0, 1)");
    }

    Tensor<T> forward(const Tensor<T>& x, Phase phase, Rng* rng) override {
        if (phase != Phase::train || p_ == 0.0) {
            identity_ = true;
            return x;
        }
        if (!rng) fail(TP_E_INTERNAL, "dropout in train mode needs an RNG");
        identity_ = false;
        mask_.assign(x.size(), T(0));
        T scale = T(1.0 / (1.0 - p_));
        Tensor<T> y = x;
        for (size_t i = 0; i < y.size(); ++i) {
            if (rng->bernoulli(1.0 - p_)) {
                mask_[i] = scale;
                y.v[i] *= scale;
            } else {
                y.v[i] = T(0);
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        if (identity_) return dy;
        Tensor<T> dx = dy;
        for (size_t i = 0; i < dx.size(); ++i) dx.v[i] *= mask_[i];
        return dx;
    }

private:
    double p_;
    bool identity_ = true;
    std::vector<T> mask_;
};

template <typename T>
class GlobalAvgPool final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Phase, Rng*) override {
        in_h_ = x.h; in_w_ = x.w;
        Tensor<T> y(x.n, x.c, 1, 1);
        for (int n = 0; n < x.n; ++n)
            for (int ch = 0; ch < x.c; ++ch) {
                const T* p = x.chan(n, ch);
                T acc = T(0);
                for (size_t i = 0; i < x.plane(); ++i) acc += p[i];
                y.v[size_t(n) * x.c + ch] = acc / T(x.plane());
            }
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx(dy.n, dy.c, in_h_, in_w_);
        T inv = T(1) / T(size_t(in_h_) * in_w_);
        for (int n = 0; n < dy.n; ++n)
            for (int ch = 0; ch < dy.c; ++ch) {
                T g = dy.v[size_t(n) * dy.c + ch] * inv;
                T* p = dx.chan(n, ch);
                for (size_t i = 0; i < dx.plane(); ++i) p[i] = g;
            }
        return dx;
    }

private:
    int in_h_ = 0, in_w_ = 0;
};

template <typename T>
class Network {
public:
    Network() = default;

    explicit Network(const ArchConfig& arch, uint64_t seed) : arch_(arch) {
        arch.validate();
        Rng rng(seed);
        int ch = 2;
        auto conv = [&](int out_ch, int kh, int kw) {
            auto c = std::make_unique<Conv2d<T>>(ch, out_ch, kh, kw);
            c->init(rng);
            layers_.push_back(std::move(c));
            ch = out_ch;
        };
        for (const auto& b : arch.blocks2d) {
            for (int rep = 0; rep < 2; ++rep) {
                conv(b.filters, b.kh, b.kw);
                layers_.push_back(std::make_unique<ReLU<T>>());
                layers_.push_back(std::make_unique<BatchNorm<T>>(ch));
            }
            layers_.push_back(std::make_unique<MaxPool<T>>(b.ph, b.pw));
            layers_.push_back(std::make_unique<Dropout<T>>(b.dropout));
        }
        conv(arch.reduce_channels, 1, 1);  // the height-1 map re-read as a 1D sequence
        for (const auto& b : arch.blocks1d) {
            for (int rep = 0; rep < 2; ++rep) {
                conv(b.filters, 1, b.k);
                layers_.push_back(std::make_unique<ReLU<T>>());
                layers_.push_back(std::make_unique<BatchNorm<T>>(ch));
            }
            layers_.push_back(std::make_unique<MaxPool<T>>(1, b.pool));
            layers_.push_back(std::make_unique<Dropout<T>>(b.dropout));
        }
        final_conv_index_ = layers_.size();
        conv(arch.num_classes, 1, 1);
        layers_.push_back(std::make_unique<GlobalAvgPool<T>>());
    }

    const ArchConfig& arch() const { return arch_; }

    // Logits, shape (n, num_classes, 1, 1). embedding, when requested, holds
    // the per-channel mean of the features entering the final conv.
    Tensor<T> logits(const Tensor<T>& x, Phase phase, Rng* rng,
                     std::vector<std::vector<T>>* embedding = nullptr) {
        if (x.c != 2 || x.h != 2 || x.w != arch_.width)
            fail(TP_E_SHAPE, "ShapeMismatch: expected input 2x2x" + std::to_string(arch_.width) +
                                 ", got " + std::to_string(x.c) + "x" + std::to_string(x.h) +
                                 "x" + std::to_string(x.w));
        Tensor<T> cur = x;
        for (size_t i = 0; i < layers_.size(); ++i) {
            if (embedding && i == final_conv_index_) {
                embedding->assign(size_t(cur.n), std::vector<T>(size_t(cur.c), T(0)));
                for (int n = 0; n < cur.n; ++n)
                    for (int ch = 0; ch < cur.c; ++ch) {
                        const T* p = cur.chan(n, ch);
                        T acc = T(0);
                        for (size_t k = 0; k < cur.plane(); ++k) acc += p[k];
                        (*embedding)[size_t(n)][size_t(ch)] = acc / T(cur.plane());
                    }
            }
            cur = layers_[i]->forward(cur, phase, rng);
        }
        return cur;
    }

    // Back-propagates d(loss)/d(logits) through the cached forward pass.
    void backward(const Tensor<T>& dlogits) {
        Tensor<T> cur = dlogits;
        for (size_t i = layers_.size(); i-- > 0;) cur = layers_[i]->backward(cur);
    }

    std::vector<ParamView<T>> params() {
        std::vector<ParamView<T>> out;
        for (size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->collect(out, "layer" + std::to_string(i));
        return out;
    }

    void zero_grad() {
        for (auto& l : layers_) l->zero_grad();
    }

private:
    ArchConfig arch_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    size_t final_conv_index_ = 0;
};

// Softmax probabilities from a logits row.
template <typename T>
inline void softmax_row(const T* logits, int c, double* out) {
    double mx = double(logits[0]);
    for (int i = 1; i < c; ++i) mx = std::max(mx, double(logits[i]));
    double sum = 0;
    for (int i = 0; i < c; ++i) {
        out[i] = std::exp(double(logits[i]) - mx);
        sum += out[i];
    }
    for (int i = 0; i < c; ++i) out[i] /= sum;
}

// Mean cross-entropy over the batch; fills dlogits = (softmax - onehot) / n.
template <typename T>
inline double softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                                    Tensor<T>* dlogits) {
    const int c = logits.c;
    double loss = 0;
    if (dlogits) *dlogits = Tensor<T>(logits.n, c, 1, 1);
    std::vector<double> p(static_cast<size_t>(c));
    for (int n = 0; n < logits.n; ++n) {
        softmax_row(logits.v.data() + size_t(n) * c, c, p.data());
        int y = labels[size_t(n)];
        loss -= std::log(std::max(p[size_t(y)], 1e-300));
        if (dlogits)
            for (int i = 0; i < c; ++i)
                dlogits->v[size_t(n) * c + i] =
                    T((p[size_t(i)] - (i == y ? 1.0 : 0.0)) / double(logits.n));
    }
    return loss / double(logits.n);
}

}  // namespace tp::nn
