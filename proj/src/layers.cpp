#include "pfedmoe/layers.hpp"

#include <algorithm>
#include <cmath>

namespace pfedmoe {

namespace {

void init_uniform(Tensor& t, Rng& rng, std::int64_t fan_in) {
    const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<real>(rng.uniform(-a, a));
}

void expect_rank(const Tensor& x, std::size_t rank, const std::string& kind) {
    require(x.rank() == rank, "shape",
            kind + " expects rank-" + std::to_string(rank) + " input, got " + x.shape_str());
}

}  // namespace

// ---- Dense -----------------------------------------------------------------

Dense::Dense(std::int64_t in, std::int64_t out, Rng& rng)
    : in_(in), out_(out), w_({out, in}), b_({out}), dw_({out, in}), db_({out}) {
    require(in > 0 && out > 0, "shape", "dense dims must be positive");
    init_uniform(w_, rng, in);
}

Tensor Dense::apply(const Tensor& x) const {
    expect_rank(x, 2, "dense");
    require(x.dim(1) == in_, "shape",
            "dense expects " + std::to_string(in_) + " input features, got " + x.shape_str());
    const std::int64_t batch = x.dim(0);
    Tensor y({batch, out_});
    for (std::int64_t i = 0; i < batch; ++i) {
        const real* xr = x.data() + i * in_;
        real* yr = y.data() + i * out_;
        for (std::int64_t o = 0; o < out_; ++o) {
            const real* wr = w_.data() + o * in_;
            real acc = b_[o];
            for (std::int64_t j = 0; j < in_; ++j) acc += wr[j] * xr[j];
            yr[o] = acc;
        }
    }
    return y;
}

Tensor Dense::infer(const Tensor& x) const { return apply(x); }

Tensor Dense::forward_train(const Tensor& x, LayerCtx& ctx, bool) {
    ctx.in = x;
    return apply(x);
}

Tensor Dense::backward(const Tensor& dy, const LayerCtx& ctx) {
    const Tensor& x = ctx.in;
    const std::int64_t batch = x.dim(0);
    Tensor dx({batch, in_});
    for (std::int64_t i = 0; i < batch; ++i) {
        const real* xr = x.data() + i * in_;
        const real* gr = dy.data() + i * out_;
        real* dxr = dx.data() + i * in_;
        for (std::int64_t o = 0; o < out_; ++o) {
            const real g = gr[o];
            real* dwr = dw_.data() + o * in_;
            const real* wr = w_.data() + o * in_;
            db_[o] += g;
            for (std::int64_t j = 0; j < in_; ++j) {
                dwr[j] += g * xr[j];
                dxr[j] += g * wr[j];
            }
        }
    }
    return dx;
}

std::vector<ParamRef> Dense::params() {
    return {{"weight", &w_, &dw_}, {"bias", &b_, &db_}};
}

std::vector<std::int64_t> Dense::out_shape(const std::vector<std::int64_t>& in) const {
    require(in.size() == 1 && in[0] == in_, "shape", "dense shape mismatch");
    return {out_};
}

std::int64_t Dense::flops(const std::vector<std::int64_t>&) const { return 2 * in_ * out_; }

// ---- Conv2d ----------------------------------------------------------------

Conv2d::Conv2d(std::int64_t in_ch, std::int64_t out_ch, Rng& rng, std::int64_t kernel,
               std::int64_t stride, std::int64_t padding)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      k_(kernel),
      stride_(stride),
      pad_(padding),
      w_({out_ch, in_ch, kernel, kernel}),
      b_({out_ch}),
      dw_({out_ch, in_ch, kernel, kernel}),
      db_({out_ch}) {
    require(in_ch > 0 && out_ch > 0 && kernel > 0 && stride > 0 && padding >= 0, "shape",
            "bad conv2d configuration");
    init_uniform(w_, rng, in_ch * kernel * kernel);
}

std::int64_t Conv2d::conv_dim(std::int64_t in) const {
    std::int64_t num = in - k_ + 2 * pad_;
    require(num >= 0, "shape",
            "conv2d input too small: " + std::to_string(in) + " for kernel " + std::to_string(k_));
    return num / stride_ + 1;
}

Tensor Conv2d::apply(const Tensor& x) const {
    expect_rank(x, 4, "conv2d");
    require(x.dim(1) == in_ch_, "shape", "conv2d expects " + std::to_string(in_ch_) + " channels");
    const std::int64_t batch = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::int64_t oh = conv_dim(h), ow = conv_dim(w);
    Tensor y({batch, out_ch_, oh, ow});
    for (std::int64_t n = 0; n < batch; ++n)
        for (std::int64_t oc = 0; oc < out_ch_; ++oc)
            for (std::int64_t i = 0; i < oh; ++i)
                for (std::int64_t j = 0; j < ow; ++j) {
                    real acc = b_[oc];
                    const std::int64_t hi0 = i * stride_ - pad_;
                    const std::int64_t wi0 = j * stride_ - pad_;
                    for (std::int64_t ic = 0; ic < in_ch_; ++ic)
                        for (std::int64_t ki = 0; ki < k_; ++ki) {
                            const std::int64_t hi = hi0 + ki;
                            if (hi < 0 || hi >= h) continue;
                            for (std::int64_t kj = 0; kj < k_; ++kj) {
                                const std::int64_t wi = wi0 + kj;
                                if (wi < 0 || wi >= w) continue;
                                acc += w_.at4(oc, ic, ki, kj) * x.at4(n, ic, hi, wi);
                            }
                        }
                    y.at4(n, oc, i, j) = acc;
                }
    return y;
}

Tensor Conv2d::infer(const Tensor& x) const { return apply(x); }

Tensor Conv2d::forward_train(const Tensor& x, LayerCtx& ctx, bool) {
    ctx.in = x;
    return apply(x);
}

Tensor Conv2d::backward(const Tensor& dy, const LayerCtx& ctx) {
    const Tensor& x = ctx.in;
    const std::int64_t batch = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::int64_t oh = dy.dim(2), ow = dy.dim(3);
    Tensor dx({batch, in_ch_, h, w});
    for (std::int64_t n = 0; n < batch; ++n)
        for (std::int64_t oc = 0; oc < out_ch_; ++oc)
            for (std::int64_t i = 0; i < oh; ++i)
                for (std::int64_t j = 0; j < ow; ++j) {
                    const real g = dy.at4(n, oc, i, j);
                    db_[oc] += g;
                    const std::int64_t hi0 = i * stride_ - pad_;
                    const std::int64_t wi0 = j * stride_ - pad_;
                    for (std::int64_t ic = 0; ic < in_ch_; ++ic)
                        for (std::int64_t ki = 0; ki < k_; ++ki) {
                            const std::int64_t hi = hi0 + ki;
                            if (hi < 0 || hi >= h) continue;
                            for (std::int64_t kj = 0; kj < k_; ++kj) {
                                const std::int64_t wi = wi0 + kj;
                                if (wi < 0 || wi >= w) continue;
                                dw_.at4(oc, ic, ki, kj) += g * x.at4(n, ic, hi, wi);
                                dx.at4(n, ic, hi, wi) += g * w_.at4(oc, ic, ki, kj);
                            }
                        }
                }
    return dx;
}

std::vector<ParamRef> Conv2d::params() {
    return {{"weight", &w_, &dw_}, {"bias", &b_, &db_}};
}

std::vector<std::int64_t> Conv2d::out_shape(const std::vector<std::int64_t>& in) const {
    require(in.size() == 3 && in[0] == in_ch_, "shape", "conv2d shape mismatch");
    auto oh = conv_dim(in[1]), ow = conv_dim(in[2]);
    require(oh >= 1 && ow >= 1, "shape", "conv2d output collapsed to zero");
    return {out_ch_, oh, ow};
}

std::int64_t Conv2d::flops(const std::vector<std::int64_t>& in) const {
    auto out = out_shape(in);
    return 2 * k_ * k_ * in_ch_ * out_ch_ * out[1] * out[2];
}

// ---- MaxPool2d ---------------------------------------------------------------

MaxPool2d::MaxPool2d(std::int64_t size, std::int64_t stride) : size_(size), stride_(stride) {
    require(size > 0 && stride > 0, "shape", "bad maxpool configuration");
}

std::int64_t MaxPool2d::pool_dim(std::int64_t in) const {
    // truncating division: a trailing window smaller than `size_` is clipped
    std::int64_t out = (in - size_) / stride_ + 1;
    require(out >= 1, "shape", "maxpool output collapsed to zero");
    return out;
}

Tensor MaxPool2d::apply(const Tensor& x) const {
    expect_rank(x, 4, "maxpool2d");
    const std::int64_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t oh = pool_dim(h), ow = pool_dim(w);
    Tensor y({batch, ch, oh, ow});
    for (std::int64_t n = 0; n < batch; ++n)
        for (std::int64_t c = 0; c < ch; ++c)
            for (std::int64_t i = 0; i < oh; ++i)
                for (std::int64_t j = 0; j < ow; ++j) {
                    const std::int64_t h0 = i * stride_, w0 = j * stride_;
                    const std::int64_t h1 = std::min(h0 + size_, h), w1 = std::min(w0 + size_, w);
                    real best = x.at4(n, c, h0, w0);
                    for (std::int64_t hi = h0; hi < h1; ++hi)
                        for (std::int64_t wi = w0; wi < w1; ++wi)
                            best = std::max(best, x.at4(n, c, hi, wi));
                    y.at4(n, c, i, j) = best;
                }
    return y;
}

Tensor MaxPool2d::infer(const Tensor& x) const { return apply(x); }

Tensor MaxPool2d::forward_train(const Tensor& x, LayerCtx& ctx, bool) {
    ctx.in = x;
    return apply(x);
}

Tensor MaxPool2d::backward(const Tensor& dy, const LayerCtx& ctx) {
    const Tensor& x = ctx.in;
    const std::int64_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t oh = dy.dim(2), ow = dy.dim(3);
    Tensor dx({batch, ch, h, w});
    for (std::int64_t n = 0; n < batch; ++n)
        for (std::int64_t c = 0; c < ch; ++c)
            for (std::int64_t i = 0; i < oh; ++i)
                for (std::int64_t j = 0; j < ow; ++j) {
                    const std::int64_t h0 = i * stride_, w0 = j * stride_;
                    const std::int64_t h1 = std::min(h0 + size_, h), w1 = std::min(w0 + size_, w);
                    // first max in row-major order wins, which keeps the
                    // backward route deterministic under ties
                    std::int64_t bh = h0, bw = w0;
                    real best = x.at4(n, c, h0, w0);
                    for (std::int64_t hi = h0; hi < h1; ++hi)
                        for (std::int64_t wi = w0; wi < w1; ++wi)
                            if (x.at4(n, c, hi, wi) > best) {
                                best = x.at4(n, c, hi, wi);
                                bh = hi;
                                bw = wi;
                            }
                    dx.at4(n, c, bh, bw) += dy.at4(n, c, i, j);
                }
    return dx;
}

std::vector<std::int64_t> MaxPool2d::out_shape(const std::vector<std::int64_t>& in) const {
    require(in.size() == 3, "shape", "maxpool shape mismatch");
    return {in[0], pool_dim(in[1]), pool_dim(in[2])};
}

std::int64_t MaxPool2d::flops(const std::vector<std::int64_t>& in) const {
    return shape_size(out_shape(in));
}

// ---- Flatten ----------------------------------------------------------------

Tensor Flatten::infer(const Tensor& x) const {
    require(x.rank() >= 2, "shape", "flatten expects a batch dimension");
    std::int64_t batch = x.dim(0);
    return Tensor({batch, x.size() / batch}, x.values());
}

Tensor Flatten::forward_train(const Tensor& x, LayerCtx& ctx, bool) {
    ctx.a = Tensor({static_cast<std::int64_t>(x.rank())},
                   std::vector<real>(x.shape().begin(), x.shape().end()));
    return infer(x);
}

Tensor Flatten::backward(const Tensor& dy, const LayerCtx& ctx) {
    std::vector<std::int64_t> shape(ctx.a.values().begin(), ctx.a.values().end());
    return Tensor(shape, dy.values());
}

std::vector<std::int64_t> Flatten::out_shape(const std::vector<std::int64_t>& in) const {
    return {shape_size(in)};
}

// ---- ReLU / Sigmoid ----------------------------------------------------------

Tensor ReLU::infer(const Tensor& x) const {
    Tensor y = x;
    for (std::int64_t i = 0; i < y.size(); ++i) y[i] = std::max(y[i], real(0));
    return y;
}

Tensor ReLU::forward_train(const Tensor& x, LayerCtx& ctx, bool) {
    ctx.in = x;
    return infer(x);
}

Tensor ReLU::backward(const Tensor& dy, const LayerCtx& ctx) {
    Tensor dx = dy;
    for (std::int64_t i = 0; i < dx.size(); ++i)
        if (ctx.in[i] <= real(0)) dx[i] = real(0);
    return dx;
}

Tensor Sigmoid::infer(const Tensor& x) const {
    Tensor y = x;
    for (std::int64_t i = 0; i < y.size(); ++i) y[i] = real(1) / (real(1) + std::exp(-y[i]));
    return y;
}

Tensor Sigmoid::forward_train(const Tensor& x, LayerCtx& ctx, bool) {
    Tensor y = infer(x);
    ctx.out = y;
    return y;
}

Tensor Sigmoid::backward(const Tensor& dy, const LayerCtx& ctx) {
    Tensor dx = dy;
    for (std::int64_t i = 0; i < dx.size(); ++i) {
        const real s = ctx.out[i];
        dx[i] *= s * (real(1) - s);
    }
    return dx;
}

// ---- Softmax ------------------------------------------------------------------

Tensor Softmax::infer(const Tensor& x) const {
    require(x.rank() == 1 || x.rank() == 2, "shape", "softmax expects (C) or (B,C)");
    const std::int64_t classes = x.rank() == 1 ? x.dim(0) : x.dim(1);
    const std::int64_t rows = x.size() / classes;
    Tensor y = x;
    for (std::int64_t r = 0; r < rows; ++r) {
        real* row = y.data() + r * classes;
        real mx = row[0];
        for (std::int64_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        real sum = 0;
        for (std::int64_t c = 0; c < classes; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        for (std::int64_t c = 0; c < classes; ++c) row[c] /= sum;
    }
    return y;
}

Tensor Softmax::forward_train(const Tensor& x, LayerCtx& ctx, bool) {
    Tensor y = infer(x);
    ctx.out = y;
    return y;
}

Tensor Softmax::backward(const Tensor& dy, const LayerCtx& ctx) {
    const Tensor& y = ctx.out;
    const std::int64_t classes = y.rank() == 1 ? y.dim(0) : y.dim(1);
    const std::int64_t rows = y.size() / classes;
    Tensor dx = dy;
    for (std::int64_t r = 0; r < rows; ++r) {
        const real* yr = y.data() + r * classes;
        real* dr = dx.data() + r * classes;
        real dot = 0;
        for (std::int64_t c = 0; c < classes; ++c) dot += yr[c] * dr[c];
        for (std::int64_t c = 0; c < classes; ++c) dr[c] = yr[c] * (dr[c] - dot);
    }
    return dx;
}

// ---- BatchNorm ------------------------------------------------------------------

BatchNorm::BatchNorm(std::int64_t features, real eps, real momentum, bool affine)
    : features_(features),
      eps_(eps),
      momentum_(momentum),
      affine_(affine),
      gamma_(Tensor::full({features}, real(1))),
      beta_({features}),
      dgamma_({features}),
      dbeta_({features}),
      run_mean_({features}),
      run_var_(Tensor::full({features}, real(1))) {}

Tensor BatchNorm::infer(const Tensor& x) const {
    expect_rank(x, 2, "batchnorm");
    require(x.dim(1) == features_, "shape", "batchnorm feature mismatch");
    const std::int64_t batch = x.dim(0);
    Tensor y({batch, features_});
    for (std::int64_t j = 0; j < features_; ++j) {
        const real inv = real(1) / std::sqrt(run_var_[j] + eps_);
        const real g = affine_ ? gamma_[j] : real(1);
        const real b = affine_ ? beta_[j] : real(0);
        for (std::int64_t i = 0; i < batch; ++i)
            y.at2(i, j) = (x.at2(i, j) - run_mean_[j]) * inv * g + b;
    }
    return y;
}

Tensor BatchNorm::forward_train(const Tensor& x, LayerCtx& ctx, bool update_stats) {
    expect_rank(x, 2, "batchnorm");
    require(x.dim(1) == features_, "shape", "batchnorm feature mismatch");
    const std::int64_t batch = x.dim(0);
    Tensor mean({features_}), var({features_});
    for (std::int64_t j = 0; j < features_; ++j) {
        real m = 0;
        for (std::int64_t i = 0; i < batch; ++i) m += x.at2(i, j);
        m /= static_cast<real>(batch);
        real v = 0;
        for (std::int64_t i = 0; i < batch; ++i) {
            const real d = x.at2(i, j) - m;
            v += d * d;
        }
        v /= static_cast<real>(batch);
        mean[j] = m;
        var[j] = v;
    }
    if (update_stats) {
        for (std::int64_t j = 0; j < features_; ++j) {
            run_mean_[j] = (real(1) - momentum_) * run_mean_[j] + momentum_ * mean[j];
            run_var_[j] = (real(1) - momentum_) * run_var_[j] + momentum_ * var[j];
        }
    }
    Tensor xhat({batch, features_});
    Tensor y({batch, features_});
    for (std::int64_t j = 0; j < features_; ++j) {
        const real inv = real(1) / std::sqrt(var[j] + eps_);
        const real g = affine_ ? gamma_[j] : real(1);
        const real b = affine_ ? beta_[j] : real(0);
        for (std::int64_t i = 0; i < batch; ++i) {
            const real h = (x.at2(i, j) - mean[j]) * inv;
            xhat.at2(i, j) = h;
            y.at2(i, j) = g * h + b;
        }
    }
    ctx.a = std::move(xhat);
    ctx.b = std::move(var);
    return y;
}

Tensor BatchNorm::backward(const Tensor& dy, const LayerCtx& ctx) {
    const Tensor& xhat = ctx.a;
    const Tensor& var = ctx.b;
    const std::int64_t batch = dy.dim(0);
    Tensor dx({batch, features_});
    for (std::int64_t j = 0; j < features_; ++j) {
        const real g = affine_ ? gamma_[j] : real(1);
        const real inv = real(1) / std::sqrt(var[j] + eps_);
        real sum_g = 0, sum_gh = 0;
        for (std::int64_t i = 0; i < batch; ++i) {
            const real gi = dy.at2(i, j) * g;
            sum_g += gi;
            sum_gh += gi * xhat.at2(i, j);
        }
        if (affine_) {
            for (std::int64_t i = 0; i < batch; ++i) {
                dgamma_[j] += dy.at2(i, j) * xhat.at2(i, j);
                dbeta_[j] += dy.at2(i, j);
            }
        }
        const real nb = static_cast<real>(batch);
        for (std::int64_t i = 0; i < batch; ++i) {
            const real gi = dy.at2(i, j) * g;
            dx.at2(i, j) = inv * (gi - sum_g / nb - xhat.at2(i, j) * sum_gh / nb);
        }
    }
    return dx;
}

std::vector<ParamRef> BatchNorm::params() {
    if (!affine_) return {};
    return {{"gamma", &gamma_, &dgamma_}, {"beta", &beta_, &dbeta_}};
}

std::vector<ParamRef> BatchNorm::buffers() {
    return {{"running_mean", &run_mean_, nullptr}, {"running_var", &run_var_, nullptr}};
}

// ---- SwitchNorm ------------------------------------------------------------------

SwitchNorm::SwitchNorm(std::int64_t features, real eps, bool affine)
    : features_(features),
      eps_(eps),
      affine_(affine),
      mean_logits_({2}),
      var_logits_({2}),
      dmean_logits_({2}),
      dvar_logits_({2}),
      gamma_(Tensor::full({features}, real(1))),
      beta_({features}),
      dgamma_({features}),
      dbeta_({features}),
      run_mean_({features}),
      run_var_(Tensor::full({features}, real(1))) {}

void SwitchNorm::softmax2(const Tensor& logits, real& w0, real& w1) {
    const real mx = std::max(logits[0], logits[1]);
    const real e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
    w0 = e0 / (e0 + e1);
    w1 = e1 / (e0 + e1);
}

Tensor SwitchNorm::infer(const Tensor& x) const {
    expect_rank(x, 2, "switchnorm");
    require(x.dim(1) == features_, "shape", "switchnorm feature mismatch");
    const std::int64_t batch = x.dim(0);
    real pb, pl, qb, ql;
    softmax2(mean_logits_, pb, pl);
    softmax2(var_logits_, qb, ql);
    Tensor y({batch, features_});
    const real nf = static_cast<real>(features_);
    for (std::int64_t i = 0; i < batch; ++i) {
        real ml = 0;
        for (std::int64_t j = 0; j < features_; ++j) ml += x.at2(i, j);
        ml /= nf;
        real vl = 0;
        for (std::int64_t j = 0; j < features_; ++j) {
            const real d = x.at2(i, j) - ml;
            vl += d * d;
        }
        vl /= nf;
        for (std::int64_t j = 0; j < features_; ++j) {
            const real mu = pb * run_mean_[j] + pl * ml;
            const real v = qb * run_var_[j] + ql * vl;
            real h = (x.at2(i, j) - mu) / std::sqrt(v + eps_);
            if (affine_) h = gamma_[j] * h + beta_[j];
            y.at2(i, j) = h;
        }
    }
    return y;
}

Tensor SwitchNorm::forward_train(const Tensor& x, LayerCtx& ctx, bool update_stats) {
    expect_rank(x, 2, "switchnorm");
    require(x.dim(1) == features_, "shape", "switchnorm feature mismatch");
    const std::int64_t batch = x.dim(0);
    const real nb = static_cast<real>(batch), nf = static_cast<real>(features_);

    Tensor mb({features_}), vb({features_});
    for (std::int64_t j = 0; j < features_; ++j) {
        real m = 0;
        for (std::int64_t i = 0; i < batch; ++i) m += x.at2(i, j);
        m /= nb;
        real v = 0;
        for (std::int64_t i = 0; i < batch; ++i) {
            const real d = x.at2(i, j) - m;
            v += d * d;
        }
        mb[j] = m;
        vb[j] = v / nb;
    }
    Tensor ml({batch}), vl({batch});
    for (std::int64_t i = 0; i < batch; ++i) {
        real m = 0;
        for (std::int64_t j = 0; j < features_; ++j) m += x.at2(i, j);
        m /= nf;
        real v = 0;
        for (std::int64_t j = 0; j < features_; ++j) {
            const real d = x.at2(i, j) - m;
            v += d * d;
        }
        ml[i] = m;
        vl[i] = v / nf;
    }
    if (update_stats) {
        for (std::int64_t j = 0; j < features_; ++j) {
            run_mean_[j] = (real(1) - momentum_) * run_mean_[j] + momentum_ * mb[j];
            run_var_[j] = (real(1) - momentum_) * run_var_[j] + momentum_ * vb[j];
        }
    }

    real pb, pl, qb, ql;
    softmax2(mean_logits_, pb, pl);
    softmax2(var_logits_, qb, ql);

    Tensor y({batch, features_});
    Tensor xhat({batch, features_});
    Tensor rinv({batch, features_});
    for (std::int64_t i = 0; i < batch; ++i)
        for (std::int64_t j = 0; j < features_; ++j) {
            const real mu = pb * mb[j] + pl * ml[i];
            const real v = qb * vb[j] + ql * vl[i];
            const real r = real(1) / std::sqrt(v + eps_);
            const real h = (x.at2(i, j) - mu) * r;
            rinv.at2(i, j) = r;
            xhat.at2(i, j) = h;
            y.at2(i, j) = affine_ ? gamma_[j] * h + beta_[j] : h;
        }

    ctx.in = x;
    ctx.a = std::move(xhat);
    ctx.b = std::move(rinv);
    ctx.c = std::move(mb);   // (features) batch means
    ctx.d = std::move(ml);   // (batch) layer means
    // batch/layer variances are recoverable but cheap to keep: pack both
    Tensor packed({features_ + batch});
    for (std::int64_t j = 0; j < features_; ++j) packed[j] = vb[j];
    for (std::int64_t i = 0; i < batch; ++i) packed[features_ + i] = vl[i];
    ctx.out = std::move(packed);
    return y;
}

Tensor SwitchNorm::backward(const Tensor& dy, const LayerCtx& ctx) {
    const Tensor& x = ctx.in;
    const Tensor& xhat = ctx.a;
    const Tensor& rinv = ctx.b;
    const Tensor& mb = ctx.c;
    const Tensor& ml = ctx.d;
    const std::int64_t batch = x.dim(0);
    const real nb = static_cast<real>(batch), nf = static_cast<real>(features_);

    real pb, pl, qb, ql;
    softmax2(mean_logits_, pb, pl);
    softmax2(var_logits_, qb, ql);

    // g = dL/dxhat; dmu = dL/dmu_ij; dvar = dL/dvar_ij
    Tensor g({batch, features_}), dmu({batch, features_}), dvar({batch, features_});
    for (std::int64_t i = 0; i < batch; ++i)
        for (std::int64_t j = 0; j < features_; ++j) {
            const real gij = dy.at2(i, j) * (affine_ ? gamma_[j] : real(1));
            g.at2(i, j) = gij;
            const real r = rinv.at2(i, j);
            dmu.at2(i, j) = -gij * r;
            dvar.at2(i, j) = -real(0.5) * gij * xhat.at2(i, j) * r * r;
        }
    if (affine_) {
        for (std::int64_t i = 0; i < batch; ++i)
            for (std::int64_t j = 0; j < features_; ++j) {
                dgamma_[j] += dy.at2(i, j) * xhat.at2(i, j);
                dbeta_[j] += dy.at2(i, j);
            }
    }

    // mixing-logit gradients (softmax pairs)
    real dL_pb = 0, dL_pl = 0, dL_qb = 0, dL_ql = 0;
    for (std::int64_t i = 0; i < batch; ++i)
        for (std::int64_t j = 0; j < features_; ++j) {
            dL_pb += dmu.at2(i, j) * mb[j];
            dL_pl += dmu.at2(i, j) * ml[i];
            dL_qb += dvar.at2(i, j) * ctx.out[j];
            dL_ql += dvar.at2(i, j) * ctx.out[features_ + i];
        }
    {
        const real dot = pb * dL_pb + pl * dL_pl;
        dmean_logits_[0] += pb * (dL_pb - dot);
        dmean_logits_[1] += pl * (dL_pl - dot);
        const real dotv = qb * dL_qb + ql * dL_ql;
        dvar_logits_[0] += qb * (dL_qb - dotv);
        dvar_logits_[1] += ql * (dL_ql - dotv);
    }

    // input gradient; the mean terms contribute nothing through the variances
    // because sum(x - mean) = 0 within each statistic's scope
    Tensor dmb({features_}), dvb({features_});
    for (std::int64_t j = 0; j < features_; ++j) {
        real sm = 0, sv = 0;
        for (std::int64_t i = 0; i < batch; ++i) {
            sm += dmu.at2(i, j);
            sv += dvar.at2(i, j);
        }
        dmb[j] = pb * sm;
        dvb[j] = qb * sv;
    }
    Tensor dml({batch}), dvl({batch});
    for (std::int64_t i = 0; i < batch; ++i) {
        real sm = 0, sv = 0;
        for (std::int64_t j = 0; j < features_; ++j) {
            sm += dmu.at2(i, j);
            sv += dvar.at2(i, j);
        }
        dml[i] = pl * sm;
        dvl[i] = ql * sv;
    }

    Tensor dx({batch, features_});
    for (std::int64_t i = 0; i < batch; ++i)
        for (std::int64_t j = 0; j < features_; ++j) {
            real v = g.at2(i, j) * rinv.at2(i, j);
            v += dmb[j] / nb + dvb[j] * real(2) * (x.at2(i, j) - mb[j]) / nb;
            v += dml[i] / nf + dvl[i] * real(2) * (x.at2(i, j) - ml[i]) / nf;
            dx.at2(i, j) = v;
        }
    return dx;
}

std::vector<ParamRef> SwitchNorm::params() {
    std::vector<ParamRef> p = {{"mean_logits", &mean_logits_, &dmean_logits_},
                               {"var_logits", &var_logits_, &dvar_logits_}};
    if (affine_) {
        p.push_back({"gamma", &gamma_, &dgamma_});
        p.push_back({"beta", &beta_, &dbeta_});
    }
    return p;
}

std::vector<ParamRef> SwitchNorm::buffers() {
    return {{"running_mean", &run_mean_, nullptr}, {"running_var", &run_var_, nullptr}};
}

}  // namespace pfedmoe
