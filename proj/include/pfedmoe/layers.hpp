#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pfedmoe/rng.hpp"
#include "pfedmoe/tensor.hpp"

namespace pfedmoe {

// Per-layer state recorded by a train-mode forward; owned by the Tape, not
// the layer, so eval-mode forwards stay read-only.
struct LayerCtx {
    Tensor in;
    Tensor out;
    Tensor a;  // layer-specific extras (norm statistics etc.)
    Tensor b;
    Tensor c;
    Tensor d;
};

// name -> value/grad pair; gradients always match their value's shape
struct ParamRef {
    std::string name;
    Tensor* value;
    Tensor* grad;  // null for buffers
};

class Layer {
public:
    virtual ~Layer() = default;

    virtual std::string kind() const = 0;

    // eval-mode forward: physically const, never touches running statistics
    virtual Tensor infer(const Tensor& x) const = 0;

    // train-mode forward; `update_stats=false` freezes running statistics
    // (used by the gradient checker, which re-evaluates repeatedly)
    virtual Tensor forward_train(const Tensor& x, LayerCtx& ctx, bool update_stats) = 0;

    // accumulates into parameter gradients and returns dL/dx
    virtual Tensor backward(const Tensor& dy, const LayerCtx& ctx) = 0;

    virtual std::vector<ParamRef> params() { return {}; }
    virtual std::vector<ParamRef> buffers() { return {}; }

    // shape/flops bookkeeping on a per-sample shape (no batch dim)
    virtual std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>& in) const = 0;
    virtual std::int64_t flops(const std::vector<std::int64_t>& in) const = 0;

    virtual std::unique_ptr<Layer> clone() const = 0;
};

class Dense : public Layer {
public:
    Dense(std::int64_t in, std::int64_t out, Rng& rng);

    std::string kind() const override { return "dense"; }
    Tensor infer(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x, LayerCtx& ctx, bool update_stats) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
    std::vector<ParamRef> params() override;
    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>& in) const override;
    std::int64_t flops(const std::vector<std::int64_t>& in) const override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

    std::int64_t in_features() const { return in_; }
    std::int64_t out_features() const { return out_; }

private:
    Tensor apply(const Tensor& x) const;

    std::int64_t in_, out_;
    Tensor w_, b_;        // w: (out, in)
    Tensor dw_, db_;
};

class Conv2d : public Layer {
public:
    Conv2d(std::int64_t in_ch, std::int64_t out_ch, Rng& rng, std::int64_t kernel = 5,
           std::int64_t stride = 1, std::int64_t padding = 0);

    std::string kind() const override { return "conv2d"; }
    Tensor infer(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x, LayerCtx& ctx, bool update_stats) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
    std::vector<ParamRef> params() override;
    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>& in) const override;
    std::int64_t flops(const std::vector<std::int64_t>& in) const override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

private:
    Tensor apply(const Tensor& x) const;
    std::int64_t conv_dim(std::int64_t in) const;

    std::int64_t in_ch_, out_ch_, k_, stride_, pad_;
    Tensor w_, b_;        // w: (out_ch, in_ch, k, k)
    Tensor dw_, db_;
};

// 2x2/stride-2 by default. Output dims use truncating integer division
// ((H - k) / s + 1), so a window that does not fit is clipped at the border;
// a 2x2 pool over a 1x1 map passes the value through.
class MaxPool2d : public Layer {
public:
    explicit MaxPool2d(std::int64_t size = 2, std::int64_t stride = 2);

    std::string kind() const override { return "maxpool2d"; }
    Tensor infer(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x, LayerCtx& ctx, bool update_stats) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>& in) const override;
    std::int64_t flops(const std::vector<std::int64_t>& in) const override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2d>(*this); }

private:
    Tensor apply(const Tensor& x) const;
    std::int64_t pool_dim(std::int64_t in) const;

    std::int64_t size_, stride_;
};

class Flatten : public Layer {
public:
    std::string kind() const override { return "flatten"; }
    Tensor infer(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x, LayerCtx& ctx, bool update_stats) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>& in) const override;
    std::int64_t flops(const std::vector<std::int64_t>&) const override { return 0; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }
};

class ReLU : public Layer {
public:
    std::string kind() const override { return "relu"; }
    Tensor infer(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x, LayerCtx& ctx, bool update_stats) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>& in) const override { return in; }
    std::int64_t flops(const std::vector<std::int64_t>& in) const override { return shape_size(in); }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }
};

class Sigmoid : public Layer {
public:
    std::string kind() const override { return "sigmoid"; }
    Tensor infer(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x, LayerCtx& ctx, bool update_stats) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>& in) const override { return in; }
    std::int64_t flops(const std::vector<std::int64_t>& in) const override { return shape_size(in); }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Sigmoid>(*this); }
};

// Row-wise softmax over the last (class) axis; numerically stabilized by
// subtracting the row max. Accepts (B, C) or a single (C) row.
class Softmax : public Layer {
public:
    std::string kind() const override { return "softmax"; }
    Tensor infer(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x, LayerCtx& ctx, bool update_stats) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>& in) const override { return in; }
    std::int64_t flops(const std::vector<std::int64_t>& in) const override { return shape_size(in); }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Softmax>(*this); }
};

// 2-D (batch, features) batch normalization. Training uses biased batch
// statistics; running statistics (also biased) are updated with the given
// momentum and drive eval-mode normalization.
class BatchNorm : public Layer {
public:
    explicit BatchNorm(std::int64_t features, real eps = real(1e-5), real momentum = real(0.1),
                       bool affine = true);

    std::string kind() const override { return "batchnorm"; }
    Tensor infer(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x, LayerCtx& ctx, bool update_stats) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
    std::vector<ParamRef> params() override;
    std::vector<ParamRef> buffers() override;
    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>& in) const override { return in; }
    std::int64_t flops(const std::vector<std::int64_t>& in) const override { return shape_size(in); }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }

private:
    std::int64_t features_;
    real eps_, momentum_;
    bool affine_;
    Tensor gamma_, beta_, dgamma_, dbeta_;
    Tensor run_mean_, run_var_;
};

// 2-D switch normalization: per-feature (batch-norm) and per-sample
// (layer-norm) statistics blended by two learned softmax-weighted pairs,
// one pair for means and one for variances, followed by a per-feature
// affine. In 2-D the instance-norm statistics coincide with layer-norm and
// are merged with it. Eval mode uses running batch statistics and computes
// the per-sample statistics on the fly.
class SwitchNorm : public Layer {
public:
    explicit SwitchNorm(std::int64_t features, real eps = real(1e-5), bool affine = true);

    std::string kind() const override { return "switchnorm"; }
    Tensor infer(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x, LayerCtx& ctx, bool update_stats) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
    std::vector<ParamRef> params() override;
    std::vector<ParamRef> buffers() override;
    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>& in) const override { return in; }
    std::int64_t flops(const std::vector<std::int64_t>& in) const override { return shape_size(in); }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<SwitchNorm>(*this); }

private:
    static void softmax2(const Tensor& logits, real& w0, real& w1);

    std::int64_t features_;
    real eps_, momentum_ = real(0.1);
    bool affine_;
    Tensor mean_logits_, var_logits_;      // 2 each: (batch, layer)
    Tensor dmean_logits_, dvar_logits_;
    Tensor gamma_, beta_, dgamma_, dbeta_;
    Tensor run_mean_, run_var_;
};

}  // namespace pfedmoe
