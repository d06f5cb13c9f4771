#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pfedmoe/layers.hpp"

namespace pfedmoe {

// Computation record of one train-mode forward pass: per-layer contexts plus
// the input seen by every layer, enough to backpropagate and to re-run the
// pipeline from any split point (used by the gradient checker).
struct Tape {
    std::vector<Tensor> inputs;    // inputs[i] = input to layer i
    std::vector<LayerCtx> ctx;
    Tensor output;
};

// Ordered layer pipeline with named parameters ("<layer index>.<name>").
// Training (forward_train/backward/step) must be externally serialized per
// instance; infer() is const and safe to share.
class Network {
public:
    Network() = default;
    Network(const Network& o);
    Network& operator=(const Network& o);
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    void append(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }
    const Layer& layer(std::size_t i) const { return *layers_[i]; }

    Tensor infer(const Tensor& x) const;
    Tensor forward_train(const Tensor& x, Tape& tape, bool update_stats = true);

    // re-runs layers [first, last) in train mode with frozen statistics,
    // discarding contexts; used for finite-difference re-evaluation
    Tensor forward_from(std::size_t first, const Tensor& input_at_first) const;

    // accumulates parameter gradients; returns dL/dinput
    Tensor backward(const Tape& tape, const Tensor& dy);

    void zero_grads();
    std::vector<ParamRef> params();
    std::vector<ParamRef> buffers();
    std::int64_t param_count() const;

    std::vector<std::int64_t> out_shape(std::vector<std::int64_t> sample_in) const;
    std::int64_t flops(std::vector<std::int64_t> sample_in) const;

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// Plain SGD: w <- w - lr * grad. No momentum, no weight decay.
struct Sgd {
    real lr;
    void step(Network& net) const;
};

struct CeLoss {
    real loss;
    Tensor dprobs;  // gradient w.r.t. the probability input
};

// loss = -log(p[label]) with p clamped to [1e-12, 1]; the gradient is zero
// in the clamped region. `probs` must be a post-softmax row (sums to 1
// within 1e-6).
CeLoss cross_entropy(const Tensor& probs, int label);

// batch mean over (B, C) probabilities
CeLoss cross_entropy_mean(const Tensor& probs, std::span<const int> labels);

// Central-difference gradient verification of d(mean CE)/d(param) for a
// network ending in probabilities. Returns the max relative error
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-12). Running
// statistics are frozen throughout. Errors if h <= 0 or the network exceeds
// 1e5 parameters.
real grad_check(Network& net, const Tensor& x, std::span<const int> labels, real h);

}  // namespace pfedmoe
