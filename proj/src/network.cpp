#include "pfedmoe/network.hpp"

#include <cmath>

namespace pfedmoe {

Network::Network(const Network& o) {
    layers_.reserve(o.layers_.size());
    for (const auto& l : o.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& o) {
    if (this == &o) return *this;
    layers_.clear();
    layers_.reserve(o.layers_.size());
    for (const auto& l : o.layers_) layers_.push_back(l->clone());
    return *this;
}

Tensor Network::infer(const Tensor& x) const {
    Tensor cur = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        cur = layers_[i]->infer(cur);
        check_finite(cur, "layer " + std::to_string(i) + " (" + layers_[i]->kind() + ") output");
    }
    return cur;
}

Tensor Network::forward_train(const Tensor& x, Tape& tape, bool update_stats) {
    tape.inputs.assign(layers_.size(), Tensor());
    tape.ctx.assign(layers_.size(), LayerCtx());
    Tensor cur = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        tape.inputs[i] = cur;
        cur = layers_[i]->forward_train(cur, tape.ctx[i], update_stats);
        check_finite(cur, "layer " + std::to_string(i) + " (" + layers_[i]->kind() + ") output");
    }
    tape.output = cur;
    return cur;
}

Tensor Network::forward_from(std::size_t first, const Tensor& input_at_first) const {
    Tensor cur = input_at_first;
    LayerCtx scratch;
    for (std::size_t i = first; i < layers_.size(); ++i) {
        // forward_train recomputes batch statistics but leaves running
        // statistics untouched, matching what backward differentiates
        cur = const_cast<Layer&>(*layers_[i]).forward_train(cur, scratch, false);
    }
    return cur;
}

Tensor Network::backward(const Tape& tape, const Tensor& dy) {
    require(tape.ctx.size() == layers_.size(), "state", "tape does not match this network");
    Tensor cur = dy;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        cur = layers_[i]->backward(cur, tape.ctx[i]);
        check_finite(cur, "layer " + std::to_string(i) + " (" + layers_[i]->kind() + ") input grad");
    }
    return cur;
}

void Network::zero_grads() {
    for (auto& l : layers_)
        for (auto& p : l->params()) p.grad->zero();
}

std::vector<ParamRef> Network::params() {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (auto& p : layers_[i]->params())
            out.push_back({std::to_string(i) + "." + p.name, p.value, p.grad});
    return out;
}

std::vector<ParamRef> Network::buffers() {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (auto& p : layers_[i]->buffers())
            out.push_back({std::to_string(i) + "." + p.name, p.value, nullptr});
    return out;
}

std::int64_t Network::param_count() const {
    std::int64_t n = 0;
    for (const auto& l : layers_)
        for (auto& p : const_cast<Layer&>(*l).params()) n += p.value->size();
    return n;
}

std::vector<std::int64_t> Network::out_shape(std::vector<std::int64_t> sample_in) const {
    for (const auto& l : layers_) sample_in = l->out_shape(sample_in);
    return sample_in;
}

std::int64_t Network::flops(std::vector<std::int64_t> sample_in) const {
    std::int64_t total = 0;
    for (const auto& l : layers_) {
        total += l->flops(sample_in);
        sample_in = l->out_shape(sample_in);
    }
    return total;
}

void Sgd::step(Network& net) const {
    for (auto& p : net.params()) {
        real* w = p.value->data();
        const real* g = p.grad->data();
        for (std::int64_t i = 0; i < p.value->size(); ++i) w[i] -= lr * g[i];
        check_finite(*p.value, "parameter " + p.name + " after sgd step");
    }
}

namespace {

constexpr real kClampLo = real(1e-12);

void check_prob_row(const real* row, std::int64_t classes) {
    real sum = 0;
    for (std::int64_t c = 0; c < classes; ++c) sum += row[c];
    require(std::abs(sum - real(1)) <= real(1e-6), "state",
            "cross-entropy input is not a probability vector (sum = " + std::to_string(sum) + ")");
}

}  // namespace

CeLoss cross_entropy(const Tensor& probs, int label) {
    require(probs.rank() == 1, "shape", "cross_entropy expects a (C) probability vector");
    const std::int64_t classes = probs.dim(0);
    require(label >= 0 && label < classes, "label",
            "label " + std::to_string(label) + " out of range [0," + std::to_string(classes) + ")");
    check_prob_row(probs.data(), classes);
    CeLoss out;
    out.dprobs = Tensor({classes});
    const real p = probs[label];
    const real clamped = std::min(std::max(p, kClampLo), real(1));
    out.loss = -std::log(clamped);
    if (p > kClampLo && p < real(1)) out.dprobs[label] = -real(1) / p;
    return out;
}

CeLoss cross_entropy_mean(const Tensor& probs, std::span<const int> labels) {
    require(probs.rank() == 2, "shape", "cross_entropy_mean expects (B,C) probabilities");
    const std::int64_t batch = probs.dim(0), classes = probs.dim(1);
    require(static_cast<std::int64_t>(labels.size()) == batch, "shape",
            "label count does not match batch");
    CeLoss out;
    out.dprobs = Tensor({batch, classes});
    real total = 0;
    for (std::int64_t i = 0; i < batch; ++i) {
        const int label = labels[static_cast<std::size_t>(i)];
        require(label >= 0 && label < classes, "label",
                "label " + std::to_string(label) + " out of range [0," + std::to_string(classes) + ")");
        const real* row = probs.data() + i * classes;
        check_prob_row(row, classes);
        const real p = row[label];
        const real clamped = std::min(std::max(p, kClampLo), real(1));
        total += -std::log(clamped);
        if (p > kClampLo && p < real(1))
            out.dprobs.at2(i, label) = -real(1) / (p * static_cast<real>(batch));
    }
    out.loss = total / static_cast<real>(batch);
    require(std::isfinite(out.loss), "non_finite", "cross-entropy loss is not finite");
    return out;
}

real grad_check(Network& net, const Tensor& x, std::span<const int> labels, real h) {
    require(h > real(0), "state", "grad_check step h must be positive");
    require(net.param_count() <= 100000, "state",
            "grad_check: network too large to perturb every parameter");

    net.zero_grads();
    Tape tape;
    Tensor probs = net.forward_train(x, tape, /*update_stats=*/false);
    CeLoss ce = cross_entropy_mean(probs, labels);
    net.backward(tape, ce.dprobs);

    // map each parameter tensor back to its owning layer so the numeric side
    // only re-runs the pipeline from that layer on, feeding the cached input
    real max_rel = 0;
    for (std::size_t li = 0; li < net.layer_count(); ++li) {
        for (auto& p : net.layer(li).params()) {
            for (std::int64_t e = 0; e < p.value->size(); ++e) {
                const real saved = (*p.value)[e];
                (*p.value)[e] = saved + h;
                Tensor yp = net.forward_from(li, tape.inputs[li]);
                const real lp = cross_entropy_mean(yp, labels).loss;
                (*p.value)[e] = saved - h;
                Tensor ym = net.forward_from(li, tape.inputs[li]);
                const real lm = cross_entropy_mean(ym, labels).loss;
                (*p.value)[e] = saved;
                const real numeric = (lp - lm) / (2 * h);
                const real analytic = (*p.grad)[e];
                const real denom =
                    std::max({std::abs(analytic), std::abs(numeric), real(1e-12)});
                max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
            }
        }
    }
    return max_rel;
}

}  // namespace pfedmoe
