#include "pfedmoe/moe.hpp"

#include <cmath>

namespace pfedmoe {

void MoeModel::zero_grads() {
    global_expert.zero_grads();
    local_expert.zero_grads();
    gate.zero_grads();
    header.zero_grads();
}

namespace {

Tensor forced_alpha_rows(std::int64_t batch, const std::array<real, 2>& a) {
    Tensor t({batch, 2});
    for (std::int64_t i = 0; i < batch; ++i) {
        t.at2(i, 0) = a[0];
        t.at2(i, 1) = a[1];
    }
    return t;
}

Tensor mix(const Tensor& alpha, const Tensor& rg, const Tensor& rf) {
    require(rg.same_shape(rf), "shape",
            "expert output dims differ: " + rg.shape_str() + " vs " + rf.shape_str());
    const std::int64_t batch = rg.dim(0), rep = rg.dim(1);
    Tensor mixed({batch, rep});
    for (std::int64_t i = 0; i < batch; ++i) {
        const real ag = alpha.at2(i, 0), af = alpha.at2(i, 1);
        const real* g = rg.data() + i * rep;
        const real* f = rf.data() + i * rep;
        real* m = mixed.data() + i * rep;
        for (std::int64_t j = 0; j < rep; ++j) m[j] = ag * g[j] + af * f[j];
    }
    return mixed;
}

}  // namespace

MoeOutput moe_infer(const MoeModel& moe, const Tensor& x, const ForcedAlpha& forced) {
    MoeOutput out;
    out.rep_global = moe.global_expert.infer(x);
    out.rep_local = moe.local_expert.infer(x);
    out.alpha = forced ? forced_alpha_rows(x.dim(0), *forced) : moe.gate.infer(x);
    out.rep_mixed = mix(out.alpha, out.rep_global, out.rep_local);
    out.y = moe.header.infer(out.rep_mixed);
    return out;
}

MoeOutput moe_forward_train(MoeModel& moe, const Tensor& x, MoeTape& tape, bool update_stats,
                            const ForcedAlpha& forced) {
    MoeOutput out;
    out.rep_global = moe.global_expert.forward_train(x, tape.global_tape, update_stats);
    out.rep_local = moe.local_expert.forward_train(x, tape.local_tape, update_stats);
    tape.alpha_forced = forced.has_value();
    out.alpha = forced ? forced_alpha_rows(x.dim(0), *forced)
                       : moe.gate.forward_train(x, tape.gate_tape, update_stats);
    out.rep_mixed = mix(out.alpha, out.rep_global, out.rep_local);
    out.y = moe.header.forward_train(out.rep_mixed, tape.header_tape, update_stats);

    tape.rep_global = out.rep_global;
    tape.rep_local = out.rep_local;
    tape.alpha = out.alpha;
    return out;
}

void moe_backward(MoeModel& moe, const MoeTape& tape, const Tensor& dy) {
    Tensor dmixed = moe.header.backward(tape.header_tape, dy);
    const std::int64_t batch = dmixed.dim(0), rep = dmixed.dim(1);

    Tensor drg({batch, rep}), drf({batch, rep});
    Tensor dalpha({batch, 2});
    for (std::int64_t i = 0; i < batch; ++i) {
        const real ag = tape.alpha.at2(i, 0), af = tape.alpha.at2(i, 1);
        const real* dm = dmixed.data() + i * rep;
        const real* g = tape.rep_global.data() + i * rep;
        const real* f = tape.rep_local.data() + i * rep;
        real* pg = drg.data() + i * rep;
        real* pf = drf.data() + i * rep;
        real dag = 0, daf = 0;
        for (std::int64_t j = 0; j < rep; ++j) {
            dag += dm[j] * g[j];
            daf += dm[j] * f[j];
            pg[j] = ag * dm[j];
            pf[j] = af * dm[j];
        }
        dalpha.at2(i, 0) = dag;
        dalpha.at2(i, 1) = daf;
    }

    moe.global_expert.backward(tape.global_tape, drg);
    moe.local_expert.backward(tape.local_tape, drf);
    if (!tape.alpha_forced) moe.gate.backward(tape.gate_tape, dalpha);
}

real moe_grad_check(MoeModel& moe, const Tensor& x, std::span<const int> labels, real h) {
    require(h > real(0), "state", "grad_check step h must be positive");
    require(moe_param_count(moe) <= 100000, "state",
            "grad_check: model too large to perturb every parameter");

    moe.zero_grads();
    MoeTape tape;
    MoeOutput out = moe_forward_train(moe, x, tape, /*update_stats=*/false);
    CeLoss ce = cross_entropy_mean(out.y, labels);
    moe_backward(moe, tape, ce.dprobs);

    // numeric loss with only one part re-evaluated from the perturbed layer;
    // the other parts' cached outputs are exact because they do not depend
    // on the perturbed parameter
    enum Part { kGlobal, kLocal, kGate, kHeader };
    auto loss_with = [&](Part part, std::size_t layer_idx, const Tensor& cached_in) -> real {
        Tensor rg = tape.rep_global, rf = tape.rep_local, alpha = tape.alpha;
        if (part == kGlobal) rg = moe.global_expert.forward_from(layer_idx, cached_in);
        if (part == kLocal) rf = moe.local_expert.forward_from(layer_idx, cached_in);
        if (part == kGate) alpha = moe.gate.forward_from(layer_idx, cached_in);
        if (part == kHeader) {
            Tensor y = moe.header.forward_from(layer_idx, cached_in);
            return cross_entropy_mean(y, labels).loss;
        }
        Tensor y = moe.header.forward_from(0, mix(alpha, rg, rf));
        return cross_entropy_mean(y, labels).loss;
    };

    real max_rel = 0;
    auto sweep = [&](Network& net, Part part, const Tape& part_tape) {
        for (std::size_t li = 0; li < net.layer_count(); ++li) {
            for (auto& p : net.layer(li).params()) {
                for (std::int64_t e = 0; e < p.value->size(); ++e) {
                    const real saved = (*p.value)[e];
                    (*p.value)[e] = saved + h;
                    const real lp = loss_with(part, li, part_tape.inputs[li]);
                    (*p.value)[e] = saved - h;
                    const real lm = loss_with(part, li, part_tape.inputs[li]);
                    (*p.value)[e] = saved;
                    const real numeric = (lp - lm) / (2 * h);
                    const real analytic = (*p.grad)[e];
                    const real denom =
                        std::max({std::abs(analytic), std::abs(numeric), real(1e-12)});
                    max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
                }
            }
        }
    };
    sweep(moe.global_expert, kGlobal, tape.global_tape);
    sweep(moe.local_expert, kLocal, tape.local_tape);
    sweep(moe.gate, kGate, tape.gate_tape);
    sweep(moe.header, kHeader, tape.header_tape);
    return max_rel;
}

std::int64_t moe_param_count(const MoeModel& moe) {
    return moe.global_expert.param_count() + moe.local_expert.param_count() +
           moe.gate.param_count() + moe.header.param_count();
}

std::int64_t moe_flops_forward(const MoeModel& moe, Dims in) {
    const auto rep_shape = moe.global_expert.out_shape(in.chw());
    return moe.global_expert.flops(in.chw()) + moe.local_expert.flops(in.chw()) +
           moe.gate.flops(in.chw()) + shape_size(rep_shape) +
           moe.header.flops(rep_shape);
}

}  // namespace pfedmoe
