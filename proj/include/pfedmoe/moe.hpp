#pragma once

#include <array>
#include <optional>
#include <span>

#include "pfedmoe/models.hpp"

namespace pfedmoe {

// Per-client mixture of experts: a shared homogeneous extractor (global
// expert), the client's private extractor (local expert), a gating network
// producing one weight pair per sample, and the private prediction header
// applied to the weighted mixed representation. One backward pass populates
// gradients of all four parts.
struct MoeModel {
    Network global_expert;
    Network local_expert;
    Network gate;
    Network header;

    void zero_grads();
};

struct MoeOutput {
    Tensor y;           // (B, classes) probabilities
    Tensor alpha;       // (B, 2): columns (global, local); forced pair if any
    Tensor rep_global;  // (B, rep)
    Tensor rep_local;   // (B, rep)
    Tensor rep_mixed;   // (B, rep)
};

struct MoeTape {
    Tape global_tape, local_tape, gate_tape, header_tape;
    Tensor rep_global, rep_local, alpha;
    bool alpha_forced = false;
};

// Forcing alpha bypasses the gating network entirely (it is neither
// evaluated nor updated); used for the mixing-degeneracy checks.
using ForcedAlpha = std::optional<std::array<real, 2>>;

MoeOutput moe_infer(const MoeModel& moe, const Tensor& x, const ForcedAlpha& forced = {});

MoeOutput moe_forward_train(MoeModel& moe, const Tensor& x, MoeTape& tape,
                            bool update_stats = true, const ForcedAlpha& forced = {});

// dy is the loss gradient w.r.t. the header's probability output
void moe_backward(MoeModel& moe, const MoeTape& tape, const Tensor& dy);

// Central-difference check over every parameter of all four parts, reusing
// cached part outputs so only the perturbed part is re-evaluated. Same
// contract as grad_check for a single network.
real moe_grad_check(MoeModel& moe, const Tensor& x, std::span<const int> labels, real h);

std::int64_t moe_param_count(const MoeModel& moe);

// per-sample forward cost of the whole MoE (mixing counted as one flop per
// mixed element)
std::int64_t moe_flops_forward(const MoeModel& moe, Dims in);

}  // namespace pfedmoe
