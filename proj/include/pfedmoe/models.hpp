#pragma once

#include <optional>

#include "pfedmoe/network.hpp"

namespace pfedmoe {

struct Dims {
    std::int64_t channels = 3;
    std::int64_t height = 32;
    std::int64_t width = 32;

    std::vector<std::int64_t> chw() const { return {channels, height, width}; }
    std::int64_t flat() const { return channels * height * width; }
};

// The five-member CNN family: two 5x5 valid convolutions with 2x2 pooling,
// then FC1 -> FC2 -> FC3, ReLU after every conv/FC except FC3, softmax
// output. Variants differ in conv2 filters and the FC1 width; FC2 (the
// representation width) is shared so extractors stay interchangeable.
struct CnnSpec {
    int variant = 5;              // 1..5
    std::int64_t conv1_filters = 16;
    std::int64_t conv2_filters = 32;
    std::int64_t fc1 = 500;
    std::int64_t fc2 = 500;       // representation width
};

// rep_width scales FC widths proportionally (fc1 keeps its ratio to fc2);
// rep_width = 500 reproduces the published family exactly.
CnnSpec cnn_spec(int variant, std::int64_t rep_width = 500);

// minimum spatial input extent for the conv/pool stack
constexpr std::int64_t kMinCnnInput = 14;

Network build_cnn(const CnnSpec& spec, Dims in, int num_classes, std::uint64_t seed);

struct SplitModel {
    Network extractor;  // through FC2's ReLU; output dim = fc2
    Network header;     // FC3 + softmax
};

// Splits a build_cnn network after FC2's activation. Errors on any other
// structure.
SplitModel split_extractor_header(const Network& net);

// extractor of the given variant only (conv stack through FC2+ReLU)
Network build_extractor(const CnnSpec& spec, Dims in, std::uint64_t seed);

// header matching a representation width
Network build_header(std::int64_t rep_width, int num_classes, std::uint64_t seed);

// Gating network: Flatten -> SwitchNorm(d) -> Dense(d, m) -> BatchNorm ->
// Sigmoid -> Dense(m, 2) -> BatchNorm -> Softmax, with d = flattened sample
// size. Outputs one (weight, weight) simplex row per sample.
Network build_gating(Dims in, std::int64_t m, std::uint64_t seed);

std::int64_t param_count(const Network& net);
std::int64_t model_bytes(const Network& net, std::int64_t bytes_per_param = 4);

// Per-sample forward cost: dense 2*in*out, conv 2*k^2*Cin*Cout*Hout*Wout,
// one flop per output element for pooling/activations/norms. A training
// step is conventionally 3x this.
std::int64_t flops_forward(const Network& net, Dims in);

constexpr std::int64_t kTrainFlopsMultiplier = 3;

}  // namespace pfedmoe
