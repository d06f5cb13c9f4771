#include "pfedmoe/models.hpp"

namespace pfedmoe {

CnnSpec cnn_spec(int variant, std::int64_t rep_width) {
    require(variant >= 1 && variant <= 5, "config", "cnn variant must be 1..5");
    require(rep_width >= 2, "config", "rep_width must be at least 2");
    static constexpr std::int64_t kFc1[5] = {2000, 2000, 1000, 800, 500};
    static constexpr std::int64_t kConv2[5] = {32, 16, 32, 32, 32};
    CnnSpec s;
    s.variant = variant;
    s.conv2_filters = kConv2[variant - 1];
    s.fc2 = rep_width;
    s.fc1 = kFc1[variant - 1] * rep_width / 500;
    if (s.fc1 < 2) s.fc1 = 2;
    return s;
}

namespace {

void check_input(const Dims& in) {
    require(in.channels >= 1, "shape", "input needs at least one channel");
    require(in.height >= kMinCnnInput && in.width >= kMinCnnInput, "shape",
            "input too small: the conv stack needs at least " + std::to_string(kMinCnnInput) +
                "x" + std::to_string(kMinCnnInput));
}

// spatial size after conv(5, valid) -> pool(2,2) -> conv(5, valid) -> pool(2,2);
// pooling dims use truncating division, so a 1x1 map survives the last pool
std::int64_t conv_stack_out(std::int64_t d) {
    d = d - 5 + 1;
    d = (d - 2) / 2 + 1;
    d = d - 5 + 1;
    d = (d - 2) / 2 + 1;
    return d;
}

void append_conv_stack(Network& net, const CnnSpec& spec, const Dims& in, Rng& rng) {
    check_input(in);
    net.append(std::make_unique<Conv2d>(in.channels, spec.conv1_filters, rng));
    net.append(std::make_unique<ReLU>());
    net.append(std::make_unique<MaxPool2d>());
    net.append(std::make_unique<Conv2d>(spec.conv1_filters, spec.conv2_filters, rng));
    net.append(std::make_unique<ReLU>());
    net.append(std::make_unique<MaxPool2d>());
    net.append(std::make_unique<Flatten>());
}

std::int64_t flatten_width(const CnnSpec& spec, const Dims& in) {
    return spec.conv2_filters * conv_stack_out(in.height) * conv_stack_out(in.width);
}

}  // namespace

Network build_cnn(const CnnSpec& spec, Dims in, int num_classes, std::uint64_t seed) {
    require(num_classes >= 2, "config", "need at least two classes");
    Rng rng(seed);
    Network net;
    append_conv_stack(net, spec, in, rng);
    const std::int64_t flat = flatten_width(spec, in);
    net.append(std::make_unique<Dense>(flat, spec.fc1, rng));
    net.append(std::make_unique<ReLU>());
    net.append(std::make_unique<Dense>(spec.fc1, spec.fc2, rng));
    net.append(std::make_unique<ReLU>());
    net.append(std::make_unique<Dense>(spec.fc2, num_classes, rng));
    net.append(std::make_unique<Softmax>());
    return net;
}

SplitModel split_extractor_header(const Network& net) {
    const std::size_t n = net.layer_count();
    require(n >= 3 && net.layer(n - 1).kind() == "softmax" && net.layer(n - 2).kind() == "dense" &&
                net.layer(n - 3).kind() == "relu",
            "state", "unrecognized structure: expected ... relu, dense, softmax tail");
    SplitModel out;
    for (std::size_t i = 0; i < n - 2; ++i) out.extractor.append(net.layer(i).clone());
    for (std::size_t i = n - 2; i < n; ++i) out.header.append(net.layer(i).clone());
    return out;
}

Network build_extractor(const CnnSpec& spec, Dims in, std::uint64_t seed) {
    Rng rng(seed);
    Network net;
    append_conv_stack(net, spec, in, rng);
    const std::int64_t flat = flatten_width(spec, in);
    net.append(std::make_unique<Dense>(flat, spec.fc1, rng));
    net.append(std::make_unique<ReLU>());
    net.append(std::make_unique<Dense>(spec.fc1, spec.fc2, rng));
    net.append(std::make_unique<ReLU>());
    return net;
}

Network build_header(std::int64_t rep_width, int num_classes, std::uint64_t seed) {
    Rng rng(seed);
    Network net;
    net.append(std::make_unique<Dense>(rep_width, num_classes, rng));
    net.append(std::make_unique<Softmax>());
    return net;
}

Network build_gating(Dims in, std::int64_t m, std::uint64_t seed) {
    require(m >= 2, "config", "gating hidden width m must be >= 2");
    Rng rng(seed);
    const std::int64_t d = in.flat();
    Network net;
    net.append(std::make_unique<Flatten>());
    net.append(std::make_unique<SwitchNorm>(d));
    net.append(std::make_unique<Dense>(d, m, rng));
    net.append(std::make_unique<BatchNorm>(m));
    net.append(std::make_unique<Sigmoid>());
    net.append(std::make_unique<Dense>(m, 2, rng));
    net.append(std::make_unique<BatchNorm>(2));
    net.append(std::make_unique<Softmax>());
    return net;
}

std::int64_t param_count(const Network& net) { return net.param_count(); }

std::int64_t model_bytes(const Network& net, std::int64_t bytes_per_param) {
    return net.param_count() * bytes_per_param;
}

std::int64_t flops_forward(const Network& net, Dims in) { return net.flops(in.chw()); }

}  // namespace pfedmoe
