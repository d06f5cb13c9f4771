#pragma once

#include <span>
#include <string>
#include <vector>

#include "pfedmoe/models.hpp"
#include "pfedmoe/tensor.hpp"

namespace pfedmoe {

struct Dataset {
    Tensor images;            // (N, C, H, W), values in [0, 1]
    std::vector<int> labels;  // in [0, num_classes)
    int num_classes = 0;

    std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
    Dims dims() const;

    Dataset subset(std::span<const std::int64_t> idx) const;

    // (B,C,H,W) slice for the given sample indices
    Tensor gather_images(std::span<const std::int64_t> idx) const;
    std::vector<int> gather_labels(std::span<const std::int64_t> idx) const;
};

// CIFAR-10 binary batches: a sequence of 3073-byte records, one label byte
// followed by 3072 pixel bytes (R, G, B planes). Pixels are scaled by 1/255
// and record order is preserved across files.
Dataset load_cifar10(const std::vector<std::string>& paths);

// Synthetic Gaussian classification task. Each class has a fixed mean image
// 0.5 + A * s_c with a seeded sign pattern s_c in {-1,+1}^D and amplitude
// A = min(0.5, separation * sigma / 2); samples add N(0, sigma^2) noise with
// sigma = 0.05 and are clamped to [0, 1]. Larger separation (measured in
// noise sigmas) spreads the class means further apart.
Dataset gen_synthetic(int num_classes, Dims dims, int samples_per_class, double separation,
                      std::uint64_t seed);

constexpr double kSyntheticNoiseSigma = 0.05;

}  // namespace pfedmoe
