#include "pfedmoe/data.hpp"

#include <algorithm>
#include <fstream>

#include "pfedmoe/rng.hpp"

namespace pfedmoe {

Dims Dataset::dims() const {
    require(images.rank() == 4, "shape", "dataset images must be (N,C,H,W)");
    return {images.dim(1), images.dim(2), images.dim(3)};
}

Dataset Dataset::subset(std::span<const std::int64_t> idx) const {
    Dataset out;
    out.num_classes = num_classes;
    out.images = gather_images(idx);
    out.labels = gather_labels(idx);
    return out;
}

Tensor Dataset::gather_images(std::span<const std::int64_t> idx) const {
    const std::int64_t sample = images.size() / images.dim(0);
    Tensor out({static_cast<std::int64_t>(idx.size()), images.dim(1), images.dim(2), images.dim(3)});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        require(idx[i] >= 0 && idx[i] < images.dim(0), "state", "sample index out of range");
        std::copy_n(images.data() + idx[i] * sample, sample,
                    out.data() + static_cast<std::int64_t>(i) * sample);
    }
    return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::int64_t> idx) const {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[static_cast<std::size_t>(idx[i])];
    return out;
}

Dataset load_cifar10(const std::vector<std::string>& paths) {
    require(!paths.empty(), "config", "no cifar10 files given");
    constexpr std::int64_t kRecord = 3073;
    constexpr std::int64_t kPixels = 3072;

    std::vector<std::vector<char>> files;
    std::int64_t total = 0;
    for (const auto& path : paths) {
        std::ifstream is(path, std::ios::binary | std::ios::ate);
        require(static_cast<bool>(is), "io", "cannot open " + path);
        const std::int64_t bytes = static_cast<std::int64_t>(is.tellg());
        require(bytes % kRecord == 0, "io",
                path + ": length " + std::to_string(bytes) + " is not a multiple of 3073");
        is.seekg(0);
        std::vector<char> buf(static_cast<std::size_t>(bytes));
        is.read(buf.data(), bytes);
        require(static_cast<bool>(is), "io", "short read on " + path);
        total += bytes / kRecord;
        files.push_back(std::move(buf));
    }

    Dataset ds;
    ds.num_classes = 10;
    ds.images = Tensor({total, 3, 32, 32});
    ds.labels.resize(static_cast<std::size_t>(total));
    std::int64_t n = 0;
    for (const auto& buf : files) {
        const std::int64_t records = static_cast<std::int64_t>(buf.size()) / kRecord;
        for (std::int64_t r = 0; r < records; ++r, ++n) {
            const auto* rec = reinterpret_cast<const unsigned char*>(buf.data() + r * kRecord);
            require(rec[0] <= 9, "io", "label byte " + std::to_string(int(rec[0])) + " out of range");
            ds.labels[static_cast<std::size_t>(n)] = rec[0];
            real* img = ds.images.data() + n * kPixels;
            for (std::int64_t p = 0; p < kPixels; ++p)
                img[p] = static_cast<real>(rec[1 + p]) / real(255);
        }
    }
    return ds;
}

Dataset gen_synthetic(int num_classes, Dims dims, int samples_per_class, double separation,
                      std::uint64_t seed) {
    require(num_classes >= 2, "config", "need at least two classes");
    require(samples_per_class >= 1, "config", "need at least one sample per class");
    require(separation >= 0, "config", "separation must be non-negative");

    const std::int64_t d = dims.flat();
    const double amp = std::min(0.5, separation * kSyntheticNoiseSigma / 2.0);

    Rng rng(seed);
    std::vector<std::vector<double>> means(static_cast<std::size_t>(num_classes));
    for (auto& mu : means) {
        mu.resize(static_cast<std::size_t>(d));
        for (auto& v : mu) v = 0.5 + (rng.uniform() < 0.5 ? -amp : amp);
    }

    const std::int64_t total = static_cast<std::int64_t>(num_classes) * samples_per_class;
    Dataset ds;
    ds.num_classes = num_classes;
    ds.images = Tensor({total, dims.channels, dims.height, dims.width});
    ds.labels.resize(static_cast<std::size_t>(total));
    std::int64_t n = 0;
    for (int c = 0; c < num_classes; ++c) {
        const auto& mu = means[static_cast<std::size_t>(c)];
        for (int s = 0; s < samples_per_class; ++s, ++n) {
            ds.labels[static_cast<std::size_t>(n)] = c;
            real* img = ds.images.data() + n * d;
            for (std::int64_t j = 0; j < d; ++j) {
                double v = mu[static_cast<std::size_t>(j)] + kSyntheticNoiseSigma * rng.normal();
                img[j] = static_cast<real>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return ds;
}

}  // namespace pfedmoe
