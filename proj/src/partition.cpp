#include "pfedmoe/partition.hpp"

#include <algorithm>
#include <numeric>

#include "pfedmoe/rng.hpp"

namespace pfedmoe {

namespace {

constexpr int kMaxRedraws = 100;

// rng stream tags so the three partition stages draw independent sequences
constexpr std::uint64_t kStreamPathological = 0xA110C47E;
constexpr std::uint64_t kStreamPractical = 0xD161C7E7;
constexpr std::uint64_t kStreamSplit = 0x80208020;

// integer counts summing to `total` that best match `props`, largest
// fractional remainder first (ties broken by lower index)
std::vector<std::int64_t> largest_remainder(const std::vector<double>& props, std::int64_t total) {
    const std::size_t n = props.size();
    std::vector<std::int64_t> counts(n);
    std::vector<std::pair<double, std::size_t>> rem(n);
    std::int64_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double want = props[i] * static_cast<double>(total);
        counts[i] = static_cast<std::int64_t>(want);
        assigned += counts[i];
        rem[i] = {want - static_cast<double>(counts[i]), i};
    }
    require(assigned <= total, "state", "rounding overshot the sample budget");
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::int64_t i = 0; i < total - assigned; ++i)
        counts[rem[static_cast<std::size_t>(i)].second] += 1;
    return counts;
}

std::vector<std::vector<std::int64_t>> by_class(std::span<const int> labels, int num_classes) {
    std::vector<std::vector<std::int64_t>> cls(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        require(labels[i] >= 0 && labels[i] < num_classes, "label", "label out of range");
        cls[static_cast<std::size_t>(labels[i])].push_back(static_cast<std::int64_t>(i));
    }
    return cls;
}

std::vector<std::vector<std::int64_t>> partition_pathological(std::span<const int> labels,
                                                              int num_classes,
                                                              const PartitionSpec& spec) {
    const int n_clients = spec.num_clients;
    const int k = spec.classes_per_client;
    require(k >= 1 && k <= num_classes, "config", "classes_per_client must be in [1, num_classes]");
    require(spec.beta > 0, "config", "beta must be positive");
    require(static_cast<std::int64_t>(n_clients) * k >= num_classes, "config",
            "num_clients * classes_per_client must cover all classes");

    // round-robin class assignment; consecutive blocks of k classes per client
    std::vector<std::vector<int>> holders(static_cast<std::size_t>(num_classes));
    for (int i = 0; i < n_clients; ++i)
        for (int j = 0; j < k; ++j)
            holders[static_cast<std::size_t>((static_cast<std::int64_t>(i) * k + j) % num_classes)]
                .push_back(i);

    auto cls = by_class(labels, num_classes);
    Rng rng(mix_seed(spec.seed, kStreamPathological));
    std::vector<std::vector<std::int64_t>> out(static_cast<std::size_t>(n_clients));

    for (int c = 0; c < num_classes; ++c) {
        auto& idx = cls[static_cast<std::size_t>(c)];
        const auto& hold = holders[static_cast<std::size_t>(c)];
        if (idx.empty()) continue;
        require(!hold.empty(), "state", "class " + std::to_string(c) + " has no holder");
        rng.shuffle(idx);

        std::vector<std::int64_t> counts;
        bool ok = false;
        for (int attempt = 0; attempt < kMaxRedraws && !ok; ++attempt) {
            counts = largest_remainder(rng.dirichlet(spec.beta, hold.size()),
                                       static_cast<std::int64_t>(idx.size()));
            ok = std::all_of(counts.begin(), counts.end(), [](std::int64_t v) { return v > 0; });
        }
        require(ok, "state",
                "could not give every holder of class " + std::to_string(c) +
                    " at least one sample after " + std::to_string(kMaxRedraws) + " draws");

        std::size_t pos = 0;
        for (std::size_t hi = 0; hi < hold.size(); ++hi) {
            auto& dst = out[static_cast<std::size_t>(hold[hi])];
            dst.insert(dst.end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                       idx.begin() + static_cast<std::ptrdiff_t>(pos + counts[hi]));
            pos += static_cast<std::size_t>(counts[hi]);
        }
    }
    for (auto& v : out) std::sort(v.begin(), v.end());
    return out;
}

std::vector<std::vector<std::int64_t>> partition_practical(std::span<const int> labels,
                                                           int num_classes,
                                                           const PartitionSpec& spec) {
    require(spec.gamma > 0, "config", "gamma must be positive");
    const int n_clients = spec.num_clients;
    require(static_cast<std::int64_t>(labels.size()) >= n_clients, "config",
            "fewer samples than clients");

    auto cls = by_class(labels, num_classes);
    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
        Rng rng(mix_seed(spec.seed, kStreamPractical + static_cast<std::uint64_t>(attempt)));
        std::vector<std::vector<std::int64_t>> out(static_cast<std::size_t>(n_clients));
        for (int c = 0; c < num_classes; ++c) {
            auto idx = cls[static_cast<std::size_t>(c)];
            if (idx.empty()) continue;
            rng.shuffle(idx);
            auto counts = largest_remainder(rng.dirichlet(spec.gamma, static_cast<std::size_t>(n_clients)),
                                            static_cast<std::int64_t>(idx.size()));
            std::size_t pos = 0;
            for (int i = 0; i < n_clients; ++i) {
                auto& dst = out[static_cast<std::size_t>(i)];
                dst.insert(dst.end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                           idx.begin() + static_cast<std::ptrdiff_t>(pos + counts[static_cast<std::size_t>(i)]));
                pos += static_cast<std::size_t>(counts[static_cast<std::size_t>(i)]);
            }
        }
        const bool all_nonempty =
            std::all_of(out.begin(), out.end(), [](const auto& v) { return !v.empty(); });
        if (all_nonempty) {
            for (auto& v : out) std::sort(v.begin(), v.end());
            return out;
        }
    }
    fail("state", "could not give every client at least one sample after " +
                      std::to_string(kMaxRedraws) + " partition draws");
}

}  // namespace

std::vector<std::vector<std::int64_t>> partition_indices(std::span<const int> labels,
                                                         int num_classes,
                                                         const PartitionSpec& spec) {
    require(spec.num_clients >= 1, "config", "need at least one client");
    require(!labels.empty(), "config", "empty dataset");
    return spec.kind == PartitionSpec::Kind::pathological
               ? partition_pathological(labels, num_classes, spec)
               : partition_practical(labels, num_classes, spec);
}

ClientShard split_train_test(const Dataset& pool, int client_id, std::uint64_t seed) {
    require(pool.size() > 0, "state", "empty pool for client " + std::to_string(client_id));
    auto cls = by_class(pool.labels, pool.num_classes);
    Rng rng(mix_seed(seed, kStreamSplit + static_cast<std::uint64_t>(client_id)));

    std::vector<std::int64_t> train_idx, test_idx;
    for (auto& idx : cls) {
        if (idx.empty()) continue;
        rng.shuffle(idx);
        const std::int64_t n = static_cast<std::int64_t>(idx.size());
        const std::int64_t n_test = n >= 2 ? std::max<std::int64_t>(1, n / 5) : 0;
        test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + n_test);
        train_idx.insert(train_idx.end(), idx.begin() + n_test, idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    ClientShard shard;
    shard.client_id = client_id;
    shard.train = pool.subset(train_idx);
    shard.test = pool.subset(test_idx);
    return shard;
}

std::vector<ClientShard> make_shards(const Dataset& ds, const PartitionSpec& spec) {
    auto pools = partition_indices(ds.labels, ds.num_classes, spec);
    std::vector<ClientShard> shards;
    shards.reserve(pools.size());
    for (std::size_t i = 0; i < pools.size(); ++i)
        shards.push_back(split_train_test(ds.subset(pools[i]), static_cast<int>(i), spec.seed));
    return shards;
}

}  // namespace pfedmoe
