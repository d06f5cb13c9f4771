#pragma once

#include "pfedmoe/data.hpp"

namespace pfedmoe {

struct PartitionSpec {
    enum class Kind { pathological, practical };
    Kind kind = Kind::pathological;
    int classes_per_client = 2;   // pathological: k
    double beta = 0.5;            // pathological: per-class count concentration
    double gamma = 0.5;           // practical: Dirichlet concentration
    int num_clients = 0;
    std::uint64_t seed = 0;
};

struct ClientShard {
    int client_id = 0;
    Dataset train;
    Dataset test;

    std::int64_t n_train() const { return train.size(); }
};

// Assigns every sample of the dataset (given by its labels) to exactly one
// client and returns per-client sample indices.
//
// pathological: client i holds classes {(i*k + j) mod C : j < k} (round
// robin); each class's samples are split among its holders by a
// Dirichlet(beta) draw with largest-remainder rounding. Redraws (up to a
// bounded retry count) if a holder would receive zero samples of one of its
// classes.
//
// practical: for each class, a Dirichlet(gamma) draw over all clients
// allocates that class's samples by proportion (largest-remainder rounding);
// the whole partition is redrawn if some client ends up empty.
std::vector<std::vector<std::int64_t>> partition_indices(std::span<const int> labels,
                                                         int num_classes,
                                                         const PartitionSpec& spec);

// Per-class stratified 80/20 split with floor-to-test rounding: a class with
// n samples contributes max(1, n/5) to the test set when n >= 2, none when
// n == 1. The shuffle is derived from `seed`.
ClientShard split_train_test(const Dataset& pool, int client_id, std::uint64_t seed);

// partition + per-client 8:2 splits
std::vector<ClientShard> make_shards(const Dataset& ds, const PartitionSpec& spec);

}  // namespace pfedmoe
