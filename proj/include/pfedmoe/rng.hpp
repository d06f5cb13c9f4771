#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pfedmoe {

// splitmix64 step; used to derive independent seeds for named streams
// (per-client models, per-round sampling, ...) from one master seed.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

// mt19937_64 with hand-rolled distributions. The standard distribution
// objects produce implementation-defined sequences, which would make seeded
// runs differ across standard libraries; the engine itself is specified
// bit-exactly, so everything downstream of it is reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform();
    double uniform(double lo, double hi);

    // standard normal via Box-Muller (two uniforms per value, no caching so
    // the engine state alone describes the stream position)
    double normal();

    // Gamma(alpha, 1) via Marsaglia-Tsang; alpha > 0
    double gamma(double alpha);

    // Dirichlet(conc, ..., conc) over n components
    std::vector<double> dirichlet(double conc, std::size_t n);

    // uniform integer in [0, n)
    std::int64_t below(std::int64_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(static_cast<std::int64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct values from [0, n), returned in ascending order
    std::vector<int> sample_without_replacement(int n, int k);

    std::string save_state() const;
    void load_state(const std::string& s);

private:
    std::mt19937_64 eng_;
};

}  // namespace pfedmoe
