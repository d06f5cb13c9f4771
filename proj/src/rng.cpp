#include "pfedmoe/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "pfedmoe/error.hpp"

namespace pfedmoe {

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gamma(double alpha) {
    require(alpha > 0.0, "state", "gamma shape must be positive");
    if (alpha < 1.0) {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        double v = t * t * t;
        double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::vector<double> Rng::dirichlet(double conc, std::size_t n) {
    std::vector<double> out(n);
    double sum = 0.0;
    for (auto& g : out) {
        g = gamma(conc);
        sum += g;
    }
    if (sum <= 0.0) {
        // all gamma draws underflowed (tiny conc); fall back to a single winner
        out.assign(n, 0.0);
        out[static_cast<std::size_t>(below(static_cast<std::int64_t>(n)))] = 1.0;
        return out;
    }
    for (auto& g : out) g /= sum;
    return out;
}

std::int64_t Rng::below(std::int64_t n) {
    require(n > 0, "state", "below() needs a positive bound");
    auto v = static_cast<std::int64_t>(uniform() * static_cast<double>(n));
    return v >= n ? n - 1 : v;
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
    require(k >= 0 && k <= n, "state", "sample size exceeds population");
    std::vector<int> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    // partial Fisher-Yates: the first k slots end up holding the sample
    for (int i = 0; i < k; ++i) {
        auto j = static_cast<std::size_t>(i) +
                 static_cast<std::size_t>(below(static_cast<std::int64_t>(n - i)));
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(k));
    std::sort(pool.begin(), pool.end());
    return pool;
}

std::string Rng::save_state() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
}

void Rng::load_state(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    require(static_cast<bool>(is), "state", "malformed rng state");
}

}  // namespace pfedmoe
