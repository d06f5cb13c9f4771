#include "pfedmoe/snapshot.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace pfedmoe {

namespace {

static_assert(std::endian::native == std::endian::little,
              "snapshot io assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    require(static_cast<bool>(is), "io", "truncated snapshot stream");
    return v;
}

constexpr char kMagic[4] = {'P', 'F', 'S', '1'};

}  // namespace

ParamSnapshot ParamSnapshot::capture(const Network& net, bool include_buffers) {
    ParamSnapshot snap;
    auto& mutable_net = const_cast<Network&>(net);  // params() is non-const but read-only here
    auto add = [&snap](const ParamRef& p) {
        SnapshotEntry e;
        e.name = p.name;
        e.shape = p.value->shape();
        e.data.assign(p.value->values().begin(), p.value->values().end());
        snap.entries.push_back(std::move(e));
    };
    for (const auto& p : mutable_net.params()) add(p);
    if (include_buffers)
        for (const auto& p : mutable_net.buffers()) add(p);
    return snap;
}

void ParamSnapshot::restore(Network& net) const {
    std::vector<ParamRef> targets = net.params();
    for (const auto& b : net.buffers()) targets.push_back(b);
    std::size_t next = 0;
    for (const auto& e : entries) {
        // entries are stored in capture order; do a forward scan so restore
        // stays O(n) while still validating names
        bool found = false;
        for (std::size_t probe = 0; probe < targets.size(); ++probe) {
            auto& t = targets[(next + probe) % targets.size()];
            if (t.name != e.name) continue;
            require(t.value->shape() == e.shape, "state",
                    "snapshot shape mismatch for " + e.name);
            for (std::size_t i = 0; i < e.data.size(); ++i)
                (*t.value)[static_cast<std::int64_t>(i)] = static_cast<real>(e.data[i]);
            next = (next + probe + 1) % targets.size();
            found = true;
            break;
        }
        require(found, "state", "snapshot entry " + e.name + " has no target in network");
    }
}

std::int64_t ParamSnapshot::total_values() const {
    std::int64_t n = 0;
    for (const auto& e : entries) n += static_cast<std::int64_t>(e.data.size());
    return n;
}

void ParamSnapshot::write(std::ostream& os) const {
    os.write(kMagic, 4);
    put<std::uint64_t>(os, entries.size());
    for (const auto& e : entries) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
        put<std::uint64_t>(os, e.data.size());
        os.write(reinterpret_cast<const char*>(e.data.data()),
                 static_cast<std::streamsize>(e.data.size() * sizeof(double)));
    }
    require(static_cast<bool>(os), "io", "snapshot write failed");
}

ParamSnapshot ParamSnapshot::read(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    require(static_cast<bool>(is) && std::memcmp(magic, kMagic, 4) == 0, "io",
            "not a parameter snapshot (bad magic)");
    ParamSnapshot snap;
    const auto count = get<std::uint64_t>(is);
    snap.entries.resize(count);
    for (auto& e : snap.entries) {
        const auto name_len = get<std::uint32_t>(is);
        e.name.resize(name_len);
        is.read(e.name.data(), name_len);
        const auto ndim = get<std::uint32_t>(is);
        e.shape.resize(ndim);
        for (auto& d : e.shape) d = static_cast<std::int64_t>(get<std::uint64_t>(is));
        const auto values = get<std::uint64_t>(is);
        require(values == static_cast<std::uint64_t>(shape_size(e.shape)), "io",
                "snapshot entry " + e.name + " has inconsistent value count");
        e.data.resize(values);
        is.read(reinterpret_cast<char*>(e.data.data()),
                static_cast<std::streamsize>(values * sizeof(double)));
        require(static_cast<bool>(is), "io", "truncated snapshot stream");
    }
    return snap;
}

void ParamSnapshot::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), "io", "cannot open " + path + " for writing");
    write(os);
}

ParamSnapshot ParamSnapshot::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), "io", "cannot open " + path);
    return read(is);
}

double squared_distance(const ParamSnapshot& a, const ParamSnapshot& b) {
    require(a.entries.size() == b.entries.size(), "shape", "snapshot layouts differ");
    double sum = 0;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        const auto& ea = a.entries[i];
        const auto& eb = b.entries[i];
        require(ea.name == eb.name && ea.shape == eb.shape, "shape",
                "snapshot layouts differ at " + ea.name);
        for (std::size_t j = 0; j < ea.data.size(); ++j) {
            const double d = ea.data[j] - eb.data[j];
            sum += d * d;
        }
    }
    return sum;
}

}  // namespace pfedmoe
