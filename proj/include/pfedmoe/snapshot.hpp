#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pfedmoe/network.hpp"

namespace pfedmoe {

// Named parameter map used for checkpoints and for "transmitting" extractors
// inside the simulator. Binary layout (all integers little-endian):
//
//   magic   "PFS1" (4 bytes)
//   u64     entry count
//   per entry:
//     u32   name length, then name bytes
//     u32   ndim
//     u64 x ndim   dims
//     u64   value count (= product of dims)
//     f64 x count  values
//
// Values are always serialized as 64-bit floats regardless of the build's
// tensor precision.
struct SnapshotEntry {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<double> data;
};

struct ParamSnapshot {
    std::vector<SnapshotEntry> entries;

    // captures parameters and, by default, running-statistic buffers
    static ParamSnapshot capture(const Network& net, bool include_buffers = true);

    // writes values back into matching names/shapes; errors on mismatch
    void restore(Network& net) const;

    std::int64_t total_values() const;

    void write(std::ostream& os) const;
    static ParamSnapshot read(std::istream& is);
    void save(const std::string& path) const;
    static ParamSnapshot load(const std::string& path);
};

// squared L2 distance between two snapshots with identical layouts
double squared_distance(const ParamSnapshot& a, const ParamSnapshot& b);

}  // namespace pfedmoe
