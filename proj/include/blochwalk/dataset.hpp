#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "blochwalk/two_scale.hpp"

namespace blochwalk {

/// One Binomial experiment: `zeros` zero-state readouts out of `shots` after `gates` gates.
struct ShotRecord {
    GateCount gates = 0;
    std::int64_t shots = 1;
    std::int64_t zeros = 0;
    std::optional<std::string> timestamp;  ///< carried through, never modeled

    double frequency() const { return static_cast<double>(zeros) / static_cast<double>(shots); }
};

struct PoolDataset {
    std::vector<ShotRecord> records;

    std::size_t size() const noexcept { return records.size(); }

    /// Throws DataError on the first record violating 0 <= zeros <= shots, shots >= 1.
    void validate() const;
};

/// Reads CSV with header `gates,shots,zeros[,timestamp]` or `gates,shots,frequency[,timestamp]`.
///
/// Frequencies are converted with zeros = round(frequency * shots). Errors name
/// the source and the 1-based line number.
PoolDataset parse_dataset(std::istream& in, const std::string& source = "<input>");
PoolDataset parse_dataset(const std::string& path);

/// Canonical form: header `gates,shots,zeros,timestamp`, one record per line.
void write_dataset(std::ostream& out, const PoolDataset& data);

}  // namespace blochwalk
