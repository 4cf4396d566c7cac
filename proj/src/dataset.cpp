#include "blochwalk/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "blochwalk/errors.hpp"

namespace blochwalk {

void PoolDataset::validate() const {
    for (std::size_t i = 0; i < records.size(); ++i) {
        const ShotRecord& r = records[i];
        if (r.shots < 1) throw DataError("record " + std::to_string(i) + ": shots must be >= 1");
        if (r.zeros < 0) throw DataError("record " + std::to_string(i) + ": zeros must be >= 0");
        if (r.zeros > r.shots) throw DataError("record " + std::to_string(i) + ": zeros > shots");
    }
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        fields.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return fields;
}

template <typename Int>
Int parse_int(const std::string& text, const std::string& where, const char* column) {
    Int value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || text.empty()) {
        throw DataError(where + ": column '" + column + "' is not an integer: '" + text + "'");
    }
    return value;
}

double parse_real(const std::string& text, const std::string& where, const char* column) {
    double value = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || text.empty() || !std::isfinite(value)) {
        throw DataError(where + ": column '" + column + "' is not a number: '" + text + "'");
    }
    return value;
}

}  // namespace

PoolDataset parse_dataset(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            header = split_fields(line);
            break;
        }
    }
    if (header.empty()) throw DataError(source + ": empty file, expected a header line");

    const bool has_ts = header.size() == 4 && header[3] == "timestamp";
    const bool header_ok = (header.size() == 3 || has_ts) && header[0] == "gates" && header[1] == "shots" &&
                           (header[2] == "zeros" || header[2] == "frequency");
    if (!header_ok) {
        throw DataError(source + ":" + std::to_string(line_no) +
                        ": malformed header, expected 'gates,shots,zeros[,timestamp]' or "
                        "'gates,shots,frequency[,timestamp]'");
    }
    const bool frequency_form = header[2] == "frequency";

    PoolDataset data;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(fields.size()));
        }
        ShotRecord r;
        r.gates = parse_int<GateCount>(fields[0], where, "gates");
        r.shots = parse_int<std::int64_t>(fields[1], where, "shots");
        if (r.shots < 1) throw DataError(where + ": shots must be >= 1");
        if (frequency_form) {
            const double f = parse_real(fields[2], where, "frequency");
            if (f < 0.0 || f > 1.0) throw DataError(where + ": frequency outside [0, 1]");
            r.zeros = std::llround(f * static_cast<double>(r.shots));
        } else {
            r.zeros = parse_int<std::int64_t>(fields[2], where, "zeros");
        }
        if (r.zeros < 0) throw DataError(where + ": zeros must be >= 0");
        if (r.zeros > r.shots) throw DataError(where + ": zeros > shots");
        if (has_ts && !fields[3].empty()) r.timestamp = fields[3];
        data.records.push_back(std::move(r));
    }
    return data;
}

PoolDataset parse_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file '" + path + "'");
    return parse_dataset(in, path);
}

void write_dataset(std::ostream& out, const PoolDataset& data) {
    out << "gates,shots,zeros,timestamp\n";
    for (const ShotRecord& r : data.records) {
        out << r.gates << ',' << r.shots << ',' << r.zeros << ',' << r.timestamp.value_or("") << '\n';
    }
}

}  // namespace blochwalk
