#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace smoothfit {

struct Gap {
    std::size_t index;  // first sample after the gap
    double start;       // s
    double end;         // s
};

/// Excess-demand samples, split into contiguous segments at gaps longer than
/// gap_factor * dt.
struct DemandSeries {
    std::vector<double> t;  // s, strictly increasing
    std::vector<double> x;  // MW
    double dt = 0.0;        // nominal sampling interval (median spacing)
    std::vector<std::size_t> segment_starts;
    std::vector<Gap> gaps;

    std::size_t size() const { return t.size(); }
    std::size_t segment_end(std::size_t segment) const {
        return segment + 1 < segment_starts.size() ? segment_starts[segment + 1] : t.size();
    }
};

/// Validates ordering and fills dt, segments and gaps.
DemandSeries make_series(std::vector<double> t, std::vector<double> x, double gap_factor = 10.0);

/// Two columns: ISO-8601 timestamp or epoch seconds, then MW. Optional header
/// row, '#' comment lines. Throws ParseError with the line number.
DemandSeries ingest_csv(std::istream& in, double gap_factor = 10.0);
DemandSeries ingest_csv_file(const std::string& path, double gap_factor = 10.0);

/// Epoch seconds and values printed with 17 significant digits.
void write_csv(const DemandSeries& series, std::ostream& out);

/// Seconds since 1970-01-01T00:00:00Z; throws std::invalid_argument.
double parse_timestamp(const std::string& text);

}  // namespace smoothfit
