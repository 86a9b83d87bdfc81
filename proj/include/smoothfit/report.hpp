#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "smoothfit/solver.hpp"

namespace smoothfit {

const char* version();

/// Provenance written into every output file.
struct OutputMeta {
    std::string command;
    std::string digest;
    std::optional<std::uint64_t> seed;
    std::vector<std::pair<std::string, std::string>> extra;
};

/// Numeric CSV: '#' metadata lines, a header row, values with 6 decimals.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void add(std::vector<double> row);
    void write(std::ostream& out, const OutputMeta& meta) const;
};

std::string fixed6(double v);

nlohmann::json meta_json(const OutputMeta& meta);

nlohmann::json to_json(const Schedule& s);
Schedule schedule_from_json(const nlohmann::json& j);

/// Columns as arrays, with the metadata block.
nlohmann::json table_json(const CsvTable& t, const OutputMeta& meta);

/// Writes `text` to `path`, creating parent directories.
void write_file(const std::string& path, const std::string& text);

}  // namespace smoothfit
