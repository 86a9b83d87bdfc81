#include "smoothfit/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "smoothfit/errors.hpp"

namespace smoothfit {

const char* version() { return SMOOTHFIT_VERSION; }

std::string fixed6(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    // no negative zero in output
    if (std::string(buf) == "-0.000000") return "0.000000";
    return buf;
}

void CsvTable::add(std::vector<double> row) {
    if (row.size() != columns.size())
        throw ValidationError("row has " + std::to_string(row.size()) + " values for " +
                              std::to_string(columns.size()) + " columns");
    rows.push_back(std::move(row));
}

void CsvTable::write(std::ostream& out, const OutputMeta& meta) const {
    out << "# tool: smoothfit " << version() << "\n";
    out << "# command: " << meta.command << "\n";
    out << "# config_digest: " << meta.digest << "\n";
    if (meta.seed) out << "# seed: " << *meta.seed << "\n";
    for (const auto& [k, v] : meta.extra) out << "# " << k << ": " << v << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
    out << "\n";
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << fixed6(r[i]);
        out << "\n";
    }
}

nlohmann::json meta_json(const OutputMeta& meta) {
    nlohmann::json j{{"tool", "smoothfit"}, {"version", version()}, {"command", meta.command},
                     {"config_digest", meta.digest}};
    if (meta.seed) j["seed"] = *meta.seed;
    for (const auto& [k, v] : meta.extra) j[k] = v;
    return j;
}

nlohmann::json to_json(const Schedule& s) {
    nlohmann::json pairs = nlohmann::json::array(), res = nlohmann::json::array();
    for (const auto& p : s.pairs) pairs.push_back({{"a_mw", p.a}, {"b_mw", p.b}});
    for (const auto& r : s.residuals) res.push_back({{"psi", r.psi}, {"phi", r.phi}});
    return {{"factor", s.factor}, {"z", s.z}, {"pairs", pairs}, {"A", s.A}, {"B", s.B}, {"residuals", res}};
}

Schedule schedule_from_json(const nlohmann::json& j) {
    try {
        Schedule s;
        s.factor = j.at("factor").get<std::string>();
        s.z = j.at("z").get<std::vector<double>>();
        for (const auto& p : j.at("pairs")) s.pairs.push_back({p.at("a_mw").get<double>(), p.at("b_mw").get<double>()});
        if (j.contains("A")) s.A = j.at("A").get<std::vector<double>>();
        if (j.contains("B")) s.B = j.at("B").get<std::vector<double>>();
        if (j.contains("residuals"))
            for (const auto& r : j.at("residuals")) s.residuals.push_back({r.at("psi").get<double>(), r.at("phi").get<double>()});
        if (s.pairs.empty()) throw ValidationError("schedule JSON has no pairs");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("schedule JSON: ") + e.what());
    }
}

nlohmann::json table_json(const CsvTable& t, const OutputMeta& meta) {
    nlohmann::json cols = nlohmann::json::object();
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
        std::vector<double> v;
        for (const auto& r : t.rows) v.push_back(r[c]);
        cols[t.columns[c]] = v;
    }
    return {{"meta", meta_json(meta)}, {"columns", cols}};
}

void write_file(const std::string& path, const std::string& text) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << text;
    if (!out) throw ValidationError("failed writing " + path);
}

}  // namespace smoothfit
