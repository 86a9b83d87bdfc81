#include "smoothfit/series.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "smoothfit/errors.hpp"

namespace smoothfit {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

int digits(const std::string& s, std::size_t pos, std::size_t n) {
    if (pos + n > s.size()) throw std::invalid_argument("truncated timestamp");
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
        if (s[i] < '0' || s[i] > '9') throw std::invalid_argument("bad digit in timestamp");
        v = 10 * v + (s[i] - '0');
    }
    return v;
}

}  // namespace

double parse_timestamp(const std::string& raw) {
    const std::string s = trim(raw);
    double epoch;
    if (parse_number(s, epoch)) return epoch;

    // YYYY-MM-DD[(T| )hh:mm[:ss[.fff]]][Z|(+|-)hh[:]mm]
    using namespace std::chrono;
    const int y = digits(s, 0, 4);
    if (s.size() < 10 || s[4] != '-' || s[7] != '-') throw std::invalid_argument("bad date");
    const year_month_day ymd{year{y}, month{unsigned(digits(s, 5, 2))}, day{unsigned(digits(s, 8, 2))}};
    if (!ymd.ok()) throw std::invalid_argument("invalid calendar date");
    double secs = double(sys_days{ymd}.time_since_epoch().count()) * 86400.0;
    std::size_t p = 10;
    if (p < s.size() && (s[p] == 'T' || s[p] == ' ')) {
        const int hh = digits(s, p + 1, 2);
        if (p + 3 >= s.size() || s[p + 3] != ':') throw std::invalid_argument("bad time");
        const int mm = digits(s, p + 4, 2);
        double ss = 0.0;
        p += 6;
        if (p < s.size() && s[p] == ':') {
            ss = digits(s, p + 1, 2);
            p += 3;
            if (p < s.size() && (s[p] == '.' || s[p] == ',')) {
                std::size_t q = p + 1;
                double scale = 0.1;
                while (q < s.size() && s[q] >= '0' && s[q] <= '9') {
                    ss += scale * (s[q] - '0');
                    scale *= 0.1;
                    ++q;
                }
                if (q == p + 1) throw std::invalid_argument("empty fraction");
                p = q;
            }
        }
        if (hh > 23 || mm > 59 || ss >= 61.0) throw std::invalid_argument("time out of range");
        secs += hh * 3600.0 + mm * 60.0 + ss;
    }
    if (p < s.size()) {
        if (s[p] == 'Z' && p + 1 == s.size()) return secs;
        if (s[p] != '+' && s[p] != '-') throw std::invalid_argument("trailing characters");
        const int sign = s[p] == '+' ? 1 : -1;
        const int oh = digits(s, p + 1, 2);
        std::size_t q = p + 3;
        if (q < s.size() && s[q] == ':') ++q;
        const int om = digits(s, q, 2);
        if (q + 2 != s.size()) throw std::invalid_argument("trailing characters");
        secs -= sign * (oh * 3600.0 + om * 60.0);
    }
    return secs;
}

DemandSeries make_series(std::vector<double> t, std::vector<double> x, double gap_factor) {
    if (t.size() != x.size()) throw ValidationError("timestamps and values differ in length");
    if (t.empty()) throw InsufficientDataError("series is empty");
    if (!(gap_factor > 1.0)) throw ValidationError("gap factor must exceed 1");
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i]) || !std::isfinite(x[i]))
            throw ValidationError("non-finite sample at index " + std::to_string(i));
        if (i > 0 && !(t[i] > t[i - 1]))
            throw ValidationError("timestamps not strictly increasing at index " + std::to_string(i));
    }
    DemandSeries s;
    s.t = std::move(t);
    s.x = std::move(x);
    s.segment_starts.push_back(0);
    if (s.t.size() < 2) return s;

    std::vector<double> d(s.t.size() - 1);
    for (std::size_t i = 1; i < s.t.size(); ++i) d[i - 1] = s.t[i] - s.t[i - 1];
    auto mid = d.begin() + d.size() / 2;
    std::nth_element(d.begin(), mid, d.end());
    s.dt = *mid;

    for (std::size_t i = 1; i < s.t.size(); ++i) {
        if (s.t[i] - s.t[i - 1] > gap_factor * s.dt) {
            s.gaps.push_back({i, s.t[i - 1], s.t[i]});
            s.segment_starts.push_back(i);
        }
    }
    return s;
}

DemandSeries ingest_csv(std::istream& in, double gap_factor) {
    std::vector<double> t, x;
    std::string line;
    std::size_t lineno = 0;
    bool seen_row = false;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        const auto comma = s.find(',');
        if (comma == std::string::npos || s.find(',', comma + 1) != std::string::npos)
            throw ParseError("expected two comma-separated columns", lineno);
        const std::string c0 = trim(s.substr(0, comma));
        const std::string c1 = trim(s.substr(comma + 1));
        double ts, v;
        bool ok = parse_number(c1, v);
        if (ok) {
            try {
                ts = parse_timestamp(c0);
            } catch (const std::invalid_argument&) {
                ok = false;
            }
        }
        if (!ok) {
            // the first non-comment row may be a header
            if (!seen_row && !c1.empty() && !parse_number(c1, v)) {
                seen_row = true;
                continue;
            }
            throw ParseError("unparseable row '" + s + "'", lineno);
        }
        seen_row = true;
        if (!t.empty() && !(ts > t.back()))
            throw ParseError("timestamps not strictly increasing", lineno);
        t.push_back(ts);
        x.push_back(v);
    }
    if (t.empty()) throw InsufficientDataError("no data rows");
    return make_series(std::move(t), std::move(x), gap_factor);
}

DemandSeries ingest_csv_file(const std::string& path, double gap_factor) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    try {
        return ingest_csv(in, gap_factor);
    } catch (...) {
        rethrow_with_context(std::current_exception(), path);
    }
}

void write_csv(const DemandSeries& series, std::ostream& out) {
    char buf[64];
    out << "time_s,excess_demand_mw\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", series.t[i], series.x[i]);
        out << buf;
    }
}

}  // namespace smoothfit
