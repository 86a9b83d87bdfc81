#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <sstream>

#include "smoothfit/errors.hpp"
#include "smoothfit/series.hpp"

using namespace smoothfit;

namespace {

std::uint64_t bits(double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, sizeof u);
    return u;
}

}  // namespace

TEST(Ingest, ThreeRows) {
    std::istringstream in("time,mw\n0,100.5\n60,-200\n120,3.25\n");
    const DemandSeries s = ingest_csv(in);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s.x[1], -200.0);
    EXPECT_EQ(s.dt, 60.0);
    EXPECT_EQ(s.segment_starts.size(), 1u);
    EXPECT_TRUE(s.gaps.empty());
}

TEST(Ingest, GapSplitsSegments) {
    std::ostringstream csv;
    for (int k = 0; k < 5; ++k) csv << k * 60 << "," << k << "\n";
    for (int k = 0; k < 5; ++k) csv << 10000 + k * 60 << "," << k << "\n";
    std::istringstream in(csv.str());
    const DemandSeries s = ingest_csv(in);
    ASSERT_EQ(s.gaps.size(), 1u);
    EXPECT_EQ(s.gaps[0].index, 5u);
    EXPECT_EQ(s.gaps[0].start, 240.0);
    EXPECT_EQ(s.gaps[0].end, 10000.0);
    ASSERT_EQ(s.segment_starts.size(), 2u);
    EXPECT_EQ(s.segment_end(0), 5u);
    EXPECT_EQ(s.segment_end(1), 10u);
}

TEST(Ingest, GapBelowThresholdKept) {
    std::istringstream in("0,1\n60,2\n600,3\n660,4\n");  // 540 s < 10 x 60 s
    EXPECT_TRUE(ingest_csv(in).gaps.empty());
}

TEST(Ingest, IsoTimestampsAndComments) {
    std::istringstream in(
        "# exported\n"
        "timestamp,excess_mw\n"
        "2020-01-01T00:00:00Z,10\n"
        "# mid-file comment\n"
        "2020-01-01 00:01,11\n"
        "2020-01-01T00:02:00.5+00:00,12\n"
        "2020-01-01T01:03:00+01:00,13\n");
    const DemandSeries s = ingest_csv(in);
    ASSERT_EQ(s.size(), 4u);
    EXPECT_EQ(s.t[0], 1577836800.0);
    EXPECT_EQ(s.t[1] - s.t[0], 60.0);
    EXPECT_EQ(s.t[2] - s.t[0], 120.5);
    EXPECT_EQ(s.t[3] - s.t[0], 180.0);
}

TEST(Ingest, ErrorsCarryLineNumber) {
    std::istringstream bad("0,1\n60,2\n120,abc\n");
    try {
        ingest_csv(bad);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    std::istringstream late_header("0,1\ntime,mw\n");
    EXPECT_THROW(ingest_csv(late_header), ParseError);
    std::istringstream one_col("0,1\n60\n");
    try {
        ingest_csv(one_col);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(Ingest, NonMonotoneTimestamps) {
    std::istringstream in("0,1\n60,2\n60,3\n");
    try {
        ingest_csv(in);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(Ingest, EmptyInput) {
    std::istringstream in("# nothing\n");
    EXPECT_THROW(ingest_csv(in), InsufficientDataError);
    EXPECT_THROW(ingest_csv_file("/nonexistent/demand.csv"), ValidationError);
}

TEST(Ingest, RoundTripBitExact) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 9000.0);
    std::vector<double> t, x;
    double now = 1.6e9;
    for (int k = 0; k < 2000; ++k) {
        now += 0.1 + std::ldexp(static_cast<double>(rng() >> 40), -30);
        t.push_back(now);
        x.push_back(n(rng));
    }
    const DemandSeries a = make_series(t, x);
    std::stringstream io;
    write_csv(a, io);
    const DemandSeries b = ingest_csv(io);
    ASSERT_EQ(b.size(), a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        ASSERT_EQ(bits(b.t[k]), bits(a.t[k])) << k;
        ASSERT_EQ(bits(b.x[k]), bits(a.x[k])) << k;
    }
}

TEST(Series, Validation) {
    EXPECT_THROW(make_series({0, 1}, {1}), ValidationError);
    EXPECT_THROW(make_series({0, 1, 1}, {1, 2, 3}), ValidationError);
    EXPECT_THROW(make_series({0, 1}, {1, NAN}), ValidationError);
    EXPECT_THROW(make_series({}, {}), InsufficientDataError);
}

TEST(Timestamp, Parse) {
    EXPECT_EQ(parse_timestamp("0"), 0.0);
    EXPECT_EQ(parse_timestamp("1700000000.25"), 1700000000.25);
    EXPECT_EQ(parse_timestamp("1970-01-02"), 86400.0);
    EXPECT_EQ(parse_timestamp("2000-02-29T12:00:00-0130"), 951825600.0 + 5400.0);
    EXPECT_THROW(parse_timestamp("2001-02-29T00:00:00"), std::invalid_argument);
    EXPECT_THROW(parse_timestamp("2020-01-01T25:00"), std::invalid_argument);
    EXPECT_THROW(parse_timestamp("yesterday"), std::invalid_argument);
}
