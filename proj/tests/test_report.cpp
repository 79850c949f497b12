#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "e91/protocol/report.hpp"

using namespace e91;

TEST(Report, PerfectInputs) {
    const auto r = build_report("000", {2 * std::numbers::sqrt2, 0.01, 0.0, 1000, 1.0, 0.0});
    EXPECT_EQ(r.verdict, Verdict::accept);
    EXPECT_NEAR(r.secure_bps, 1000.0, 1e-9);
    EXPECT_EQ(r.raw_bps, 1000.0);
    EXPECT_EQ(r.secure_fraction, 1.0);
}

TEST(Report, ClassicalBoundAborts) {
    const auto r = build_report("001", {2.0, 0.01, 0.0, 1000, 1.0, 0.0});
    EXPECT_EQ(r.verdict, Verdict::abort);
    EXPECT_EQ(r.secure_bps, 0.0);
    EXPECT_EQ(r.i_eve, 1.0);
}

TEST(Report, FieldRateArithmetic) {
    // S chosen so that the key fraction is 0.07 at QBER 3.71 %
    const double target = 0.07;
    double lo = 2.0, hi = 2 * std::numbers::sqrt2;
    for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (lo + hi);
        (secure_fraction(mid, 0.0371) < target ? lo : hi) = mid;
    }
    const auto r = build_report("002", {hi, 0.02, 0.0371, 15000, 10.0, 0.0});
    EXPECT_NEAR(r.raw_bps, 1500.0, 1e-9);
    EXPECT_NEAR(r.secure_fraction, 0.07, 1e-9);
    EXPECT_NEAR(r.secure_bps, 105.0, 1e-6);
    EXPECT_EQ(r.verdict, Verdict::accept);
}

TEST(Report, ConservativeSigmaRule) {
    ReportInputs in{2.05, 0.02, 0.03, 1000, 1.0, 0.0};
    EXPECT_EQ(build_report("x", in).verdict, Verdict::abort);  // key fraction is zero at S = 2.05
    in.s = 2.7;
    EXPECT_EQ(build_report("x", in).verdict, Verdict::accept);
    in.abort_sigma = 3.0;
    in.s_err = 0.25;
    EXPECT_EQ(build_report("x", in).verdict, Verdict::abort);
    in.s_err = 0.2;
    EXPECT_EQ(build_report("x", in).verdict, Verdict::accept);
}

TEST(Report, VerdictRuleOnGrid) {
    for (double s = 1.0; s <= 2.82; s += 0.02)
        for (double q = 0.0; q <= 0.2; q += 0.01)
            for (double k : {0.0, 3.0}) {
                const auto r = build_report("g", {s, 0.03, q, 500, 1.0, k});
                const bool abort = s - k * 0.03 <= 2.0 || r.secure_fraction == 0.0;
                EXPECT_EQ(r.verdict == Verdict::abort, abort) << s << ' ' << q << ' ' << k;
                EXPECT_EQ(r.secure_bps, abort ? 0.0 : r.raw_bps * r.secure_fraction);
                EXPECT_NEAR(r.i_ab, 1 - binary_entropy(q), 1e-12);
            }
}

TEST(Report, UnestimableInputsAbort) {
    const auto r = build_report("nan", {std::nan(""), std::nan(""), 0.02, 10, 1.0, 0.0});
    EXPECT_EQ(r.verdict, Verdict::abort);
    EXPECT_EQ(r.secure_bps, 0.0);
    EXPECT_EQ(format_row(r), "nan,nan,nan,0.020000,10,10.000,0.858559,1.000000,0.000000,0.000,abort");
}

TEST(Report, CsvLayout) {
    SecurityReport rep;
    rep.blocks.push_back(build_report("000", {2.5, 0.1, 0.05, 123, 10.0, 0.0}));
    rep.aggregate = build_report("total", {2.5, 0.1, 0.05, 123, 10.0, 0.0});
    const auto csv = report_csv(rep);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "block_id,S,S_err,qber,raw_bits,raw_bps,i_ab,i_eve,secure_fraction,secure_bps,verdict");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_NE(csv.find("\n000,2.500000,0.100000,0.050000,123,12.300,0.713603,0.543564,0.170039,2.091,accept\n"),
              std::string::npos);
}
