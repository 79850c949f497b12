#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "e91/coincidence.hpp"
#include "e91/quantum.hpp"

namespace e91 {

enum class Verdict : std::uint8_t { accept, abort };

inline const char* to_string(Verdict v) { return v == Verdict::accept ? "accept" : "abort"; }

/// One row of the security report: a 10 s block or the session aggregate.
struct BlockReport {
    std::string block_id;
    double s = std::nan("");
    double s_err = std::nan("");
    double qber = std::nan("");
    std::uint64_t raw_bits = 0;
    double raw_bps = 0.0;
    double i_ab = 0.0;
    double i_eve = 1.0;
    double secure_fraction = 0.0;
    double secure_bps = 0.0;
    Verdict verdict = Verdict::abort;
};

struct ReportInputs {
    double s = std::nan("");      ///< NaN when a CHSH term had no counts
    double s_err = std::nan("");
    double qber = std::nan("");   ///< NaN when the key was too short to sample
    std::uint64_t raw_bits = 0;
    double duration_s = 0.0;
    double abort_sigma = 0.0;
};

/// Verdict is abort iff S - k*sigma <= 2, the key fraction is zero, or an
/// input could not be estimated.
inline BlockReport build_report(std::string block_id, const ReportInputs& in) {
    BlockReport r;
    r.block_id = std::move(block_id);
    r.s = in.s;
    r.s_err = in.s_err;
    r.qber = in.qber;
    r.raw_bits = in.raw_bits;
    r.raw_bps = in.duration_s > 0.0 ? static_cast<double>(in.raw_bits) / in.duration_s : 0.0;
    const bool estimable = std::isfinite(in.s) && std::isfinite(in.s_err) && std::isfinite(in.qber);
    if (estimable) {
        const auto q = security_quantities(in.s, in.s_err, in.qber);
        r.i_ab = q.i_ab;
        r.i_eve = q.i_eve;
        r.secure_fraction = q.secure_fraction;
    } else {
        r.i_ab = std::isfinite(in.qber) && in.qber <= 0.5 ? mutual_information(in.qber) : 0.0;
        r.i_eve = 1.0;
        r.secure_fraction = 0.0;
    }
    const bool violates = estimable && in.s - in.abort_sigma * in.s_err > kClassicalBound;
    r.verdict = violates && r.secure_fraction > 0.0 ? Verdict::accept : Verdict::abort;
    r.secure_bps = r.verdict == Verdict::accept ? r.raw_bps * r.secure_fraction : 0.0;
    return r;
}

inline constexpr const char* kReportHeader =
    "block_id,S,S_err,qber,raw_bits,raw_bps,i_ab,i_eve,secure_fraction,secure_bps,verdict";

inline std::string format_row(const BlockReport& r) {
    using detail::format_fixed;
    std::string out = r.block_id;
    for (const auto& f : {format_fixed(r.s, 6), format_fixed(r.s_err, 6), format_fixed(r.qber, 6),
                          std::to_string(r.raw_bits), format_fixed(r.raw_bps, 3), format_fixed(r.i_ab, 6),
                          format_fixed(r.i_eve, 6), format_fixed(r.secure_fraction, 6), format_fixed(r.secure_bps, 3)}) {
        out += ',';
        out += f;
    }
    out += ',';
    out += to_string(r.verdict);
    return out;
}

struct SecurityReport {
    std::vector<BlockReport> blocks;
    BlockReport aggregate;
    /// False when the session ended early on a transport or protocol failure.
    bool complete = true;
    std::string failure;
};

inline void write_report_csv(std::ostream& out, const SecurityReport& report) {
    out << kReportHeader << '\n';
    for (const auto& b : report.blocks) out << format_row(b) << '\n';
    out << format_row(report.aggregate) << '\n';
}

inline std::string report_csv(const SecurityReport& report) {
    std::ostringstream s;
    write_report_csv(s, report);
    return s.str();
}

}  // namespace e91
