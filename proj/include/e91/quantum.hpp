#pragma once

// Exact two-qubit math for the hybrid polarization / time-bin pair: state
// construction, Born-rule probabilities for Bloch-vector projective
// measurements, correlation and CHSH values, and the information-theoretic
// quantities that turn (S, QBER) into a secure key fraction.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string>

#include "e91/error.hpp"

namespace e91 {

using Complex = std::complex<double>;

inline constexpr double kTsirelsonBound = 2.0 * std::numbers::sqrt2;
inline constexpr double kClassicalBound = 2.0;
inline constexpr double kNormTolerance = 1e-12;
inline constexpr double kClosedFormTolerance = 1e-9;

/// Joint pure state of Alice's polarization qubit and Bob's time-bin qubit.
/// Amplitudes are ordered (H0, H1, V0, V1): Alice H/V is the first index,
/// Bob |0>/|1> the second.
class TwoQubitState {
public:
    /// Accepts amplitudes that are already normalized (within kNormTolerance).
    static TwoQubitState from_amplitudes(const std::array<Complex, 4>& amps) {
        const double n = squared_norm(amps);
        if (!std::isfinite(n) || std::abs(n - 1.0) > kNormTolerance)
            throw InvalidArgument("two-qubit state amplitudes are not normalized");
        return TwoQubitState(amps);
    }

    /// Rescales any nonzero finite amplitude vector to unit norm.
    static TwoQubitState normalized(std::array<Complex, 4> amps) {
        const double n = squared_norm(amps);
        if (!std::isfinite(n) || n <= 0.0)
            throw InvalidArgument("cannot normalize a zero or non-finite amplitude vector");
        const double scale = 1.0 / std::sqrt(n);
        for (auto& a : amps) a *= scale;
        return TwoQubitState(amps);
    }

    const std::array<Complex, 4>& amplitudes() const noexcept { return amps_; }

    /// alice_bit: 0 = H, 1 = V.  bob_bit: 0 = |0>, 1 = |1>.
    Complex amplitude(int alice_bit, int bob_bit) const noexcept {
        return amps_[static_cast<std::size_t>(2 * alice_bit + bob_bit)];
    }

    double norm() const noexcept { return std::sqrt(squared_norm(amps_)); }

private:
    explicit TwoQubitState(const std::array<Complex, 4>& amps) : amps_(amps) {}

    static double squared_norm(const std::array<Complex, 4>& amps) noexcept {
        double n = 0.0;
        for (const auto& a : amps) n += std::norm(a);
        return n;
    }

    std::array<Complex, 4> amps_;
};

/// (|H0> + e^{i phase} |V1>) / sqrt(2).
inline TwoQubitState hybrid_state(double phase) {
    if (!std::isfinite(phase)) throw InvalidArgument("hybrid_state: phase must be finite");
    const double r = 1.0 / std::numbers::sqrt2;
    return TwoQubitState::from_amplitudes(
        {Complex(r, 0.0), Complex(0.0, 0.0), Complex(0.0, 0.0), std::polar(r, phase)});
}

enum class Party : std::uint8_t { alice = 0, bob = 1 };

/// a0..a2 are Alice's analyzers, b0/b1 Bob's decoder bases. The numeric
/// values index SettingSet storage and appear on the wire.
enum class SettingLabel : std::uint8_t { a0 = 0, a1 = 1, a2 = 2, b0 = 3, b1 = 4 };

constexpr Party party_of(SettingLabel label) noexcept {
    return static_cast<std::uint8_t>(label) <= 2 ? Party::alice : Party::bob;
}

inline std::string to_string(SettingLabel label) {
    switch (label) {
        case SettingLabel::a0: return "a0";
        case SettingLabel::a1: return "a1";
        case SettingLabel::a2: return "a2";
        case SettingLabel::b0: return "b0";
        case SettingLabel::b1: return "b1";
    }
    return "?";
}

inline std::string to_string(Party party) { return party == Party::alice ? "alice" : "bob"; }

struct BlochVector {
    double x = 0.0;
    double y = 0.0;
    double z = 1.0;

    double norm() const noexcept { return std::sqrt(x * x + y * y + z * z); }
};

/// A polarizer at physical angle alpha measures along Bloch angle 2*alpha in
/// the z-x plane (H = +z).
inline BlochVector bloch_from_polarizer_angle(double alpha_rad) noexcept {
    return {std::sin(2.0 * alpha_rad), 0.0, std::cos(2.0 * alpha_rad)};
}

inline double degrees(double deg) noexcept { return deg * std::numbers::pi / 180.0; }

using DetectorId = std::uint8_t;

/// One party's measurement basis. Outcome +1 lands on plus_port, -1 on
/// minus_port. outcome_sign relabels the outcomes when forming correlation
/// terms; the Born-rule functions ignore it.
struct MeasurementSetting {
    Party party = Party::alice;
    SettingLabel label = SettingLabel::a2;
    BlochVector bloch;
    DetectorId plus_port = 0;
    DetectorId minus_port = 0;
    int outcome_sign = +1;

    DetectorId port_for(int outcome) const noexcept { return outcome > 0 ? plus_port : minus_port; }
};

inline MeasurementSetting make_setting(SettingLabel label, BlochVector bloch, DetectorId plus_port,
                                       DetectorId minus_port, int outcome_sign = +1) {
    if (std::abs(bloch.norm() - 1.0) > kNormTolerance)
        throw InvalidArgument("measurement setting " + to_string(label) + ": Bloch vector is not unit length");
    if (plus_port == minus_port)
        throw InvalidArgument("measurement setting " + to_string(label) + ": plus and minus ports coincide");
    if (outcome_sign != 1 && outcome_sign != -1)
        throw InvalidArgument("measurement setting " + to_string(label) + ": outcome sign must be +1 or -1");
    return {party_of(label), label, bloch, plus_port, minus_port, outcome_sign};
}

/// The five analyzers of the modified E91 scheme, indexed by label.
class SettingSet {
public:
    SettingSet(const std::array<MeasurementSetting, 3>& alice, const std::array<MeasurementSetting, 2>& bob)
        : alice_(alice), bob_(bob) {
        validate();
    }

    /// Alice analyzers at 0 (a2, key), -22.5 (a0) and -67.5 degrees (a1);
    /// Bob's time basis b0 = Z and superposition basis b1 = X. Detector ids:
    /// Alice a2 -> 1/2 (H/V), a0 -> 3/4, a1 -> 5/6; Bob b0 -> 1/2 (|0>/|1>),
    /// b1 -> 3/4 (|0>+|1> / |0>-|1>). a1 carries a flipped outcome sign so the
    /// count combinations below reproduce the standard coincidence table.
    static SettingSet standard() {
        return SettingSet(
            {make_setting(SettingLabel::a0, bloch_from_polarizer_angle(degrees(-22.5)), 3, 4, +1),
             make_setting(SettingLabel::a1, bloch_from_polarizer_angle(degrees(-67.5)), 5, 6, -1),
             make_setting(SettingLabel::a2, bloch_from_polarizer_angle(0.0), 1, 2, +1)},
            {make_setting(SettingLabel::b0, BlochVector{0.0, 0.0, 1.0}, 1, 2, +1),
             make_setting(SettingLabel::b1, BlochVector{1.0, 0.0, 0.0}, 3, 4, +1)});
    }

    const MeasurementSetting& operator[](SettingLabel label) const noexcept {
        const auto idx = static_cast<std::size_t>(label);
        return idx <= 2 ? alice_[idx] : bob_[idx - 3];
    }

    const std::array<MeasurementSetting, 3>& alice() const noexcept { return alice_; }
    const std::array<MeasurementSetting, 2>& bob() const noexcept { return bob_; }

    /// Which setting a detector belongs to, with the +1/-1 outcome it signals.
    /// Returns false for ids outside the party's detector set.
    bool lookup(Party party, DetectorId port, SettingLabel& label, int& outcome) const noexcept {
        auto scan = [&](const auto& settings) {
            for (const auto& s : settings) {
                if (s.plus_port == port || s.minus_port == port) {
                    label = s.label;
                    outcome = s.plus_port == port ? +1 : -1;
                    return true;
                }
            }
            return false;
        };
        return party == Party::alice ? scan(alice_) : scan(bob_);
    }

private:
    void validate() const {
        for (std::size_t i = 0; i < alice_.size(); ++i)
            if (alice_[i].party != Party::alice || static_cast<std::size_t>(alice_[i].label) != i)
                throw InvalidArgument("SettingSet: Alice settings must be a0, a1, a2 in order");
        for (std::size_t i = 0; i < bob_.size(); ++i)
            if (bob_[i].party != Party::bob || static_cast<std::size_t>(bob_[i].label) != i + 3)
                throw InvalidArgument("SettingSet: Bob settings must be b0, b1 in order");
        auto unique_ports = [](const auto& settings) {
            std::array<bool, 256> seen{};
            for (const auto& s : settings) {
                for (DetectorId p : {s.plus_port, s.minus_port}) {
                    if (seen[p]) return false;
                    seen[p] = true;
                }
            }
            return true;
        };
        if (!unique_ports(alice_) || !unique_ports(bob_))
            throw InvalidArgument("SettingSet: detector ports must be unique within a party");
    }

    std::array<MeasurementSetting, 3> alice_;
    std::array<MeasurementSetting, 2> bob_;
};

namespace detail {

using Matrix2 = std::array<std::array<Complex, 2>, 2>;

/// (I + outcome * n.sigma) / 2
inline Matrix2 projector(const BlochVector& n, int outcome) noexcept {
    const double s = outcome > 0 ? 1.0 : -1.0;
    const Complex i(0.0, 1.0);
    return {{{0.5 * (1.0 + s * n.z), 0.5 * s * (n.x - i * n.y)},
             {0.5 * s * (n.x + i * n.y), 0.5 * (1.0 - s * n.z)}}};
}

inline void check_parties(const MeasurementSetting& a, const MeasurementSetting& b) {
    if (a.party != Party::alice || b.party != Party::bob)
        throw InvalidArgument("expected one Alice setting followed by one Bob setting");
}

}  // namespace detail

/// Born-rule probability of outcomes (a_out, b_out), each +1 or -1 along the
/// settings' Bloch vectors.
inline double joint_probability(const TwoQubitState& state, const MeasurementSetting& a, const MeasurementSetting& b,
                                int a_out, int b_out) {
    detail::check_parties(a, b);
    if ((a_out != 1 && a_out != -1) || (b_out != 1 && b_out != -1))
        throw InvalidArgument("joint_probability: outcomes must be +1 or -1");
    const auto pa = detail::projector(a.bloch, a_out);
    const auto pb = detail::projector(b.bloch, b_out);
    double p = 0.0;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            Complex projected(0.0, 0.0);
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l) projected += pa[i][k] * pb[j][l] * state.amplitude(k, l);
            p += std::norm(projected);
        }
    }
    return p;
}

/// Probability of Alice's outcome alone, summed over Bob's outcomes in any basis.
inline double alice_marginal(const TwoQubitState& state, const MeasurementSetting& a, int a_out) {
    const auto pa = detail::projector(a.bloch, a_out);
    double p = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int l = 0; l < 2; ++l) {
            Complex projected = pa[i][0] * state.amplitude(0, l) + pa[i][1] * state.amplitude(1, l);
            p += std::norm(projected);
        }
    return p;
}

inline double bob_marginal(const TwoQubitState& state, const MeasurementSetting& b, int b_out) {
    const auto pb = detail::projector(b.bloch, b_out);
    double p = 0.0;
    for (int k = 0; k < 2; ++k)
        for (int j = 0; j < 2; ++j) {
            Complex projected = pb[j][0] * state.amplitude(k, 0) + pb[j][1] * state.amplitude(k, 1);
            p += std::norm(projected);
        }
    return p;
}

/// Expectation of the product of the +1/-1 outcomes, in [-1, 1].
inline double correlation(const TwoQubitState& state, const MeasurementSetting& a, const MeasurementSetting& b) {
    double e = 0.0;
    for (int ao : {1, -1})
        for (int bo : {1, -1}) e += ao * bo * joint_probability(state, a, b, ao, bo);
    return e;
}

/// Correlation after applying both settings' outcome-sign relabeling.
inline double signed_correlation(const TwoQubitState& state, const MeasurementSetting& a,
                                 const MeasurementSetting& b) {
    return a.outcome_sign * b.outcome_sign * correlation(state, a, b);
}

/// S = E(a0,b0) + E(a0,b1) + E(a1,b0) - E(a1,b1) using signed correlations.
inline double chsh_value(const TwoQubitState& state, const MeasurementSetting& a0, const MeasurementSetting& a1,
                         const MeasurementSetting& b0, const MeasurementSetting& b1) {
    return signed_correlation(state, a0, b0) + signed_correlation(state, a0, b1) +
           signed_correlation(state, a1, b0) - signed_correlation(state, a1, b1);
}

inline double chsh_value(const TwoQubitState& state, const SettingSet& settings) {
    return chsh_value(state, settings[SettingLabel::a0], settings[SettingLabel::a1], settings[SettingLabel::b0],
                      settings[SettingLabel::b1]);
}

/// h(x) = -x log2 x - (1-x) log2(1-x), with h(0) = h(1) = 0.
inline double binary_entropy(double x) {
    if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("binary_entropy: argument outside [0, 1]");
    if (x == 0.0 || x == 1.0) return 0.0;
    return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

/// Upper bound on the eavesdropper's information per key bit given the CHSH
/// value. Returns 1 (no security) for |s| <= 2.
inline double holevo_bound(double s) {
    const double a = std::abs(s);
    if (!std::isfinite(s) || a > kTsirelsonBound + kClosedFormTolerance)
        throw InvalidArgument("holevo_bound: |S| exceeds the Tsirelson bound");
    if (a <= kClassicalBound) return 1.0;
    const double root = std::sqrt(std::max(0.0, a * a / 4.0 - 1.0));
    return binary_entropy(std::min(1.0, (1.0 + root) / 2.0));
}

/// I(A;B) = 1 - h(qber) for a binary symmetric channel, qber in [0, 0.5].
inline double mutual_information(double qber) {
    if (!(qber >= 0.0 && qber <= 0.5)) throw InvalidArgument("mutual_information: QBER outside [0, 0.5]");
    return 1.0 - binary_entropy(qber);
}

inline double secure_fraction(double s, double qber) {
    return std::max(0.0, mutual_information(qber) - holevo_bound(s));
}

struct SecurityQuantities {
    double s_value = 0.0;
    double s_error = 0.0;
    double qber = 0.0;
    double i_ab = 0.0;
    double i_eve = 1.0;
    double secure_fraction = 0.0;
};

/// Measured estimates may land outside the formulas' domains through
/// statistical noise: |S| above 2*sqrt(2) is treated as 2*sqrt(2), and a
/// QBER above one half carries no mutual information.
inline SecurityQuantities security_quantities(double s, double s_error, double qber) {
    SecurityQuantities q;
    q.s_value = s;
    q.s_error = s_error;
    q.qber = qber;
    q.i_ab = qber <= 0.5 ? mutual_information(qber) : 0.0;
    q.i_eve = holevo_bound(std::clamp(s, -kTsirelsonBound, kTsirelsonBound));
    q.secure_fraction = std::max(0.0, q.i_ab - q.i_eve);
    return q;
}

}  // namespace e91
