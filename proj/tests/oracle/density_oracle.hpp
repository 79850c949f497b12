#pragma once

// Brute-force Born-rule oracle: 4x4 density matrix, Pauli-built projectors,
// Kronecker products, trace. Shares no code with the library's math.

#include <Eigen/Dense>

#include <array>
#include <complex>

namespace oracle {

using C = std::complex<double>;
using M2 = Eigen::Matrix<C, 2, 2>;
using M4 = Eigen::Matrix<C, 4, 4>;
using V4 = Eigen::Matrix<C, 4, 1>;

inline M2 pauli_x() { M2 m; m << 0, 1, 1, 0; return m; }
inline M2 pauli_y() { M2 m; m << 0, C(0, -1), C(0, 1), 0; return m; }
inline M2 pauli_z() { M2 m; m << 1, 0, 0, -1; return m; }

/// (I + o * n.sigma) / 2 for unit vector n and outcome o = +-1.
inline M2 projector(double nx, double ny, double nz, int outcome) {
    return 0.5 * (M2::Identity() + static_cast<double>(outcome) * (nx * pauli_x() + ny * pauli_y() + nz * pauli_z()));
}

inline M4 kron(const M2& a, const M2& b) {
    M4 k;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int r = 0; r < 2; ++r)
                for (int s = 0; s < 2; ++s) k(2 * i + r, 2 * j + s) = a(i, j) * b(r, s);
    return k;
}

/// amplitudes in the order (H0, H1, V0, V1): Alice's qubit is the major index.
inline M4 density(const std::array<C, 4>& amps) {
    V4 psi;
    for (int i = 0; i < 4; ++i) psi(i) = amps[static_cast<std::size_t>(i)];
    return psi * psi.adjoint();
}

struct Axis {
    double x, y, z;
};

inline double joint(const std::array<C, 4>& amps, Axis a, int oa, Axis b, int ob) {
    const M4 op = kron(projector(a.x, a.y, a.z, oa), projector(b.x, b.y, b.z, ob));
    return (density(amps) * op).trace().real();
}

inline double correlation(const std::array<C, 4>& amps, Axis a, Axis b) {
    double e = 0.0;
    for (int oa : {1, -1})
        for (int ob : {1, -1}) e += oa * ob * joint(amps, a, oa, b, ob);
    return e;
}

/// Polarizer angle alpha (radians) on the Bloch sphere: z-x plane at 2 alpha.
inline Axis polarizer(double alpha) { return {std::sin(2 * alpha), 0.0, std::cos(2 * alpha)}; }

}  // namespace oracle
