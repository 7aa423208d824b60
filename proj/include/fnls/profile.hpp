//==============================================================================
// profile.hpp
// The approximate blow-up profile
//   W_{b,v} = Q + b^2 S2 + b^4 S4 + v^2 G2 + bv F1
//           + i (b S1 + b^3 S3 + v G1 + b^2 v F2),
// built by the order-by-order cascade of kernel-deflated L+- solves, together
// with the residual
//   Psi = -( i b LW - i v W' - i b v dW/dv - |D|^b W - W + |W|^{2b} W )
// and its certification: solvability conditions, the b^5 / v^3 scaling law,
// the energy expansion coefficient c0, and the scaling-invariance identity.
//
// Psi is evaluated in a compensated form: the linear multipliers act on each
// cascade field separately (their transforms are precomputed on clipped
// spectra) and the nonlinearity enters as its retained Taylor polynomial plus
// a pointwise extended-precision remainder. This keeps the noise floor of
// ||Psi|| orders of magnitude below a direct evaluation, which the b^5 slope
// fit needs at the small end of the b range.
//==============================================================================
#pragma once

#include <array>
#include <vector>

#include "fnls/ground.hpp"
#include "fnls/grid.hpp"
#include "fnls/krylov.hpp"

namespace fnls {

struct ProfileSet {
    double  beta = 0;
    GridPtr grid;
    Vec     q;
    Vec     S1, S2, S3, S4; // even
    Vec     G1;             // odd
    Vec     G2;             // even
    Vec     F1, F2;         // odd
    double  c0 = 0;         // (L- G1, G1), the energy expansion coefficient
    double  c0_gradq = 0;   // (L- Q', Q'), the variant quoted in the virial step

    // Solvability inner products (relative): the bv, b^2, v^2, b^4 and b^2 v
    // conditions, in that order.
    std::array<double, 5> solvability_residuals{};
    std::vector<SolveStats> solve_stats; // per cascade solve, build order

    // O(b^4) potential bookkeeping: gap between the Taylor-derived H and the
    // variant printed with the beta^3(beta-1) coefficient, plus a finite-
    // difference oracle check of the analytic b^4 coefficient of |W|^{2b}.
    double h_variant_gap = 0;
    double h_taylor_oracle_gap = 0;

    // Cached per-field transforms for the compensated residual (build order:
    // Q, S1, S2, S3, S4, G1, G2, F1, F2).
    std::array<Vec, 9> fields;
    std::array<Vec, 9> Dfields;   // |D|^b field
    std::array<Vec, 9> Lfields;   // Lambda field
    std::array<Vec, 9> Gfields;   // d/dy field
    std::array<Vec, 9> nl_taylor; // Taylor coefficients of |W|^{2b} W
    CVec   psi_baseline;          // Psi(0,0), the ground-state defect field
    double psi_baseline_l2 = 0;
};

ProfileSet build_profiles(const Spectral& sp, const GroundState& gs, double tol = 1e-12);

// Warns above |b|,|v| = 0.1; rejects above 0.3.
CVec assemble_W(const ProfileSet& ps, double b, double v);
CVec assemble_dbW(const ProfileSet& ps, double b, double v);
CVec assemble_dvW(const ProfileSet& ps, double b, double v);

struct PsiResult {
    CVec   psi;
    double l2 = 0;
    double h1 = 0;
    double wsup = 0;        // || <y>^{1+b} Psi ||_inf
    double l2_debiased = 0; // || Psi(b,v) - Psi(0,0) ||, the b,v-driven part
};
PsiResult residual_Psi(const ProfileSet& ps, double b, double v, const Spectral& sp);

// Direct (uncompensated) evaluation with 3/2-rule dealiasing of the
// nonlinear term; cross-check path for moderate b, v.
CVec residual_Psi_direct(const ProfileSet& ps, double b, double v, const Spectral& sp);

struct EnergyExpansion {
    double c0_fit = 0;     // quadratic coefficient of beta E(W_{0,v})
    double c0_formula = 0; // (L- G1, G1)
    double c0_gradq = 0;   // (L- Q', Q')
    std::vector<std::pair<double, double>> samples; // (v, beta E)
};
EnergyExpansion energy_expansion(const ProfileSet& ps, const Spectral& sp,
                                 const std::vector<double>& v_list = {0.004, 0.008, 0.016, 0.032});

// Relative mismatch of the two sides of the scaling-invariance identity.
double scaling_invariance_check(const ProfileSet& ps, double b, double v, const Spectral& sp);

// Fitted linear-in-b coefficient of Im int y W' conj(W) at v = 0, and the
// predicted value -2 (L- S1, S1) = -2 (LQ, S1).
struct VirialPairing {
    double fitted = 0;
    double predicted = 0;
};
VirialPairing virial_pairing(const ProfileSet& ps, const Spectral& sp);

// Scaling-law fit of ||Psi|| against a parameter list. The floor-aware fit
// models log ||Psi|| = log sqrt((c x^p)^2 + f^2) and reports p; the plain
// unweighted log-log slope is kept alongside.
struct SlopeFit {
    double slope_plain = 0;
    double slope = 0;  // floor-aware exponent
    double coeff = 0;
    double floor = 0;
    std::vector<std::pair<double, double>> samples;
};
SlopeFit psi_slope_b(const ProfileSet& ps, const Spectral& sp, const std::vector<double>& bs);
SlopeFit psi_slope_v(const ProfileSet& ps, const Spectral& sp, const std::vector<double>& vs);

double weighted_sup(const Grid& g, const Vec& f, double power);
double weighted_sup(const Grid& g, const CVec& f, double power);

} // namespace fnls
