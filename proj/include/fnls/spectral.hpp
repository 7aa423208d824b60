//==============================================================================
// spectral.hpp
// Numerical certification of the spectral property: the constrained Rayleigh
// minimum delta of H(e,e) = (C1 e1, e1) + (C2 e2, e2) against the weighted
// form B(e,e) = int ||D|^{b/2} e|^2 + int |e|^2 exp(-|y|) under
//   (e1, Q) = (e1, G1) = (e2, LQ) = (e2, L^2 Q) = 0,
// parity-resolved negative-eigenvalue counts of the split operators Hb1/Hb2,
// the three positivity quantities q1..q3 behind the index argument, and the
// Hardy-type constant pairing the polynomial and exponential weights.
//==============================================================================
#pragma once

#include "fnls/ground.hpp"
#include "fnls/grid.hpp"
#include "fnls/linops.hpp"

namespace fnls {

struct DeltaReport {
    double delta = 0;       // min over the four (component, parity) sectors
    double e1_even = 0, e1_odd = 0, e2_even = 0, e2_odd = 0;
    double certificate_gap = 0;    // max |quotient(minimizer) - eigenvalue|
    double constraint_residual = 0; // max relative overlap of minimizers with constraints
    int    n_reduced = 0;
    Vec    minimizer_e1, minimizer_e2; // reduced-grid minimizer components
};

// G1 is the odd profile function entering the constraint set; pass it from
// the ProfileSet built at the same beta and grid.
DeltaReport spectral_delta(const Spectral& sp, const GroundState& gs, const Vec& G1,
                           int n_reduced = 2048);

struct IndexReport {
    // negative-eigenvalue counts (even, odd) of Hb1 and Hb2, keeping only
    // eigenfunctions localized in |y| <= L/4: a periodic box also carries a
    // cluster of shallow spread modes at the edge of the would-be continuum
    // (depth O(1/L)) that are not spectrum of the whole-line operator.
    int hbar1_even = 0, hbar1_odd = 0, hbar2_even = 0, hbar2_odd = 0;
    int raw1_even = 0, raw1_odd = 0, raw2_even = 0, raw2_odd = 0; // unfiltered
    bool stable = true; // filtered counts agree between n_reduced and 2 n_reduced
};
IndexReport index_counts(const Spectral& sp, const GroundState& gs, int n_reduced = 1024);

struct PhiReport {
    double q1 = 0, q2 = 0, q3 = 0;
    double h1_QQ = 0, h1_QyQy = 0, h2_QQ = 0; // the Hb(., .) values in the formulas
    SolveStats phi1, phi2, phi3;
};
PhiReport phi_quantities(const Spectral& sp, const GroundState& gs, double tol = 1e-10);

// Largest generalized eigenvalue C of the pencil (poly-weight form, B form):
// the smallest constant with int |f|^2 (1+|y|)^{-b} <= C * B(f, f).
double hardy_constant(const Spectral& sp, double beta, double tol = 1e-9, int max_iter = 400,
                      int* iterations = nullptr);

// Quadratic form H(e, e) given the two virial operators (test/report helper).
double virial_form(const Grid& g, const LinOp& C1, const LinOp& C2, const CVec& eps);

} // namespace fnls
