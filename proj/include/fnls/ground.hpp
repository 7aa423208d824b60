//==============================================================================
// ground.hpp
// Ground state of |D|^b Q + Q - Q^{2b+1} = 0: stabilized Petviashvili
// iteration with a Newton polish, plus the variational diagnostics (sharp
// Gagliardo-Nirenberg constant, zero-energy identity, tail decay exponent).
//==============================================================================
#pragma once

#include "fnls/grid.hpp"

namespace fnls {

struct GroundState {
    double  beta = 0;
    GridPtr grid;
    Vec     q;                  // positive, even
    double  residual_norm = 0;  // ||eq(q)||_L2 / ||q||_L2
    double  mass = 0;
    double  energy = 0;
    double  gn_constant = 0;    // sharp C* evaluated on q
    double  decay_exponent = 0; // tail fit of -d log q / d log y
    bool    decay_reliable = false;
    bool    decay_algebraic = false;
    int     iterations = 0;
};

enum class GroundInit { Sech, Gaussian };

// Petviashvili iteration u <- M^gamma (|D|^b+1)^{-1} u^{2b+1} with the mass
// quotient M = ((|D|^b+1)u, u)/(u, u^{2b+1}) and gamma = (2b+1)/(2b), even
// part kept each step, followed by Newton steps once the basin is reached.
// Throws NumericalError on non-convergence or a sign-changing limit.
GroundState solve_ground_state(const Spectral& sp, double beta, double tol = 1e-11,
                               int max_iter = 4000, GroundInit init = GroundInit::Sech);

struct GnReport {
    double cstar;        // int q^{2b+2} / (||D^{b/2} q||^2 ||q||^{2b})
    double identity_gap; // |cstar * ||q||^{2b} / (b+1) - 1|
};
GnReport gn_sharp_constant(const Spectral& sp, const GroundState& gs);

// Gagliardo-Nirenberg quotient of an arbitrary field (for optimality tests).
double gn_quotient(const Spectral& sp, const Vec& f, double beta);

struct DecayFit {
    double exponent = 0;      // sign-flipped log-log slope over [L/4, L/2]
    bool   reliable = false;  // window values stayed above 1e-13
    bool   algebraic = false; // half-window fits agree within 25%
};
DecayFit decay_fit(const GroundState& gs);

// Equation residual field |D|^b q + q - |q|^{2b} q.
Vec ground_residual(const Spectral& sp, const Vec& q, double beta);

} // namespace fnls
