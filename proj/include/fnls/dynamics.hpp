//==============================================================================
// dynamics.hpp
// Time evolution of i u_t - |D|^b u + |u|^{2b} u = 0 by Strang splitting
// (exact linear flow in Fourier space, pointwise nonlinear phase rotation),
// the windowed virial functional, the modulation decomposition
//   u(x) = lambda^{-1/2} [W_{b,v} + eps]((x - x0)/lambda) e^{i gamma}
// pinned by the five orthogonality conditions (Newton with the analytic
// Jacobian), and the blow-up driver with its trace diagnostics.
//==============================================================================
#pragma once

#include <array>
#include <string>
#include <vector>

#include "fnls/grid.hpp"
#include "fnls/profile.hpp"

namespace fnls {

// One Strang step: exp(-i|D|^b dt/2), u <- u exp(i |u|^{2b} dt), exp(-i|D|^b dt/2).
// Mass is conserved to roundoff by construction. Throws NumericalError past
// the amplitude cutoff.
CVec step(const Spectral& sp, const CVec& u, double dt, double beta,
          double amplitude_cutoff = 1e6);

// Weight equal to y on [-L/2, L/2], ramped smoothly (C^2) to zero at the box
// edge; the virial functional Im int w(y) u_y conj(u).
Vec virial_weight(const Grid& g);
double virial_phi(const Spectral& sp, const CVec& u);
// Mass fraction beyond |y| > L/2 (window-contamination check).
double window_tail_mass(const Grid& g, const CVec& u);

//------------------------------------------------------------------------------
// Modulation decomposition
//------------------------------------------------------------------------------
struct ModulationState {
    double b = 0, lambda = 1, x = 0, v = 0, gamma = 0;
    CVec epsilon;                                // on the profile grid
    std::array<double, 5> orth_residuals{};     // relative to ||eps|| * scale
    double eps_l2 = 0;
    bool converged = false;
    int newton_iterations = 0;
};

ModulationState decompose(const Spectral& sp, const ProfileSet& ps, const CVec& u,
                          const ModulationState& guess, int max_newton = 25);

// lambda^{-1/2} [W_{b,v} + eps]((x - x0)/lambda) e^{i gamma} sampled on the grid.
CVec reconstruct(const Spectral& sp, const ProfileSet& ps, const ModulationState& ms);

//------------------------------------------------------------------------------
// Blow-up runs
//------------------------------------------------------------------------------
struct TraceFrame {
    double t = 0, s = 0;
    double lambda = 1, b = 0, v = 0, x = 0, gamma = 0;
    double mass = 0, energy = 0, momentum = 0;
    double hhalf = 0;            // ||D|^{b/2} u||_L2
    double sup = 0;
    double phi = 0;              // windowed virial
    double eps_l2 = 0;
    double orth_max = 0;
    bool modulated = false;
};

struct EvolveConfig {
    double dt0 = 1e-3;          // rescaled step: dt = dt0 * lambda^b
    double t_max = 1e9;
    double lambda_min = 1e-3;
    int    refit_every = 10;
    double transient_s = 3.0;   // sign-change bookkeeping starts here
    double amplitude_cutoff = 1e6;
    double tail_threshold = 1e-6;
    bool   modulation = true;
};

struct EvolutionTrace {
    std::vector<TraceFrame> frames;
    std::string termination;    // lambda_min | t_max | under_resolved | amplitude_cutoff
    double T_estimate = 0;      // linear extrapolation of lambda^b to zero
    int    b_sign_changes = 0;  // after the transient window
    double s_last_sign_change = 0;
    bool   b_positive_after = true;
    bool   lambda_halving_ok = true; // lambda(s1) > lambda(s2)/2 on the post-s0 window
    double growth_exponent = 0;      // ||D^{b/2}u|| ~ (T-t)^{-e}
    double lower_bound_min = 0;      // min of ||D^{b/2}u|| (T-t)^{b/4} on the tail
    // fitted prefactor of the rate-bound shape sqrt(|log(T-t)|^{1/8}/(T-t))
    double upper_bound_cstar = 0;
    std::vector<double> b_sign_change_s;
    std::vector<double> lambda_halving_s;
    double mass_drift_per_time = 0;
    double energy_drift_per_time = 0;
};

EvolutionTrace run_blowup(const Spectral& sp, const ProfileSet& ps, const CVec& u0, double beta,
                          const EvolveConfig& cfg);

// Least-squares d Phi / dt over the frames with t in [t0, t1].
double virial_slope(const EvolutionTrace& trace, double t0, double t1);

} // namespace fnls
