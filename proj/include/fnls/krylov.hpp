//==============================================================================
// krylov.hpp
// Matrix-free symmetric solvers on grid functions:
//   - preconditioned MINRES (symmetric, possibly indefinite),
//   - preconditioned CG (SPD forms),
//   - a deflation wrapper that pins solves to the orthogonal complement of an
//     explicit kernel (rhs and every iterate get projected off it).
// The preconditioner must be SPD; (|D|^b + shift)^{-1} is the workhorse here.
//==============================================================================
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "fnls/grid.hpp"

namespace fnls {

struct SolveStats {
    double rel_residual = 0.0;  // ||A x - b|| / ||b||, recomputed at exit
    int    iterations = 0;
    bool   converged = false;
    double rhs_kernel_fraction = 0.0; // ||b - P b|| / ||b|| before deflation
};

using ApplyFn = std::function<Vec(const Vec&)>;

//------------------------------------------------------------------------------
// Preconditioned MINRES, transcribed from Paige & Saunders. Solves A x = b for
// symmetric A given an SPD preconditioner M^{-1}. Inner products use the grid
// quadrature weight, which rescales nothing (MINRES is scale invariant).
//------------------------------------------------------------------------------
inline Vec minres(const Grid& g, const ApplyFn& A, const ApplyFn& Minv, const Vec& b,
                  double tol, int max_iter, SolveStats* stats = nullptr) {
    const auto dot = [&g](const Vec& u, const Vec& v) { return inner(g, u, v); };

    Vec x = Vec::Zero(g.N);
    Vec r1 = b;
    Vec y = Minv(b);
    double beta1 = dot(b, y);
    if (beta1 <= 0.0) {
        if (stats) *stats = SolveStats{0.0, 0, true, 0.0};
        return x;
    }
    beta1 = std::sqrt(beta1);

    double oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0;
    double phibar = beta1, cs = -1.0, sn = 0.0, oldeps = 0.0;
    Vec r2 = r1;
    Vec w = Vec::Zero(g.N), w2 = Vec::Zero(g.N);

    const double norm_b = norm_l2(g, b);
    int it = 0;
    for (it = 1; it <= max_iter; ++it) {
        Vec v = y / beta;
        y = A(v);
        if (it >= 2) y -= (beta / oldb) * r1;
        const double alfa = dot(v, y);
        y -= (alfa / beta) * r2;
        r1 = r2;
        r2 = y;
        y = Minv(r2);
        oldb = beta;
        double beta2 = dot(r2, y);
        if (beta2 < 0.0) beta2 = 0.0; // roundoff guard; M is SPD
        beta = std::sqrt(beta2);

        oldeps = epsln;
        const double delta = cs * dbar + sn * alfa;
        const double gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        double gamma = std::sqrt(gbar * gbar + beta * beta);
        gamma = std::max(gamma, 1e-300);
        cs = gbar / gamma;
        sn = beta / gamma;
        const double phi = cs * phibar;
        phibar = sn * phibar;

        Vec w1 = w2;
        w2 = w;
        w = (v - oldeps * w1 - delta * w2) / gamma;
        x += phi * w;

        if (phibar <= tol * beta1) break;
    }
    if (stats) {
        Vec r = A(x) - b;
        stats->rel_residual = (norm_b > 0) ? norm_l2(g, r) / norm_b : norm_l2(g, r);
        stats->iterations = std::min(it, max_iter);
        stats->converged = stats->rel_residual <= 10.0 * tol;
    }
    return x;
}

//------------------------------------------------------------------------------
// Preconditioned CG for SPD operators.
//------------------------------------------------------------------------------
inline Vec pcg(const Grid& g, const ApplyFn& A, const ApplyFn& Minv, const Vec& b,
               double tol, int max_iter, SolveStats* stats = nullptr) {
    const auto dot = [&g](const Vec& u, const Vec& v) { return inner(g, u, v); };
    Vec x = Vec::Zero(g.N);
    Vec r = b;
    Vec z = Minv(r);
    Vec p = z;
    double rz = dot(r, z);
    const double norm_b = norm_l2(g, b);
    int it = 0;
    for (it = 1; it <= max_iter; ++it) {
        Vec Ap = A(p);
        const double alpha = rz / dot(p, Ap);
        x += alpha * p;
        r -= alpha * Ap;
        if (norm_l2(g, r) <= tol * norm_b) break;
        z = Minv(r);
        const double rz_new = dot(r, z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    if (stats) {
        Vec res = A(x) - b;
        stats->rel_residual = (norm_b > 0) ? norm_l2(g, res) / norm_b : norm_l2(g, res);
        stats->iterations = std::min(it, max_iter);
        stats->converged = stats->rel_residual <= 10.0 * tol;
    }
    return x;
}

//------------------------------------------------------------------------------
// Deflation: Gram-Schmidt the kernel once, then run MINRES on P A P with both
// rhs and iterates pinned to the complement. Returns x with x _|_ kernel.
//------------------------------------------------------------------------------
inline std::vector<Vec> orthonormalize(const Grid& g, const std::vector<Vec>& vs) {
    std::vector<Vec> out;
    for (const Vec& v0 : vs) {
        Vec v = v0;
        for (const Vec& u : out) v -= inner(g, u, v) * u;
        const double n = norm_l2(g, v);
        if (n > 1e-14) out.push_back(v / n);
    }
    return out;
}

inline Vec project_off(const Grid& g, const std::vector<Vec>& onb, const Vec& v) {
    Vec r = v;
    for (const Vec& u : onb) r -= inner(g, u, r) * u;
    return r;
}

inline Vec minres_deflated(const Grid& g, const ApplyFn& A, const ApplyFn& Minv, const Vec& b,
                           const std::vector<Vec>& kernel, double tol, int max_iter,
                           SolveStats* stats = nullptr) {
    const std::vector<Vec> onb = orthonormalize(g, kernel);
    Vec bp = project_off(g, onb, b);
    const double nb = norm_l2(g, b);
    const double frac = (nb > 0) ? norm_l2(g, Vec(b - bp)) / nb : 0.0;
    ApplyFn Ap = [&](const Vec& v) { return project_off(g, onb, A(project_off(g, onb, v))); };
    SolveStats st;
    Vec x = minres(g, Ap, Minv, bp, tol, max_iter, &st);
    x = project_off(g, onb, x);
    if (stats) {
        *stats = st;
        stats->rhs_kernel_fraction = frac;
    }
    return x;
}

} // namespace fnls
