#include "fnls/profile.hpp"

#include <atomic>
#include <cmath>
#include <iostream>

#include "fnls/errors.hpp"
#include "fnls/linops.hpp"

namespace fnls {

namespace {

// Monomial weights of the cascade fields in the order
// {Q, S1, S2, S3, S4, G1, G2, F1, F2}.
std::array<Cplx, 9> monomials(double b, double v) {
    const Cplx I(0.0, 1.0);
    return {Cplx(1.0), I * b, Cplx(b * b), I * (b * b * b), Cplx(b * b * b * b),
            I * v, Cplx(v * v), Cplx(b * v), I * (b * b * v)};
}

void check_smallness(double b, double v) {
    const double m = std::max(std::abs(b), std::abs(v));
    if (m > 0.3) throw ValidationError("profile: |b|, |v| must stay below 0.3");
    static std::atomic<bool> warned{false};
    if (m > 0.1 && !warned.exchange(true))
        std::cerr << "[fnls] warning: profile evaluated at |b|,|v| = " << m
                  << ", beyond the asymptotic regime (warning shown once)\n";
}

double rel_inner(const Grid& g, const Vec& f, const Vec& q) {
    const double d = norm_l2(g, f) * norm_l2(g, q);
    return (d > 0) ? std::abs(inner(g, f, q)) / d : 0.0;
}

} // namespace

double weighted_sup(const Grid& g, const Vec& f, double power) {
    double s = 0;
    for (int j = 0; j < g.N; ++j)
        s = std::max(s, std::pow(1.0 + g.y[j] * g.y[j], 0.5 * power) * std::abs(f[j]));
    return s;
}

double weighted_sup(const Grid& g, const CVec& f, double power) {
    double s = 0;
    for (int j = 0; j < g.N; ++j)
        s = std::max(s, std::pow(1.0 + g.y[j] * g.y[j], 0.5 * power) * std::abs(f[j]));
    return s;
}

//------------------------------------------------------------------------------
// build_profiles
//------------------------------------------------------------------------------
ProfileSet build_profiles(const Spectral& sp, const GroundState& gs, double tol) {
    const Grid& g = sp.grid();
    const double b = gs.beta;
    auto spp = std::make_shared<Spectral>(sp.grid_ptr());
    LinOp Lp = LinOp::make(spp, OpKind::Lplus, gs);
    LinOp Lm = LinOp::make(spp, OpKind::Lminus, gs);

    ProfileSet ps;
    ps.beta = b;
    ps.grid = sp.grid_ptr();
    ps.q = gs.q;
    const Vec& q = ps.q;
    Vec qp = sp.deriv(q);
    Vec q2b1 = q.pow(2.0 * b - 1.0);
    Vec q2b2 = q.pow(2.0 * b - 2.0);

    auto solve = [&](LinOp& op, const Vec& rhs, const Vec& kernel, Parity parity) -> Vec {
        SolveStats st;
        Vec x = solve_deflated(op, rhs, {kernel}, tol, 6000, &st);
        ps.solve_stats.push_back(st);
        x = (parity == Parity::Even) ? even_part(x) : odd_part(x);
        return sp.clip_spectrum(x, 1e-13);
    };

    // O(b):   L- S1 = LQ
    Vec rhs = sp.lambda(q);
    ps.S1 = solve(Lm, rhs, q, Parity::Even);

    // O(v):   L- G1 = -Q'
    rhs = -qp;
    ps.G1 = solve(Lm, rhs, q, Parity::Odd);

    // O(bv):  L+ F1 = G1 - L G1 + S1' + 2b S1 G1 Q^{2b-1}; the condition
    // (rhs, Q') = 0 is the one the commutator identities supply.
    rhs = ps.G1 - sp.lambda(ps.G1) + sp.deriv(ps.S1) + 2.0 * b * ps.S1 * ps.G1 * q2b1;
    ps.solvability_residuals[0] = rel_inner(g, rhs, qp);
    ps.F1 = solve(Lp, rhs, qp, Parity::Odd);

    // O(b^2): L+ S2 = -L S1 + b S1^2 Q^{2b-1}
    rhs = -sp.lambda(ps.S1) + b * ps.S1.square() * q2b1;
    ps.solvability_residuals[1] = rel_inner(g, rhs, qp);
    ps.S2 = solve(Lp, rhs, qp, Parity::Even);

    // O(v^2): L+ G2 = G1' + b G1^2 Q^{2b-1}
    rhs = sp.deriv(ps.G1) + b * ps.G1.square() * q2b1;
    ps.solvability_residuals[2] = rel_inner(g, rhs, qp);
    ps.G2 = solve(Lp, rhs, qp, Parity::Even);

    // O(b^3): L- S3 = L S2 + 2b S1 S2 Q^{2b-1} + b S1^3 Q^{2b-2}
    rhs = sp.lambda(ps.S2) + 2.0 * b * ps.S1 * ps.S2 * q2b1 + b * ps.S1.cube() * q2b2;
    ps.S3 = solve(Lm, rhs, q, Parity::Even);

    // O(b^4): L+ S4 = -L S3 + b Q^{2b-2}(2 Q S2 + S1^2) S2 + H Q.
    // H comes from the b^4 Taylor coefficient of |W|^{2b}; the printed variant
    // with the beta^3(beta-1) coefficient is kept for comparison only.
    Vec w2 = 2.0 * q * ps.S2 + ps.S1.square();
    Vec H = b * q2b2 * (ps.S2.square() + 2.0 * ps.S1 * ps.S3) +
            0.5 * b * (b - 1.0) * q.pow(2.0 * b - 4.0) * w2.square();
    Vec H_printed = b * q2b2 * (ps.S2.square() + 2.0 * ps.S1 * ps.S3) +
                    b * b * b * (b - 1.0) * q.pow(2.0 * b - 4.0) *
                        (2.0 * q * ps.S2 + ps.S1).square();
    {
        const double nh = norm_l2(g, H);
        ps.h_variant_gap = (nh > 0) ? norm_l2(g, Vec(H_printed - H)) / nh : 0.0;
    }
    rhs = -sp.lambda(ps.S3) + b * q2b2 * w2 * ps.S2 + H * q;
    ps.solvability_residuals[3] = rel_inner(g, rhs, qp);
    ps.S4 = solve(Lp, rhs, qp, Parity::Even);

    // O(b^2 v): L- F2 = L F1 - S2' - F1
    //           + b Q^{2b-2} [ (2 Q S2 + S1^2) G1 + 2 (Q F1 + S1 G1) S1 ]
    rhs = sp.lambda(ps.F1) - sp.deriv(ps.S2) - ps.F1 +
          b * q2b2 * (w2 * ps.G1 + 2.0 * (q * ps.F1 + ps.S1 * ps.G1) * ps.S1);
    ps.solvability_residuals[4] = rel_inner(g, rhs, q);
    ps.F2 = solve(Lm, rhs, q, Parity::Odd);

    // Energy expansion coefficient, both expressions in circulation.
    ps.c0 = inner(g, Lm.apply(ps.G1), ps.G1);
    ps.c0_gradq = inner(g, Lm.apply(qp), qp);

    // Finite-difference oracle for the b^4 coefficient of |W|^{2b} at v = 0:
    // c4 = [g(2e) - 4 g(e) + 3 g(0)] / (12 e^4) on the even series g(b).
    {
        auto pow_abs2b = [&](double bb) -> Vec {
            Vec sig = q + bb * bb * ps.S2 + bb * bb * bb * bb * ps.S4;
            Vec tht = bb * ps.S1 + bb * bb * bb * ps.S3;
            return (sig.square() + tht.square()).pow(b);
        };
        const double e = 0.02;
        Vec c4_fd = (pow_abs2b(2 * e) - 4.0 * pow_abs2b(e) + 3.0 * pow_abs2b(0)) / (12.0 * e * e * e * e);
        Vec c4_an = b * q2b2 * (ps.S2.square() + 2.0 * q * ps.S4 + 2.0 * ps.S1 * ps.S3) +
                    0.5 * b * (b - 1.0) * q.pow(2.0 * b - 4.0) * w2.square();
        ps.h_taylor_oracle_gap = norm_l2(g, Vec(c4_fd - c4_an)) / std::max(norm_l2(g, c4_an), 1e-300);
    }

    // Caches for the compensated residual.
    ps.fields = {q, ps.S1, ps.S2, ps.S3, ps.S4, ps.G1, ps.G2, ps.F1, ps.F2};
    for (int a = 0; a < 9; ++a) {
        ps.Dfields[a] = sp.frac(ps.fields[a], b);
        ps.Lfields[a] = sp.lambda(ps.fields[a]);
        ps.Gfields[a] = sp.deriv(ps.fields[a]);
    }
    Vec q2b = q.pow(2.0 * b);
    ps.nl_taylor[0] = q2b * q;                                    // 1
    ps.nl_taylor[1] = q2b * ps.S1;                                // i b
    ps.nl_taylor[2] = q2b * ps.S2 + b * q2b1 * w2;                // b^2
    ps.nl_taylor[3] = q2b * ps.S3 + b * q2b2 * w2 * ps.S1;        // i b^3
    ps.nl_taylor[4] = q2b * ps.S4 + b * q2b2 * w2 * ps.S2 +
                      (b * q2b2 * (ps.S2.square() + 2.0 * q * ps.S4 + 2.0 * ps.S1 * ps.S3) +
                       0.5 * b * (b - 1.0) * q.pow(2.0 * b - 4.0) * w2.square()) * q; // b^4
    ps.nl_taylor[5] = q2b * ps.G1;                                // i v
    ps.nl_taylor[6] = q2b * ps.G2 + b * q2b1 * (2.0 * q * ps.G2 + ps.G1.square()); // v^2
    ps.nl_taylor[7] = q2b * ps.F1 + 2.0 * b * q2b1 * (q * ps.F1 + ps.S1 * ps.G1);  // b v
    ps.nl_taylor[8] = q2b * ps.F2 +
                      b * q2b2 * (w2 * ps.G1 + 2.0 * (q * ps.F1 + ps.S1 * ps.G1) * ps.S1); // i b^2 v

    ps.psi_baseline = CVec::Zero(g.N);
    PsiResult base = residual_Psi(ps, 0.0, 0.0, sp);
    ps.psi_baseline = base.psi;
    ps.psi_baseline_l2 = base.l2;
    return ps;
}

//------------------------------------------------------------------------------
// Assembly
//------------------------------------------------------------------------------
CVec assemble_W(const ProfileSet& ps, double b, double v) {
    check_smallness(b, v);
    const auto m = monomials(b, v);
    CVec w = CVec::Zero(ps.grid->N);
    for (int a = 0; a < 9; ++a) w += m[a] * ps.fields[a].cast<Cplx>();
    return w;
}

CVec assemble_dbW(const ProfileSet& ps, double b, double v) {
    const Cplx I(0.0, 1.0);
    const std::array<Cplx, 9> dm = {Cplx(0.0), I,        Cplx(2 * b), I * (3 * b * b),
                                    Cplx(4 * b * b * b), Cplx(0.0),   Cplx(0.0),
                                    Cplx(v),             I * (2 * b * v)};
    CVec w = CVec::Zero(ps.grid->N);
    for (int a = 0; a < 9; ++a) w += dm[a] * ps.fields[a].cast<Cplx>();
    return w;
}

CVec assemble_dvW(const ProfileSet& ps, double b, double v) {
    const Cplx I(0.0, 1.0);
    const std::array<Cplx, 9> dm = {Cplx(0.0), Cplx(0.0), Cplx(0.0), Cplx(0.0), Cplx(0.0),
                                    I,         Cplx(2 * v), Cplx(b),  I * (b * b)};
    CVec w = CVec::Zero(ps.grid->N);
    for (int a = 0; a < 9; ++a) w += dm[a] * ps.fields[a].cast<Cplx>();
    return w;
}

//------------------------------------------------------------------------------
// Compensated residual
//------------------------------------------------------------------------------
PsiResult residual_Psi(const ProfileSet& ps, double b, double v, const Spectral& sp) {
    check_smallness(b, v);
    const Grid& g = *ps.grid;
    const int N = g.N;
    const Cplx I(0.0, 1.0);
    const auto m = monomials(b, v);

    CVec acc = CVec::Zero(N);
    for (int a = 0; a < 9; ++a) {
        const Cplx cL = I * b * m[a];   // J b Lambda W
        const Cplx cG = -I * v * m[a];  // -J v W'
        const Cplx cD = -m[a];          // -(|D|^b + 1) W
        acc += cL * ps.Lfields[a].cast<Cplx>() + cG * ps.Gfields[a].cast<Cplx>() +
               cD * (ps.Dfields[a] + ps.fields[a]).cast<Cplx>();
    }
    // -J b v dW/dv, with dW/dv = i G1 + 2v G2 + b F1 + i b^2 F2
    acc += (b * v) * ps.fields[5].cast<Cplx>();
    acc += (-I * 2.0 * b * v * v) * ps.fields[6].cast<Cplx>();
    acc += (-I * b * b * v) * ps.fields[7].cast<Cplx>();
    acc += (b * b * b * v) * ps.fields[8].cast<Cplx>();

    // Retained Taylor polynomial of the nonlinearity.
    for (int a = 0; a < 9; ++a) acc += m[a] * ps.nl_taylor[a].cast<Cplx>();

    // Extended-precision pointwise remainder of |W|^{2b} W.
    const long double bb = b, vv = v;
    const long double b2 = bb * bb, b3 = b2 * bb, b4 = b2 * b2, v2 = vv * vv;
    CVec rem(N);
    for (int j = 0; j < N; ++j) {
        const long double wr = (long double)ps.fields[0][j] + b2 * ps.fields[2][j] +
                               b4 * ps.fields[4][j] + v2 * ps.fields[6][j] +
                               bb * vv * ps.fields[7][j];
        const long double wi = bb * ps.fields[1][j] + b3 * ps.fields[3][j] +
                               vv * ps.fields[5][j] + b2 * vv * ps.fields[8][j];
        const long double amp = powl(wr * wr + wi * wi, (long double)ps.beta);
        const long double pr = (long double)ps.nl_taylor[0][j] + b2 * ps.nl_taylor[2][j] +
                               b4 * ps.nl_taylor[4][j] + v2 * ps.nl_taylor[6][j] +
                               bb * vv * ps.nl_taylor[7][j];
        const long double pi = bb * ps.nl_taylor[1][j] + b3 * ps.nl_taylor[3][j] +
                               vv * ps.nl_taylor[5][j] + b2 * vv * ps.nl_taylor[8][j];
        rem[j] = Cplx(static_cast<double>(amp * wr - pr), static_cast<double>(amp * wi - pi));
    }
    acc += rem;

    PsiResult out;
    out.psi = -acc;
    out.l2 = norm_l2(g, out.psi);
    CVec dpsi = sp.deriv(out.psi);
    out.h1 = std::sqrt(out.l2 * out.l2 + g.h * dpsi.abs2().sum());
    out.wsup = weighted_sup(g, out.psi, 1.0 + ps.beta);
    out.l2_debiased = (ps.psi_baseline.size() == N)
                          ? norm_l2(g, CVec(out.psi - ps.psi_baseline))
                          : out.l2;
    return out;
}

CVec residual_Psi_direct(const ProfileSet& ps, double b, double v, const Spectral& sp) {
    const Grid& g = *ps.grid;
    const Cplx I(0.0, 1.0);
    CVec W = assemble_W(ps, b, v);
    CVec dvW = assemble_dvW(ps, b, v);

    // |W|^{2b} W with zero-padding dealiasing: the power is not polynomial,
    // but padding suppresses the dominant aliased band of the product. The
    // factor 4 keeps grids power-of-two while exceeding the 3/2 rule.
    const int pad = 4;
    CVec Wf = sp.upsample(W, pad);
    CVec nlf(Wf.size());
    for (Eigen::Index j = 0; j < Wf.size(); ++j)
        nlf[j] = std::pow(std::norm(Wf[j]), ps.beta) * Wf[j];
    // decimate back by spectral truncation
    {
        auto gf = make_grid(g.L, g.N * pad);
        Spectral spf(gf);
        spf.fft(nlf);
        CVec hat = CVec::Zero(g.N);
        for (int mm = 0; mm < g.N / 2; ++mm) hat[mm] = nlf[mm];
        for (int mm = g.N / 2 + 1; mm < g.N; ++mm) hat[mm] = nlf[g.N * pad - g.N + mm];
        hat *= 1.0 / pad; // forward transform gained a factor of pad in length
        CVec nl = hat;
        sp.ifft(nl);
        nlf = nl;
    }
    CVec psi = I * b * sp.lambda(W) - I * v * sp.deriv(W) - I * (b * v) * dvW -
               sp.frac(W, ps.beta) - W + nlf;
    return CVec(-psi);
}

//------------------------------------------------------------------------------
// Energy expansion and identities
//------------------------------------------------------------------------------
EnergyExpansion energy_expansion(const ProfileSet& ps, const Spectral& sp,
                                 const std::vector<double>& v_list) {
    EnergyExpansion out;
    out.c0_formula = ps.c0;
    out.c0_gradq = ps.c0_gradq;
    const double e0 = ps.beta * functionals(sp, assemble_W(ps, 0.0, 0.0), ps.beta).energy;
    // fit beta E = c0 v^2 + c3 v^3 by least squares on the debiased samples
    double a11 = 0, a12 = 0, a22 = 0, r1 = 0, r2 = 0;
    for (double v : v_list) {
        const double e = ps.beta * functionals(sp, assemble_W(ps, 0.0, v), ps.beta).energy - e0;
        out.samples.emplace_back(v, e);
        const double x1 = v * v, x2 = v * v * v;
        a11 += x1 * x1; a12 += x1 * x2; a22 += x2 * x2;
        r1 += x1 * e; r2 += x2 * e;
    }
    const double det = a11 * a22 - a12 * a12;
    out.c0_fit = (det != 0) ? (a22 * r1 - a12 * r2) / det : 0.0;
    return out;
}

double scaling_invariance_check(const ProfileSet& ps, double b, double v, const Spectral& sp) {
    const Grid& g = *ps.grid;
    const Cplx I(0.0, 1.0);
    const double beta = ps.beta;
    CVec W = assemble_W(ps, b, v);
    CVec dvW = assemble_dvW(ps, b, v);
    CVec LW = sp.lambda(W);
    CVec GW = sp.deriv(W);
    CVec psi = residual_Psi(ps, b, v, sp).psi;

    Vec a2b = (W.abs2()).pow(beta);           // |W|^{2b}
    Vec a2b2 = (W.abs2()).pow(beta - 1.0);    // |W|^{2b-2}
    Vec re_wlw = (W.real() * LW.real() + W.imag() * LW.imag());
    CVec lhs = sp.frac(LW, beta) + LW - a2b.cast<Cplx>() * LW -
               2.0 * beta * a2b2.cast<Cplx>() * re_wlw.cast<Cplx>() * W;

    // Right side from differentiating the dilation family at lambda = 1:
    // beta (Omega - W) + L Omega with Omega = Psi + Jb LW - Jv W' - Jbv dvW.
    CVec rhs = beta * (psi + I * b * LW - I * v * GW - I * (b * v) * dvW - W) + sp.lambda(psi) +
               I * b * sp.lambda(LW) - I * v * sp.lambda(GW) - I * (b * v) * sp.lambda(dvW);

    const double scale = std::max(norm_l2(g, lhs), norm_l2(g, rhs));
    return (scale > 0) ? norm_l2(g, CVec(lhs - rhs)) / scale : 0.0;
}

VirialPairing virial_pairing(const ProfileSet& ps, const Spectral& sp) {
    const Grid& g = *ps.grid;
    VirialPairing out;
    out.predicted = -2.0 * inner(g, sp.lambda(ps.q), ps.S1); // -2 (L- S1, S1)
    // fit Phi(W_{b,0}) = a b + c b^3
    double a11 = 0, a12 = 0, a22 = 0, r1 = 0, r2 = 0;
    for (double b : {0.01, 0.02, 0.04}) {
        CVec W = assemble_W(ps, b, 0.0);
        CVec Wp = sp.deriv(W);
        const double phi = g.h * (g.y * (Wp * W.conjugate()).imag()).sum();
        const double x1 = b, x2 = b * b * b;
        a11 += x1 * x1; a12 += x1 * x2; a22 += x2 * x2;
        r1 += x1 * phi; r2 += x2 * phi;
    }
    const double det = a11 * a22 - a12 * a12;
    out.fitted = (det != 0) ? (a22 * r1 - a12 * r2) / det : 0.0;
    return out;
}

//------------------------------------------------------------------------------
// Scaling-law fits
//------------------------------------------------------------------------------
namespace {

SlopeFit fit_powerlaw(std::vector<std::pair<double, double>> samples) {
    SlopeFit out;
    out.samples = samples;
    // plain log-log least squares
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = static_cast<int>(samples.size());
    for (auto& [x, yv] : samples) {
        const double X = std::log(x), Y = std::log(std::max(yv, 1e-300));
        sx += X; sy += Y; sxx += X * X; sxy += X * Y;
    }
    out.slope_plain = (n * sxy - sx * sy) / (n * sxx - sx * sx);

    // floor-aware model y = sqrt((c x^p)^2 + f^2), fitted in log space by
    // Nelder-Mead on (log c, p, log f); the dynamic range of the samples spans
    // many decades, so everything stays logarithmic.
    auto objective = [&](const Eigen::Vector3d& q) {
        double ss = 0;
        for (auto& [x, yv] : samples) {
            const double s = q[0] + q[1] * std::log(x); // log(c x^p)
            const double m = 0.5 * std::log(std::exp(2.0 * s) + std::exp(2.0 * q[2]));
            const double d = std::log(std::max(yv, 1e-300)) - m;
            ss += d * d;
        }
        return ss;
    };
    const auto& top = samples.back();
    const auto& bot = samples.front();
    Eigen::Vector3d p0;
    p0[1] = out.slope_plain;
    p0[0] = std::log(std::max(top.second, 1e-300)) - p0[1] * std::log(top.first);
    p0[2] = std::log(std::max(0.8 * bot.second, 1e-300));
    std::array<Eigen::Vector3d, 4> simplex;
    std::array<double, 4> fv;
    simplex[0] = p0;
    for (int i = 1; i < 4; ++i) {
        simplex[i] = p0;
        simplex[i][i - 1] += (i == 2) ? 0.5 : 1.0;
    }
    for (int i = 0; i < 4; ++i) fv[i] = objective(simplex[i]);
    for (int it = 0; it < 600; ++it) {
        // order
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b)
                if (fv[b] < fv[a]) {
                    std::swap(fv[a], fv[b]);
                    std::swap(simplex[a], simplex[b]);
                }
        if (fv[3] - fv[0] < 1e-14) break;
        Eigen::Vector3d centroid = (simplex[0] + simplex[1] + simplex[2]) / 3.0;
        Eigen::Vector3d refl = centroid + (centroid - simplex[3]);
        double fr = objective(refl);
        if (fr < fv[0]) {
            Eigen::Vector3d expd = centroid + 2.0 * (centroid - simplex[3]);
            double fe = objective(expd);
            if (fe < fr) { simplex[3] = expd; fv[3] = fe; }
            else { simplex[3] = refl; fv[3] = fr; }
        } else if (fr < fv[2]) {
            simplex[3] = refl; fv[3] = fr;
        } else {
            Eigen::Vector3d contr = centroid + 0.5 * (simplex[3] - centroid);
            double fc = objective(contr);
            if (fc < fv[3]) { simplex[3] = contr; fv[3] = fc; }
            else
                for (int i = 1; i < 4; ++i) {
                    simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0]);
                    fv[i] = objective(simplex[i]);
                }
        }
    }
    out.slope = simplex[0][1];
    out.coeff = std::exp(simplex[0][0]);
    out.floor = std::exp(simplex[0][2]);
    return out;
}

} // namespace

SlopeFit psi_slope_b(const ProfileSet& ps, const Spectral& sp, const std::vector<double>& bs) {
    std::vector<std::pair<double, double>> samples;
    for (double b : bs) samples.emplace_back(b, residual_Psi(ps, b, 0.0, sp).l2_debiased);
    return fit_powerlaw(std::move(samples));
}

SlopeFit psi_slope_v(const ProfileSet& ps, const Spectral& sp, const std::vector<double>& vs) {
    std::vector<std::pair<double, double>> samples;
    for (double v : vs) samples.emplace_back(v, residual_Psi(ps, 0.0, v, sp).l2_debiased);
    return fit_powerlaw(std::move(samples));
}

} // namespace fnls
