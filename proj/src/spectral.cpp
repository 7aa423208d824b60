#include "fnls/spectral.hpp"

#include <cmath>

#include "fnls/errors.hpp"
#include "fnls/krylov.hpp"

namespace fnls {

namespace {

Vec subsample(const Vec& f, int stride) {
    const int n = static_cast<int>(f.size()) / stride;
    Vec out(n);
    for (int j = 0; j < n; ++j) out[j] = f[j * stride];
    return out;
}

ApplyFn b_form_op(const Spectral& sp, double beta) {
    Vec w = (-sp.grid().y.abs()).exp();
    return [&sp, beta, w](const Vec& f) { return Vec(sp.frac(f, beta) + w * f); };
}

// Constrained smallest eigenvalue of the pencil (H, B) on the orthogonal
// complement of the constraint vectors, via a QR basis of the complement and
// a dense generalized symmetric-definite solve.
struct SectorMin {
    double value;
    Vec minimizer;        // grid function on the sector's grid
    double certificate;   // |quotient - value|
    double constraint;    // max relative overlap with the constraints
};

SectorMin constrained_min(const ParityBasis& basis, const Spectral& sp, const ApplyFn& H,
                          const ApplyFn& B, const std::vector<Vec>& constraints) {
    const int n = basis.dim();
    Eigen::MatrixXd Hm = sector_matrix(basis, H);
    Eigen::MatrixXd Bm = sector_matrix(basis, B);

    Eigen::MatrixXd Z;
    if (constraints.empty()) {
        Z = Eigen::MatrixXd::Identity(n, n);
    } else {
        Eigen::MatrixXd C(n, static_cast<int>(constraints.size()));
        for (int i = 0; i < C.cols(); ++i) C.col(i) = basis.from_grid(constraints[i]);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(C);
        Eigen::MatrixXd Qfull = qr.householderQ();
        Z = Qfull.rightCols(n - C.cols());
    }
    Eigen::MatrixXd Hz = Z.transpose() * Hm * Z;
    Eigen::MatrixXd Bz = Z.transpose() * Bm * Z;
    Hz = 0.5 * (Hz + Hz.transpose());
    Bz = 0.5 * (Bz + Bz.transpose());
    SymEig eig = sym_gen_eig(Hz, Bz);

    SectorMin out{};
    out.value = eig.values[0];
    Eigen::VectorXd x = Z * eig.vectors.col(0);
    const double quot = (x.dot(Hm * x)) / (x.dot(Bm * x));
    out.certificate = std::abs(quot - out.value) / std::max(1.0, std::abs(out.value));
    out.minimizer = basis.to_grid(x);
    out.constraint = 0.0;
    const Grid& g = sp.grid();
    for (const Vec& c : constraints) {
        const double r = std::abs(inner(g, out.minimizer, c)) /
                         (norm_l2(g, out.minimizer) * norm_l2(g, c));
        out.constraint = std::max(out.constraint, r);
    }
    return out;
}

} // namespace

DeltaReport spectral_delta(const Spectral& sp, const GroundState& gs, const Vec& G1,
                           int n_reduced) {
    const Grid& g = sp.grid();
    const int nred = std::min(g.N, n_reduced);
    const int stride = g.N / nred;
    auto spred = std::make_shared<Spectral>(make_grid(g.L, nred));

    auto sppin = std::make_shared<Spectral>(sp.grid_ptr());
    LinOp C1 = LinOp::make(sppin, OpKind::Cal1, gs).restricted(spred);
    LinOp C2 = LinOp::make(sppin, OpKind::Cal2, gs).restricted(spred);

    Vec q = subsample(gs.q, stride);
    Vec g1 = subsample(G1, stride);
    Vec lq = subsample(sp.lambda(gs.q), stride);
    Vec l2q = subsample(sp.lambda(sp.lambda(gs.q)), stride);

    ApplyFn B = b_form_op(*spred, gs.beta);
    ParityBasis even(spred->grid_ptr(), Parity::Even);
    ParityBasis odd(spred->grid_ptr(), Parity::Odd);

    // The sectors decouple: Q, LQ, L^2Q are even, G1 is odd, so each of the
    // four subproblems carries only the constraints of matching parity.
    SectorMin e1e = constrained_min(even, *spred, C1.apply_fn(), B, {q});
    SectorMin e1o = constrained_min(odd, *spred, C1.apply_fn(), B, {g1});
    SectorMin e2e = constrained_min(even, *spred, C2.apply_fn(), B, {lq, l2q});
    SectorMin e2o = constrained_min(odd, *spred, C2.apply_fn(), B, {});

    DeltaReport rep;
    rep.e1_even = e1e.value;
    rep.e1_odd = e1o.value;
    rep.e2_even = e2e.value;
    rep.e2_odd = e2o.value;
    rep.delta = std::min(std::min(e1e.value, e1o.value), std::min(e2e.value, e2o.value));
    rep.certificate_gap =
        std::max(std::max(e1e.certificate, e1o.certificate), std::max(e2e.certificate, e2o.certificate));
    rep.constraint_residual =
        std::max(std::max(e1e.constraint, e1o.constraint), std::max(e2e.constraint, e2o.constraint));
    rep.n_reduced = nred;
    rep.minimizer_e1 = (e1e.value < e1o.value) ? e1e.minimizer : e1o.minimizer;
    rep.minimizer_e2 = (e2e.value < e2o.value) ? e2e.minimizer : e2o.minimizer;
    return rep;
}

//------------------------------------------------------------------------------
// index counts
//------------------------------------------------------------------------------
namespace {

std::pair<int, int> count_sector(const ParityBasis& basis, const Grid& gred, const ApplyFn& A) {
    Eigen::MatrixXd M = sector_matrix(basis, A);
    SymEig eig = sym_eig(M);
    const double scale = std::max(std::abs(eig.values[0]), std::abs(eig.values[basis.dim() - 1]));
    int raw = 0, localized = 0;
    for (int i = 0; i < basis.dim(); ++i) {
        if (eig.values[i] >= -1e-9 * scale) break;
        ++raw;
        Vec v = basis.to_grid(eig.vectors.col(i));
        double core = 0, total = 0;
        for (int j = 0; j < gred.N; ++j) {
            total += v[j] * v[j];
            if (std::abs(gred.y[j]) <= gred.L / 4.0) core += v[j] * v[j];
        }
        if (core >= 0.5 * total) ++localized;
    }
    return {localized, raw};
}

} // namespace

IndexReport index_counts(const Spectral& sp, const GroundState& gs, int n_reduced) {
    const Grid& g = sp.grid();
    auto sppin = std::make_shared<Spectral>(sp.grid_ptr());
    LinOp H1 = LinOp::make(sppin, OpKind::Hbar1, gs);
    LinOp H2 = LinOp::make(sppin, OpKind::Hbar2, gs);

    IndexReport rep;
    int prev[4] = {-1, -1, -1, -1};
    for (int pass = 0; pass < 2; ++pass) {
        const int nred = std::min(g.N, n_reduced * (pass ? 2 : 1));
        auto spred = std::make_shared<Spectral>(make_grid(g.L, nred));
        LinOp h1 = (nred == g.N) ? H1 : H1.restricted(spred);
        LinOp h2 = (nred == g.N) ? H2 : H2.restricted(spred);
        ParityBasis even(spred->grid_ptr(), Parity::Even);
        ParityBasis odd(spred->grid_ptr(), Parity::Odd);
        auto c1e = count_sector(even, spred->grid(), h1.apply_fn());
        auto c1o = count_sector(odd, spred->grid(), h1.apply_fn());
        auto c2e = count_sector(even, spred->grid(), h2.apply_fn());
        auto c2o = count_sector(odd, spred->grid(), h2.apply_fn());
        rep.hbar1_even = c1e.first; rep.raw1_even = c1e.second;
        rep.hbar1_odd = c1o.first;  rep.raw1_odd = c1o.second;
        rep.hbar2_even = c2e.first; rep.raw2_even = c2e.second;
        rep.hbar2_odd = c2o.first;  rep.raw2_odd = c2o.second;
        if (pass == 1)
            rep.stable = prev[0] == c1e.first && prev[1] == c1o.first && prev[2] == c2e.first &&
                         prev[3] == c2o.first;
        prev[0] = c1e.first; prev[1] = c1o.first; prev[2] = c2e.first; prev[3] = c2o.first;
        if (nred == g.N) break; // cannot refine further
    }
    return rep;
}

//------------------------------------------------------------------------------
// phi quantities
//------------------------------------------------------------------------------
PhiReport phi_quantities(const Spectral& sp, const GroundState& gs, double tol) {
    const Grid& g = sp.grid();
    auto sppin = std::make_shared<Spectral>(sp.grid_ptr());
    LinOp H1 = LinOp::make(sppin, OpKind::Hbar1, gs);
    LinOp H2 = LinOp::make(sppin, OpKind::Hbar2, gs);
    const Vec& q = gs.q;
    Vec qy = sp.deriv(q);
    Vec yq = g.y * q;
    Vec lq = sp.lambda(q);
    Vec qtilde = lq + 0.5 * sp.lambda(lq);

    PhiReport rep;
    rep.h1_QQ = inner(g, H1.apply(q), q);
    rep.h1_QyQy = inner(g, H1.apply(qy), qy);
    rep.h2_QQ = inner(g, H2.apply(q), q);

    // The split operators are invertible on the box (one deep bound state,
    // no kernel), so plain preconditioned MINRES applies; parity follows the
    // right-hand side.
    auto solve = [&](const LinOp& op, const Vec& rhs, Parity p, SolveStats* st) -> Vec {
        Vec x = minres(g, op.apply_fn(), op.precond_fn(), rhs, tol, 20000, st);
        return (p == Parity::Even) ? even_part(x) : odd_part(x);
    };
    Vec phi1 = solve(H1, q, Parity::Even, &rep.phi1);
    Vec phi2 = solve(H1, yq, Parity::Odd, &rep.phi2);
    Vec phi3 = solve(H2, qtilde, Parity::Even, &rep.phi3);

    const double p1 = inner(g, phi1, q);
    const double p2 = inner(g, phi2, yq);
    const double p3 = inner(g, phi3, qtilde);
    const double qq = inner(g, q, q);
    const double qyyq = inner(g, qy, yq);
    const double qqt = inner(g, q, qtilde);
    rep.q1 = -p1 * (1.0 - rep.h1_QQ * p1 / (qq * qq));
    rep.q2 = -p2 * (1.0 - rep.h1_QyQy * p2 / (qyyq * qyyq));
    rep.q3 = -p3 * (1.0 - rep.h2_QQ * p3 / (qqt * qqt));
    return rep;
}

//------------------------------------------------------------------------------
// Hardy constant: block subspace iteration on the pencil (P, B).
//------------------------------------------------------------------------------
double hardy_constant(const Spectral& sp, double beta, double tol, int max_iter,
                      int* iterations) {
    const Grid& g = sp.grid();
    Vec polyw = (1.0 + g.y.abs()).pow(-beta);
    Vec expw = (-g.y.abs()).exp();
    ApplyFn B = [&](const Vec& f) { return Vec(sp.frac(f, beta) + expw * f); };
    ApplyFn Binv = [&](const Vec& f) {
        ApplyFn P = [&](const Vec& u) { return sp.resolvent_frac(u, beta, 1.0 / g.L); };
        SolveStats st;
        return pcg(g, B, P, f, 1e-11, 2000, &st);
    };

    const int block = 4;
    std::vector<Vec> X(block);
    // deterministic spread + localized seeds
    X[0] = Vec::Ones(g.N);
    X[1] = (1.0 + g.y.square() / 25.0).pow(-1.0);
    X[2] = (-0.5 * g.y.square()).exp();
    X[3] = (1.0 + g.y.square() / 400.0).pow(-0.5 * (1.0 + beta));

    double lam = 0.0, lam_prev = -1.0;
    int it = 0;
    for (it = 0; it < max_iter; ++it) {
        // Y = B^{-1} P X, then Rayleigh-Ritz in the (P, B) pencil
        std::vector<Vec> Y(block);
        for (int i = 0; i < block; ++i) Y[i] = Binv(Vec(polyw * X[i]));
        // orthonormalize in plain L2 for conditioning
        Y = orthonormalize(g, Y);
        const int m = static_cast<int>(Y.size());
        if (m == 0) throw NumericalError("hardy: subspace collapsed");
        Eigen::MatrixXd Pm(m, m), Bm(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                Pm(i, j) = inner(g, Y[i], Vec(polyw * Y[j]));
                Bm(i, j) = inner(g, Y[i], B(Y[j]));
            }
        Pm = 0.5 * (Pm + Pm.transpose());
        Bm = 0.5 * (Bm + Bm.transpose());
        SymEig eig = sym_gen_eig(Pm, Bm);
        lam = eig.values[m - 1]; // largest ratio P/B
        // rotate the block onto the Ritz vectors (descending)
        std::vector<Vec> Xn(block);
        for (int i = 0; i < block && i < m; ++i) {
            Vec v = Vec::Zero(g.N);
            for (int j = 0; j < m; ++j) v += eig.vectors(j, m - 1 - i) * Y[j];
            Xn[i] = v;
        }
        for (int i = m; i < block; ++i) Xn[i] = X[i];
        X = Xn;
        if (lam_prev > 0 && std::abs(lam - lam_prev) <= tol * lam) break;
        lam_prev = lam;
    }
    if (iterations) *iterations = it;
    if (it >= max_iter)
        throw NumericalError("hardy: subspace iteration failed to settle");
    return lam;
}

double virial_form(const Grid& g, const LinOp& C1, const LinOp& C2, const CVec& eps) {
    Vec e1 = eps.real(), e2 = eps.imag();
    return inner(g, C1.apply(e1), e1) + inner(g, C2.apply(e2), e2);
}

} // namespace fnls
