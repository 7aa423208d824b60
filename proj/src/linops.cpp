#include "fnls/linops.hpp"

#include <cmath>
#include <cstdio>

#include <Eigen/Eigenvalues>

#include "fnls/errors.hpp"

namespace fnls {

LinOp::LinOp(std::shared_ptr<const Spectral> sp, OpKind kind, double beta, double id_coeff, Vec V)
    : sp_(std::move(sp)), kind_(kind), beta_(beta), id_(id_coeff), V_(std::move(V)) {}

LinOp LinOp::make(std::shared_ptr<const Spectral> sp, OpKind kind, const GroundState& gs) {
    const Grid& g = sp->grid();
    if (gs.grid->N != g.N || gs.grid->L != g.L)
        throw ValidationError("linops: ground state grid mismatch");
    const double b = gs.beta;
    const Vec& q = gs.q;
    Vec qp = sp->deriv(q); // single source of truth: derivative of the stored q
    Vec V;
    double id = 0.0;
    auto pow_q = [&](double e) { return Vec(q.pow(e)); };
    switch (kind) {
        case OpKind::Lplus:
            id = 1.0;
            V = -(2.0 * b + 1.0) * pow_q(2.0 * b);
            break;
        case OpKind::Lminus:
            id = 1.0;
            V = -pow_q(2.0 * b);
            break;
        case OpKind::Cal1:
            V = 2.0 * (2.0 * b + 1.0) * g.y * qp * pow_q(2.0 * b - 1.0);
            break;
        case OpKind::Cal2:
            V = 2.0 * g.y * qp * pow_q(2.0 * b - 1.0);
            break;
        case OpKind::Hbar1:
        case OpKind::Hbar2: {
            const double c = (kind == OpKind::Hbar1) ? 2.0 * (2.0 * b + 1.0) : 2.0;
            Vec sech2(g.N);
            for (int j = 0; j < g.N; ++j) {
                const double s = 1.0 / std::cosh(10.0 * g.y[j] / 9.0);
                sech2[j] = s * s;
            }
            V = (10.0 / 9.0) * c * g.y * qp * pow_q(2.0 * b - 1.0) - sech2 / 9.0;
            break;
        }
    }
    return LinOp(std::move(sp), kind, b, id, std::move(V));
}

LinOp LinOp::restricted(std::shared_ptr<const Spectral> coarse) const {
    const Grid& gf = sp_->grid();
    const Grid& gc = coarse->grid();
    if (gc.L != gf.L || gf.N % gc.N != 0)
        throw ValidationError("linops: restriction target is not a divisor grid");
    const int stride = gf.N / gc.N;
    Vec Vc(gc.N);
    for (int j = 0; j < gc.N; ++j) Vc[j] = V_[j * stride];
    return LinOp(std::move(coarse), kind_, beta_, id_, std::move(Vc));
}

Vec LinOp::apply(const Vec& f) const {
    return sp_->frac(f, beta_) + id_ * f + V_ * f;
}

ApplyFn LinOp::apply_fn() const {
    return [this](const Vec& f) { return apply(f); };
}

ApplyFn LinOp::precond_fn() const {
    return [this](const Vec& f) { return sp_->resolvent_frac(f, beta_, 1.0); };
}

Vec solve_deflated(const LinOp& op, const Vec& rhs, const std::vector<Vec>& kernel, double tol,
                   int max_iter, SolveStats* stats) {
    const Grid& g = op.spectral().grid();
    SolveStats st;
    Vec x = minres_deflated(g, op.apply_fn(), op.precond_fn(), rhs, kernel, tol, max_iter, &st);
    // iterative refinement recovers the gap between the MINRES residual
    // estimate and the true residual; keep a correction only if it helps
    // (solves on floor-level right-hand sides return noise)
    for (int pass = 0; pass < 2 && st.rel_residual > tol; ++pass) {
        const std::vector<Vec> onb = orthonormalize(g, kernel);
        Vec bp = project_off(g, onb, rhs);
        Vec r = project_off(g, onb, Vec(bp - op.apply(x)));
        SolveStats st2;
        Vec d = minres_deflated(g, op.apply_fn(), op.precond_fn(), r, kernel, 1e-3, max_iter, &st2);
        Vec x_try = project_off(g, onb, Vec(x + d));
        const double nb = norm_l2(g, rhs);
        const double rel_try = norm_l2(g, Vec(op.apply(x_try) - bp)) / nb;
        if (rel_try >= st.rel_residual) break;
        x = x_try;
        st.rel_residual = rel_try;
        st.iterations += st2.iterations;
    }
    // the attainable residual floors at roundoff amplified by the multiplier
    double kmax_pow = 0;
    for (int m = 0; m < g.N; ++m)
        kmax_pow = std::max(kmax_pow, std::pow(std::abs(g.k[m]), op.beta()));
    const double floor = 4.0 * 2.3e-16 * (1.0 + kmax_pow);
    st.converged = st.rel_residual <= std::max(10.0 * tol, floor);
    if (stats) *stats = st;
    if (!st.converged) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3e", st.rel_residual);
        throw NumericalError(std::string("solve_deflated: MINRES stalled at relative residual ") +
                             buf);
    }
    return x;
}

//------------------------------------------------------------------------------
// ParityBasis
//------------------------------------------------------------------------------
ParityBasis::ParityBasis(GridPtr g, Parity p) : g_(std::move(g)), p_(p) {
    if (p == Parity::None) throw ValidationError("ParityBasis: need even or odd");
    dim_ = (p == Parity::Even) ? g_->N / 2 + 1 : g_->N / 2 - 1;
}

Vec ParityBasis::to_grid(const Eigen::VectorXd& c) const {
    const int N = g_->N;
    const double rh = std::sqrt(g_->h), r2h = std::sqrt(2.0 * g_->h);
    Vec f = Vec::Zero(N);
    if (p_ == Parity::Even) {
        f[0] = c[0] / rh;
        f[N / 2] = c[N / 2] / rh;
        for (int i = 1; i < N / 2; ++i) {
            f[i] = c[i] / r2h;
            f[N - i] = c[i] / r2h;
        }
    } else {
        for (int i = 1; i < N / 2; ++i) {
            f[i] = c[i - 1] / r2h;
            f[N - i] = -c[i - 1] / r2h;
        }
    }
    return f;
}

Eigen::VectorXd ParityBasis::from_grid(const Vec& f) const {
    const int N = g_->N;
    const double rh = std::sqrt(g_->h), r2h = std::sqrt(2.0 * g_->h);
    Eigen::VectorXd c(dim_);
    if (p_ == Parity::Even) {
        c[0] = rh * f[0];
        c[N / 2] = rh * f[N / 2];
        for (int i = 1; i < N / 2; ++i) c[i] = (f[i] + f[N - i]) * g_->h / r2h;
    } else {
        for (int i = 1; i < N / 2; ++i) c[i - 1] = (f[i] - f[N - i]) * g_->h / r2h;
    }
    return c;
}

Eigen::MatrixXd sector_matrix(const ParityBasis& basis, const ApplyFn& A) {
    const int n = basis.dim();
    Eigen::MatrixXd M(n, n);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < n; ++j) {
        e[j] = 1.0;
        M.col(j) = basis.from_grid(A(basis.to_grid(e)));
        e[j] = 0.0;
    }
    return 0.5 * (M + M.transpose());
}

SymEig sym_eig(const Eigen::MatrixXd& A) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolve failed");
    return {es.eigenvalues(), es.eigenvectors()};
}

SymEig sym_gen_eig(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, B);
    if (es.info() != Eigen::Success) throw NumericalError("generalized eigensolve failed");
    return {es.eigenvalues(), es.eigenvectors()};
}

//------------------------------------------------------------------------------
// lowest_eigenpairs
//------------------------------------------------------------------------------
namespace {

Vec project_parity(const Vec& f, Parity p) {
    return (p == Parity::Even) ? even_part(f) : odd_part(f);
}

// Fix an overall sign so eigenfunctions are reproducible: positive mean when
// meaningful, else positive max-magnitude entry.
void fix_sign(const Grid& g, Vec& v) {
    double s = g.h * v.sum();
    if (std::abs(s) < 1e-10 * norm_l2(g, v)) {
        Eigen::Index imax;
        v.abs().maxCoeff(&imax);
        s = v[imax];
    }
    if (s < 0) v = -v;
}

} // namespace

EigenPairs lowest_eigenpairs(const LinOp& op, Parity parity, int count, int n_reduced) {
    if (count > 8) throw ValidationError("lowest_eigenpairs: count must be <= 8");
    const Grid& g = op.spectral().grid();
    EigenPairs out;

    if (parity == Parity::None) { // both sectors, merged ascending
        EigenPairs e = lowest_eigenpairs(op, Parity::Even, count, n_reduced);
        EigenPairs o = lowest_eigenpairs(op, Parity::Odd, count, n_reduced);
        out.resolution_ok = e.resolution_ok && o.resolution_ok;
        size_t ie = 0, io = 0;
        while (static_cast<int>(out.values.size()) < count) {
            const bool take_even =
                io >= o.values.size() ||
                (ie < e.values.size() && e.values[ie] <= o.values[io]);
            EigenPairs& src = take_even ? e : o;
            size_t& idx = take_even ? ie : io;
            if (idx >= src.values.size()) break;
            out.values.push_back(src.values[idx]);
            out.reduced_values.push_back(src.reduced_values[idx]);
            out.vectors.push_back(src.vectors[idx]);
            ++idx;
        }
        return out;
    }

    const int nred = std::min(g.N, n_reduced);
    auto gred = make_grid(g.L, nred);
    auto spred = std::make_shared<Spectral>(gred);
    LinOp opred = (nred == g.N) ? op : op.restricted(spred);

    ParityBasis basis(gred, parity);
    SymEig eig = sym_eig(sector_matrix(basis, opred.apply_fn()));

    const int upfactor = g.N / nred;
    for (int i = 0; i < count && i < basis.dim(); ++i) {
        const double lam_red = eig.values[i];
        Vec v = basis.to_grid(eig.vectors.col(i));
        if (upfactor > 1) v = opred.spectral().upsample(v, upfactor);
        v = project_parity(v, parity);
        v /= norm_l2(g, v);

        double lam = lam_red;
        if (upfactor > 1) {
            // Inverse iteration at the fixed reduced-grid shift. MINRES on the
            // nearly singular shifted system amplifies the eigendirection even
            // when the residual stalls, which is all we need here.
            ApplyFn As = [&](const Vec& f) { return Vec(op.apply(f) - lam_red * f); };
            for (int pass = 0; pass < 2; ++pass) {
                SolveStats st;
                Vec w = minres(g, As, op.precond_fn(), v, 1e-10, 300, &st);
                w = project_parity(w, parity);
                const double n = norm_l2(g, w);
                if (!(n > 0) || !std::isfinite(n)) break;
                v = w / n;
            }
            lam = inner(g, v, op.apply(v));
        }
        fix_sign(g, v);
        out.values.push_back(lam);
        out.reduced_values.push_back(lam_red);
        out.vectors.push_back(v);
        if (std::abs(lam - lam_red) > 1e-3) out.resolution_ok = false;
    }
    return out;
}

double resolvent_kernel_decay(const Spectral& sp, double beta) {
    const Grid& g = sp.grid();
    Vec delta = Vec::Zero(g.N);
    delta[g.N / 2] = 1.0 / g.h; // grid delta at y = 0
    Vec K = sp.resolvent_frac(delta, beta, 1.0);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (int j = 0; j < g.N; ++j) {
        const double yy = g.y[j];
        if (yy < g.L / 8.0 || yy > 3.0 * g.L / 8.0) continue;
        const double a = std::abs(K[j]);
        if (!(a > 0)) continue;
        const double X = std::log(yy), Y = std::log(a);
        sx += X; sy += Y; sxx += X * X; sxy += X * Y;
        ++n;
    }
    if (n < 4) throw NumericalError("resolvent_kernel_decay: empty fit window");
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace fnls
