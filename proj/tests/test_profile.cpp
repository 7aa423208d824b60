#include <doctest.h>

#include <cmath>

#include "fnls/errors.hpp"
#include "fnls/linops.hpp"
#include "fnls/profile.hpp"
#include "test_util.hpp"

using namespace fnls;

namespace {

struct ProfileFixture {
    std::shared_ptr<Spectral> sp;
    GroundState gs;
    ProfileSet ps;
};

const ProfileFixture& fixture(double beta, double L, int N) {
    static std::map<std::tuple<double, double, int>, ProfileFixture> cache;
    auto key = std::make_tuple(beta, L, N);
    auto it = cache.find(key);
    if (it == cache.end()) {
        const auto& c = testutil::cached_ground(beta, L, N);
        ProfileFixture f{c.sp, c.gs, build_profiles(*c.sp, c.gs)};
        it = cache.emplace(key, std::move(f)).first;
    }
    return it->second;
}

} // namespace

TEST_CASE("cascade invariants across beta") {
    struct Case { double beta, L; int N; };
    for (Case c : {Case{1.5, 200.0, 4096}, Case{1.9, 200.0, 4096}, Case{2.0, 64.0, 2048}}) {
        CAPTURE(c.beta);
        const auto& f = fixture(c.beta, c.L, c.N);
        const Grid& g = f.sp->grid();

        for (double s : f.ps.solvability_residuals) CHECK(s <= 1e-8);
        CHECK(parity_residual(f.ps.S1, Parity::Even) <= 1e-8);
        CHECK(parity_residual(f.ps.S2, Parity::Even) <= 1e-8);
        CHECK(parity_residual(f.ps.S3, Parity::Even) <= 1e-8);
        CHECK(parity_residual(f.ps.S4, Parity::Even) <= 1e-8);
        CHECK(parity_residual(f.ps.G1, Parity::Odd) <= 1e-8);
        CHECK(parity_residual(f.ps.G2, Parity::Even) <= 1e-8);
        CHECK(parity_residual(f.ps.F1, Parity::Odd) <= 1e-8);
        CHECK(parity_residual(f.ps.F2, Parity::Odd) <= 1e-8);
        CHECK(f.ps.c0 > 0);

        // each solution is orthogonal to the kernel it was deflated against
        Vec qp = f.sp->deriv(f.gs.q);
        auto rel = [&](const Vec& a, const Vec& b) {
            return std::abs(inner(g, a, b)) / (norm_l2(g, a) * norm_l2(g, b));
        };
        CHECK(rel(f.ps.S1, f.gs.q) <= 1e-8);
        CHECK(rel(f.ps.G1, f.gs.q) <= 1e-8);
        CHECK(rel(f.ps.S3, f.gs.q) <= 1e-8);
        CHECK(rel(f.ps.F2, f.gs.q) <= 1e-8);
        CHECK(rel(f.ps.F1, qp) <= 1e-8);
        CHECK(rel(f.ps.S2, qp) <= 1e-8);
        CHECK(rel(f.ps.G2, qp) <= 1e-8);
        CHECK(rel(f.ps.S4, qp) <= 1e-8);

        // (S1, LQ) = (L- S1, S1) > 0 by coercivity
        CHECK(inner(g, f.ps.S1, f.sp->lambda(f.gs.q)) > 0);
    }
}

TEST_CASE("the bv solvability condition vanishes by the commutator identities") {
    const auto& f = fixture(2.0, 64.0, 2048);
    const Grid& g = f.sp->grid();
    const double b = 2.0;
    Vec q2b1 = f.gs.q.pow(2.0 * b - 1.0);
    Vec rhs = f.ps.G1 - f.sp->lambda(f.ps.G1) + f.sp->deriv(f.ps.S1) +
              2.0 * b * f.ps.S1 * f.ps.G1 * q2b1;
    Vec qp = f.sp->deriv(f.gs.q);
    CHECK(std::abs(inner(g, rhs, qp)) <= 1e-8 * norm_l2(g, rhs) * norm_l2(g, qp));
}

TEST_CASE("assembled profile: limits, parity, positivity, smallness guard") {
    const auto& f = fixture(2.0, 64.0, 2048);
    const Grid& g = f.sp->grid();

    CVec w0 = assemble_W(f.ps, 0.0, 0.0);
    CHECK(norm_l2(g, CVec(w0 - f.gs.q.cast<Cplx>())) == 0.0);

    CVec wb = assemble_W(f.ps, 0.05, 0.0);
    CHECK(parity_residual(Vec(wb.real()), Parity::Even) <= 1e-8);
    CHECK(parity_residual(Vec(wb.imag()), Parity::Even) <= 1e-8);

    // |W| >= Q - O(|b|+|v|) <y>^{-1-b} stays positive for small parameters
    CVec wbv = assemble_W(f.ps, 0.05, 0.05);
    double minmod = 1e300;
    for (int j = 0; j < g.N; ++j) minmod = std::min(minmod, std::abs(wbv[j]));
    CHECK(minmod > 0);

    CHECK_THROWS_AS(assemble_W(f.ps, 0.35, 0.0), ValidationError);
}

TEST_CASE("residual scaling laws in b and v") {
    const auto& f = fixture(2.0, 64.0, 2048);

    PsiResult base = residual_Psi(f.ps, 0.0, 0.0, *f.sp);
    CHECK(base.l2 <= 1e-10); // ground-state defect level

    std::vector<double> xs;
    for (double e = -3.0; e <= -1.49; e += 0.25) xs.push_back(std::pow(10.0, e));
    SlopeFit fb = psi_slope_b(f.ps, *f.sp, xs);
    SlopeFit fv = psi_slope_v(f.ps, *f.sp, xs);
    CHECK(fb.slope >= 4.7);
    CHECK(fv.slope >= 2.7);
    // the clean upper decade shows the law without any floor handling
    const auto& s = fb.samples;
    const double top_slope = std::log(s[s.size() - 1].second / s[s.size() - 3].second) /
                             std::log(s[s.size() - 1].first / s[s.size() - 3].first);
    CHECK(top_slope >= 4.7);

    // weighted sup norm of the residual is finite and small
    PsiResult r = residual_Psi(f.ps, 0.02, 0.01, *f.sp);
    CHECK(std::isfinite(r.wsup));
    CHECK(r.h1 >= r.l2);
}

TEST_CASE("compensated evaluation matches the direct dealiased route") {
    const auto& f = fixture(2.0, 64.0, 2048);
    const Grid& g = f.sp->grid();
    for (auto [b, v] : {std::pair<double, double>{0.03, 0.01}, {0.1, 0.05}}) {
        CVec direct = residual_Psi_direct(f.ps, b, v, *f.sp);
        PsiResult comp = residual_Psi(f.ps, b, v, *f.sp);
        // the direct route carries the amplified FFT roundoff of |D|^b W
        CHECK(norm_l2(g, CVec(direct - comp.psi)) <= 1e-11 + 1e-6 * comp.l2);
    }
}

TEST_CASE("energy expansion: coefficient value and positivity") {
    const auto& f = fixture(2.0, 64.0, 2048);
    EnergyExpansion en = energy_expansion(f.ps, *f.sp);
    const double e00 = functionals(*f.sp, assemble_W(f.ps, 0.0, 0.0), 2.0).energy;
    CHECK(std::abs(e00) <= 1e-10);
    CHECK(en.c0_fit > 0);
    CHECK(std::abs(en.c0_fit - en.c0_formula) <= 0.02 * en.c0_formula);
    // the gradient-Q variant quoted in the virial section is a different
    // number; the fit singles out (L- G1, G1)
    CHECK(std::abs(en.c0_fit - en.c0_gradq) > 0.5 * en.c0_gradq);
}

TEST_CASE("scaling invariance identity on the grid") {
    const auto& f = fixture(2.0, 64.0, 2048);
    CHECK(scaling_invariance_check(f.ps, 0.0, 0.0, *f.sp) <= 1e-6);
    CHECK(scaling_invariance_check(f.ps, 0.05, 0.02, *f.sp) <= 1e-5);
    // stays at the floor under refinement
    const auto& f2 = fixture(2.0, 64.0, 4096);
    CHECK(scaling_invariance_check(f2.ps, 0.05, 0.02, *f2.sp) <= 1e-5);
}

TEST_CASE("virial pairing coefficient") {
    const auto& f = fixture(2.0, 64.0, 2048);
    VirialPairing vp = virial_pairing(f.ps, *f.sp);
    CHECK(std::abs(vp.fitted - vp.predicted) <= 0.05 * std::abs(vp.predicted));
}

TEST_CASE("G1 reduces to y Q / 2 in the local case") {
    const auto& f = fixture(2.0, 64.0, 2048);
    const Grid& g = f.sp->grid();
    Vec yq2 = 0.5 * g.y * f.gs.q;
    CHECK(norm_l2(g, Vec(f.ps.G1 - yq2)) <= 1e-8 * norm_l2(g, f.ps.G1));
}

TEST_CASE("correction decay: weighted sups stable under box refinement") {
    const auto& a = fixture(1.5, 200.0, 4096);
    const auto& b = fixture(1.5, 400.0, 8192);
    const double p = 1.0 + 1.5;
    const Vec* fa[4] = {&a.ps.S1, &a.ps.G1, &a.ps.S2, &a.ps.G2};
    const Vec* fb[4] = {&b.ps.S1, &b.ps.G1, &b.ps.S2, &b.ps.G2};
    for (int i = 0; i < 4; ++i) {
        const double wa = weighted_sup(a.sp->grid(), *fa[i], p);
        const double wb = weighted_sup(b.sp->grid(), *fb[i], p);
        CHECK(std::isfinite(wa));
        CHECK(std::abs(wb - wa) <= 0.25 * wa);
    }
}

TEST_CASE("O(b^4) potential: printed variant vs Taylor coefficient") {
    const auto& f = fixture(2.0, 64.0, 2048);
    // the finite-difference oracle confirms the analytic coefficient
    CHECK(f.ps.h_taylor_oracle_gap <= 1e-2);
    // the beta^3(beta-1) variant printed alongside differs by orders; the
    // cascade uses the Taylor-derived one (reported, not silently dropped)
    CHECK(f.ps.h_variant_gap > 0.5);
}
