#include "fnls/dynamics.hpp"

#include <atomic>
#include <cmath>
#include <iostream>

#include "fnls/errors.hpp"

namespace fnls {

namespace {

CVec linear_flow(const Spectral& sp, const CVec& u, double beta, double dt) {
    const Grid& g = sp.grid();
    CVec a = u;
    sp.fft(a);
    for (int m = 0; m < g.N; ++m) {
        const double w = std::pow(std::abs(g.k[m]), beta) * dt;
        a[m] *= Cplx(std::cos(w), -std::sin(w));
    }
    sp.ifft(a);
    return a;
}

void nonlinear_phase(CVec& u, double beta, double dt) {
    for (Eigen::Index j = 0; j < u.size(); ++j) {
        const double w = std::pow(std::norm(u[j]), beta) * dt;
        u[j] *= Cplx(std::cos(w), std::sin(w));
    }
}

} // namespace

CVec step(const Spectral& sp, const CVec& u, double dt, double beta, double amplitude_cutoff) {
    if (!(dt > 0)) throw ValidationError("step: dt must be positive");
    CVec w = linear_flow(sp, u, beta, 0.5 * dt);
    nonlinear_phase(w, beta, dt);
    w = linear_flow(sp, w, beta, 0.5 * dt);
    if (norm_sup(w) > amplitude_cutoff)
        throw NumericalError("step: amplitude exceeded the blow-up cutoff");
    return w;
}

Vec virial_weight(const Grid& g) {
    Vec w(g.N);
    for (int j = 0; j < g.N; ++j) {
        const double y = g.y[j];
        const double a = std::abs(y);
        if (a <= g.L / 2) {
            w[j] = y;
        } else {
            // quintic ramp: value L/2 and slope 1 at |y| = L/2, flat zero at |y| = L
            const double t = 2.0 * a / g.L - 1.0;
            const double p = 0.5 + 0.5 * t - 8.0 * t * t * t + 11.5 * t * t * t * t -
                             4.5 * t * t * t * t * t;
            w[j] = (y >= 0 ? 1.0 : -1.0) * g.L * p;
        }
    }
    return w;
}

double virial_phi(const Spectral& sp, const CVec& u) {
    const Grid& g = sp.grid();
    static thread_local Vec w_cache;
    static thread_local double w_L = -1;
    if (w_L != g.L || w_cache.size() != g.N) {
        w_cache = virial_weight(g);
        w_L = g.L;
    }
    static std::atomic<bool> warned{false};
    if (!warned.load() && window_tail_mass(g, u) > 1e-6 && !warned.exchange(true))
        std::cerr << "[fnls] warning: virial window sees mass beyond |y| > L/2; "
                     "the weight is cut there (warning shown once)\n";
    CVec uy = sp.deriv(u);
    return g.h * (w_cache * (uy * u.conjugate()).imag()).sum();
}

double window_tail_mass(const Grid& g, const CVec& u) {
    double tail = 0, total = 0;
    for (int j = 0; j < g.N; ++j) {
        const double m = std::norm(u[j]);
        total += m;
        if (std::abs(g.y[j]) > g.L / 2) tail += m;
    }
    return (total > 0) ? tail / total : 0.0;
}

//------------------------------------------------------------------------------
// Interpolating samples of a periodic grid function at arbitrary points:
// spectral upsampling once, then a local 10-point Lagrange stencil.
//------------------------------------------------------------------------------
namespace {

class Interpolant {
  public:
    Interpolant(const Spectral& sp, const CVec& u, int factor = 8)
        : L_(sp.grid().L), M_(sp.grid().N * factor), fine_(sp.upsample(u, factor)) {
        hf_ = 2.0 * L_ / M_;
    }

    Cplx operator()(double x) const {
        double t = (x + L_) / hf_;
        t -= std::floor(t / M_) * M_;
        const int base = static_cast<int>(std::floor(t)) - 4; // 10-point stencil
        const double frac = t - std::floor(t);
        // Lagrange weights on integer offsets -4..5 evaluated at 'frac'
        Cplx acc(0, 0);
        for (int i = -4; i <= 5; ++i) {
            double wgt = 1.0;
            for (int m = -4; m <= 5; ++m) {
                if (m == i) continue;
                wgt *= (frac - m) / static_cast<double>(i - m);
            }
            int idx = base + 4 + i;
            idx = ((idx % M_) + M_) % M_;
            acc += wgt * fine_[idx];
        }
        return acc;
    }

  private:
    double L_;
    int M_;
    CVec fine_;
    double hf_;
};

} // namespace

//------------------------------------------------------------------------------
// decompose
//------------------------------------------------------------------------------
ModulationState decompose(const Spectral& sp, const ProfileSet& ps, const CVec& u,
                          const ModulationState& guess, int max_newton) {
    const Grid& g = sp.grid();
    const Cplx I(0, 1);
    Interpolant uat(sp, u);

    double b = guess.b, lam = guess.lambda, x0 = guess.x, v = guess.v, gam = guess.gamma;
    if (!(lam > 0)) lam = 1.0;

    ModulationState out;
    CVec utilde(g.N), eps(g.N);
    const double nu = norm_l2(g, u);

    auto rescaled = [&]() {
        const double rl = std::sqrt(lam);
        const Cplx ph = std::exp(-I * gam);
        for (int j = 0; j < g.N; ++j) utilde[j] = rl * uat(lam * g.y[j] + x0) * ph;
    };

    int it = 0;
    for (; it < max_newton; ++it) {
        rescaled();
        CVec W = assemble_W(ps, b, v);
        eps = utilde - W;

        CVec dbW = assemble_dbW(ps, b, v);
        CVec dvW = assemble_dvW(ps, b, v);
        // second derivatives of the polynomial profile
        CVec dbbW = 2.0 * ps.fields[2].cast<Cplx>() + I * (6.0 * b) * ps.fields[3].cast<Cplx>() +
                    (12.0 * b * b) * ps.fields[4].cast<Cplx>() +
                    I * (2.0 * v) * ps.fields[8].cast<Cplx>();
        CVec dbvW = ps.fields[7].cast<Cplx>() + I * (2.0 * b) * ps.fields[8].cast<Cplx>();
        CVec dvvW = 2.0 * ps.fields[6].cast<Cplx>();

        // test directions A_i applied to W and its b/v derivatives
        std::array<CVec, 5> AW = {sp.lambda(W), dbW, dvW, sp.deriv(W), sp.lambda(sp.lambda(W))};
        std::array<CVec, 5> AdbW = {sp.lambda(dbW), dbbW, dbvW, sp.deriv(dbW),
                                    sp.lambda(sp.lambda(dbW))};
        std::array<CVec, 5> AdvW = {sp.lambda(dvW), dbvW, dvvW, sp.deriv(dvW),
                                    sp.lambda(sp.lambda(dvW))};

        auto sigma_of = [&g](const CVec& e, const CVec& a) {
            // (e1, Im a) - (e2, Re a)
            return g.h * (e.real() * a.imag() - e.imag() * a.real()).sum();
        };

        Eigen::VectorXd sig(5);
        for (int i = 0; i < 5; ++i) sig[i] = sigma_of(eps, AW[i]);

        // parameter derivatives of utilde (chain rule through the rescaling)
        CVec dlam = sp.lambda(utilde) / lam;
        CVec dx = sp.deriv(utilde) / lam;
        CVec dgam = -I * utilde;

        Eigen::MatrixXd J(5, 5);
        for (int i = 0; i < 5; ++i) {
            J(i, 0) = sigma_of(CVec(-dbW), AW[i]) + sigma_of(eps, AdbW[i]); // d/db
            J(i, 1) = sigma_of(dlam, AW[i]);                                // d/dlambda
            J(i, 2) = sigma_of(dx, AW[i]);                                  // d/dx
            J(i, 3) = sigma_of(CVec(-dvW), AW[i]) + sigma_of(eps, AdvW[i]); // d/dv
            J(i, 4) = sigma_of(dgam, AW[i]);                                // d/dgamma
        }

        Eigen::VectorXd delta = J.fullPivLu().solve(-sig);
        // trust region: stay well inside the profile's validity range and
        // keep lambda positive
        double scale = 1.0;
        while (lam + scale * delta[1] <= 0.1 * lam) scale *= 0.5;
        while (std::abs(b + scale * delta[0]) > 0.29 || std::abs(v + scale * delta[3]) > 0.29)
            scale *= 0.5;
        b += scale * delta[0];
        lam += scale * delta[1];
        x0 += scale * delta[2];
        v += scale * delta[3];
        gam += scale * delta[4];

        const double sigscale = nu * std::max(1.0, norm_l2(g, AW[0]));
        if (delta.cwiseAbs().maxCoeff() < 1e-13 * std::max(1.0, lam) ||
            sig.cwiseAbs().maxCoeff() < 1e-14 * sigscale) {
            ++it;
            out.converged = true;
            break;
        }
    }

    rescaled();
    CVec W = assemble_W(ps, b, v);
    eps = utilde - W;
    out.b = b;
    out.lambda = lam;
    out.x = x0;
    out.v = v;
    out.gamma = std::remainder(gam, 2.0 * M_PI);
    out.epsilon = eps;
    out.eps_l2 = norm_l2(g, eps);
    out.newton_iterations = it;

    std::array<CVec, 5> AW = {sp.lambda(W), assemble_dbW(ps, b, v), assemble_dvW(ps, b, v),
                              sp.deriv(W), sp.lambda(sp.lambda(W))};
    for (int i = 0; i < 5; ++i) {
        const double s =
            g.h * (eps.real() * AW[i].imag() - eps.imag() * AW[i].real()).sum();
        // relative to ||eps|| * ||direction||, floored at the measurement
        // scale so an eps at machine zero does not turn 0/0 into noise
        const double denom = std::max(out.eps_l2, 1e-8 * nu) * norm_l2(g, AW[i]);
        out.orth_residuals[i] = std::abs(s) / std::max(denom, 1e-300);
    }
    return out;
}

CVec reconstruct(const Spectral& sp, const ProfileSet& ps, const ModulationState& ms) {
    const Grid& g = sp.grid();
    const Cplx I(0, 1);
    CVec weps = assemble_W(ps, ms.b, ms.v) + ms.epsilon;
    Interpolant f(sp, weps);
    CVec u(g.N);
    const double rl = 1.0 / std::sqrt(ms.lambda);
    const Cplx ph = std::exp(I * ms.gamma);
    for (int j = 0; j < g.N; ++j) u[j] = rl * f((g.y[j] - ms.x) / ms.lambda) * ph;
    return u;
}

//------------------------------------------------------------------------------
// run_blowup
//------------------------------------------------------------------------------
EvolutionTrace run_blowup(const Spectral& sp, const ProfileSet& ps, const CVec& u0, double beta,
                          const EvolveConfig& cfg) {
    EvolutionTrace trace;
    CVec u = u0;
    double t = 0, s = 0;

    Functionals f0 = functionals(sp, u, beta);
    ModulationState ms;
    ms.lambda = 1.0;
    if (cfg.modulation) {
        ms = decompose(sp, ps, u, ms);
        if (!ms.converged) ms.lambda = 1.0;
    }

    auto lambda_estimate = [&]() -> double {
        if (cfg.modulation && ms.converged) return ms.lambda;
        // raw-norm tracking fallback: lambda ~ (||D^{b/2}Q|| / ||D^{b/2}u||)^{2/b}
        WeightedNorms wq = weighted_norms(sp, ps.q, beta);
        WeightedNorms wu = weighted_norms(sp, u, beta);
        return std::pow(wq.hdot / wu.hdot, 1.0 / beta);
    };

    auto record = [&]() {
        TraceFrame fr;
        fr.t = t;
        fr.s = s;
        Functionals fu = functionals(sp, u, beta);
        WeightedNorms wu = weighted_norms(sp, u, beta);
        fr.mass = fu.mass;
        fr.energy = fu.energy;
        fr.momentum = fu.momentum;
        fr.hhalf = std::sqrt(wu.hdot);
        fr.sup = norm_sup(u);
        fr.phi = virial_phi(sp, u);
        fr.modulated = cfg.modulation && ms.converged;
        fr.lambda = lambda_estimate();
        fr.b = ms.b;
        fr.v = ms.v;
        fr.x = ms.x;
        fr.gamma = ms.gamma;
        fr.eps_l2 = ms.eps_l2;
        fr.orth_max = 0;
        for (double r : ms.orth_residuals) fr.orth_max = std::max(fr.orth_max, r);
        trace.frames.push_back(fr);
    };

    record();
    trace.termination = "t_max";
    bool modulation_abandoned = false;
    double lam_last_fit = ms.converged ? ms.lambda : 1.0;
    const int max_blocks = 4000000;
    for (int block = 0; block < max_blocks; ++block) {
        const double lam = lambda_estimate();
        if (lam < cfg.lambda_min) { trace.termination = "lambda_min"; break; }
        if (t >= cfg.t_max) { trace.termination = "t_max"; break; }
        if (sp.spectral_tail_fraction(u) > cfg.tail_threshold) {
            trace.termination = "under_resolved";
            break;
        }

        const double dt = cfg.dt0 * std::pow(lam, beta);
        bool blown = false;
        // Strang block with fused interior half-steps
        try {
            u = linear_flow(sp, u, beta, 0.5 * dt);
            for (int i = 0; i < cfg.refit_every; ++i) {
                nonlinear_phase(u, beta, dt);
                u = linear_flow(sp, u, beta, (i + 1 == cfg.refit_every) ? 0.5 * dt : dt);
                t += dt;
                s += dt / std::pow(lam, beta);
            }
            if (norm_sup(u) > cfg.amplitude_cutoff) blown = true;
        } catch (const NumericalError&) {
            blown = true;
        }
        if (blown) { trace.termination = "amplitude_cutoff"; break; }

        if (cfg.modulation && !modulation_abandoned) {
            ModulationState next = decompose(sp, ps, u, ms);
            ms.converged = false;
            // accept only sane fits: a stale warm start deep in the collapse
            // can converge to a spurious branch
            if (next.converged && std::abs(next.b) < 0.29 && std::abs(next.v) < 0.29 &&
                next.lambda > 0.4 * lam && next.lambda < 2.5 * lam) {
                ms = next;
                lam_last_fit = next.lambda;
            } else if (lambda_estimate() < 0.5 * lam_last_fit) {
                modulation_abandoned = true; // the modulated regime is left for good
            }
        }
        record();
    }

    // --- post-run diagnostics ---------------------------------------------
    const auto& fr = trace.frames;
    trace.mass_drift_per_time = 0;
    trace.energy_drift_per_time = 0;
    if (fr.size() >= 2 && fr.back().t > fr.front().t) {
        const double dtspan = fr.back().t - fr.front().t;
        trace.mass_drift_per_time = std::abs(fr.back().mass - f0.mass) / f0.mass / dtspan;
        trace.energy_drift_per_time =
            std::abs(fr.back().energy - f0.energy) / std::max(std::abs(f0.energy), 1e-30) / dtspan;
    }

    // b sign structure past the transient window
    {
        int sign = 0;
        for (const auto& f : fr) {
            if (!f.modulated || f.s < cfg.transient_s) continue;
            const int sgn = (f.b > 1e-5) ? 1 : (f.b < -1e-5 ? -1 : 0);
            if (sgn == 0) continue;
            if (sign != 0 && sgn != sign) {
                ++trace.b_sign_changes;
                trace.b_sign_change_s.push_back(f.s);
                trace.s_last_sign_change = f.s;
            }
            sign = sgn;
        }
        trace.b_positive_after = sign >= 0;
    }

    // lambda halving bound on the post-s0 window, and halving event log
    {
        const double s0 = std::max(trace.s_last_sign_change, cfg.transient_s);
        double running_min = 1e300;
        trace.lambda_halving_ok = true;
        for (const auto& f : fr) {
            if (f.s < s0) continue;
            running_min = std::min(running_min, f.lambda);
            if (f.lambda >= 2.0 * running_min) trace.lambda_halving_ok = false;
        }
        const double lam0 = fr.front().lambda;
        int n = 1;
        for (const auto& f : fr)
            while (f.lambda < lam0 * std::pow(2.0, -n)) {
                trace.lambda_halving_s.push_back(f.s);
                ++n;
            }
    }

    // blow-up time: linear extrapolation of lambda^b to zero over the last
    // decade of lambda, keeping the fit inside the collapse phase (the early
    // transient would bias the clock)
    double lam_max = 0;
    for (const auto& f : fr) lam_max = std::max(lam_max, f.lambda);
    const double lam_end = fr.back().lambda;
    double window_hi = std::min(10.0 * lam_end, 0.5 * lam_max);
    {
        int n = 0;
        for (const auto& f : fr) n += (f.lambda <= window_hi);
        if (n < 5) window_hi = 10.0 * lam_end;
    }
    {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int n = 0;
        for (const auto& f : fr) {
            if (f.lambda > window_hi) continue;
            const double X = f.t, Y = std::pow(f.lambda, beta);
            sx += X; sy += Y; sxx += X * X; sxy += X * Y;
            ++n;
        }
        if (n >= 2) {
            const double c = (n * sxy - sx * sy) / (n * sxx - sx * sx);
            const double a = (sy - c * sx) / n;
            if (c < 0) trace.T_estimate = -a / c;
        }
        if (trace.T_estimate <= fr.back().t) trace.T_estimate = 0;
    }

    // growth exponent of ||D^{b/2} u|| against (T - t), the a priori lower
    // bound margin, and the fitted prefactor of the rate-bound shape
    if (trace.T_estimate > 0) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int n = 0;
        double lb_min = 1e300, ub_c = 0;
        for (const auto& f : fr) {
            if (f.lambda > window_hi) continue;
            const double tau = trace.T_estimate - f.t;
            if (tau <= 0) continue;
            const double X = -std::log(tau), Y = std::log(f.hhalf);
            sx += X; sy += Y; sxx += X * X; sxy += X * Y;
            ++n;
            lb_min = std::min(lb_min, f.hhalf * std::pow(tau, 0.25 * beta));
            const double shape = std::sqrt(std::pow(std::abs(std::log(tau)), 0.125) / tau);
            if (shape > 0) ub_c = std::max(ub_c, f.hhalf / shape);
        }
        if (n >= 3) trace.growth_exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        trace.lower_bound_min = (n > 0) ? lb_min : 0;
        trace.upper_bound_cstar = ub_c;
    }
    return trace;
}

double virial_slope(const EvolutionTrace& trace, double t0, double t1) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& f : trace.frames) {
        if (f.t < t0 || f.t > t1) continue;
        sx += f.t; sy += f.phi; sxx += f.t * f.t; sxy += f.t * f.phi;
        ++n;
    }
    if (n < 2) throw NumericalError("virial_slope: not enough frames in window");
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace fnls
