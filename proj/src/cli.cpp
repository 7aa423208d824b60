#include "fnls/cli.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <thread>

#include <json.hpp>

#include "fnls/dynamics.hpp"
#include "fnls/errors.hpp"
#include "fnls/grid.hpp"
#include "fnls/ground.hpp"
#include "fnls/linops.hpp"
#include "fnls/profile.hpp"
#include "fnls/spectral.hpp"

namespace fnls {

namespace fs = std::filesystem;
using nlohmann::json;

void default_grid(double beta, double* L, int* N) {
    if (beta >= 2.0) {
        *L = 64.0;
        *N = 4096;
    } else {
        *L = 200.0;
        *N = 16384;
    }
}

namespace {

struct Run {
    RunConfig cfg;
    json manifest;
    std::vector<std::string> files;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    explicit Run(const RunConfig& c) : cfg(c) {
        fs::create_directories(cfg.out_dir);
        manifest["version"] = kVersion;
        manifest["subcommand"] = cfg.subcommand;
        json conf;
        conf["betas"] = cfg.betas;
        conf["box"] = cfg.box;
        conf["points"] = cfg.points;
        conf["tol"] = cfg.tol;
        conf["out"] = cfg.out_dir;
        conf["workers"] = cfg.workers;
        conf["seed"] = cfg.seed;
        conf["init"] = cfg.init;
        conf["t_max"] = cfg.t_max;
        conf["dt0"] = cfg.dt0;
        conf["lambda_min"] = cfg.lambda_min;
        manifest["config"] = conf;
    }

    std::string path(const std::string& name) {
        files.push_back(name);
        return (fs::path(cfg.out_dir) / name).string();
    }

    void finish(int exit_code, const std::string& error = "") {
        manifest["files"] = files;
        manifest["exit_code"] = exit_code;
        if (!error.empty()) manifest["error"] = error;
        manifest["wall_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::ofstream os(fs::path(cfg.out_dir) / "manifest.json");
        os << manifest.dump(2) << "\n";
    }
};

void grid_for(const RunConfig& cfg, double beta, double* L, int* N) {
    default_grid(beta, L, N);
    if (cfg.box > 0) *L = cfg.box;
    if (cfg.points > 0) *N = cfg.points;
}

json ground_json(const GroundState& gs) {
    json j;
    j["beta"] = gs.beta;
    j["L"] = gs.grid->L;
    j["N"] = gs.grid->N;
    j["mass"] = gs.mass;
    j["energy"] = gs.energy;
    j["gn_constant"] = gs.gn_constant;
    j["decay_exponent"] = gs.decay_exponent;
    j["decay_reliable"] = gs.decay_reliable;
    j["decay_algebraic"] = gs.decay_algebraic;
    j["iterations"] = gs.iterations;
    j["residual"] = gs.residual_norm;
    return j;
}

Field real_field(GridPtr g, const Vec& v) {
    Field f;
    f.grid = std::move(g);
    f.v = v.cast<Cplx>();
    return f;
}

std::string beta_tag(double beta) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "beta_%.4f", beta);
    return buf;
}

} // namespace

//------------------------------------------------------------------------------
int run_ground(const RunConfig& cfg) {
    Run run(cfg);
    try {
        const double beta = cfg.betas.at(0);
        double L;
        int N;
        grid_for(cfg, beta, &L, &N);
        Spectral sp(make_grid(L, N));
        GroundState gs = solve_ground_state(sp, beta, cfg.tol);
        write_dump(run.path("ground.bin"), real_field(gs.grid, gs.q));
        write_csv(run.path("ground.csv"), real_field(gs.grid, gs.q));
        json diag = ground_json(gs);
        GnReport gn = gn_sharp_constant(sp, gs);
        diag["gn_identity_gap"] = gn.identity_gap;
        std::ofstream(run.path("ground.json")) << diag.dump(2) << "\n";
        run.manifest["residuals"]["ground"] = gs.residual_norm;
        run.finish(0);
        return 0;
    } catch (const ValidationError& e) {
        run.finish(1, e.what());
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        run.finish(2, e.what());
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

//------------------------------------------------------------------------------
int run_profiles(const RunConfig& cfg) {
    Run run(cfg);
    try {
        const double beta = cfg.betas.at(0);
        double L;
        int N;
        grid_for(cfg, beta, &L, &N);
        Spectral sp(make_grid(L, N));
        GroundState gs = solve_ground_state(sp, beta, cfg.tol);
        ProfileSet ps = build_profiles(sp, gs);

        const char* names[8] = {"S1", "S2", "S3", "S4", "G1", "G2", "F1", "F2"};
        const Vec* fields[8] = {&ps.S1, &ps.S2, &ps.S3, &ps.S4, &ps.G1, &ps.G2, &ps.F1, &ps.F2};
        for (int i = 0; i < 8; ++i)
            write_dump(run.path(std::string(names[i]) + ".bin"), real_field(ps.grid, *fields[i]));

        std::vector<double> bs = cfg.b_grid, vs = cfg.v_grid;
        if (bs.empty())
            for (double e = -3.0; e <= -1.49; e += 0.25) bs.push_back(std::pow(10.0, e));
        if (vs.empty())
            for (double e = -3.0; e <= -1.49; e += 0.25) vs.push_back(std::pow(10.0, e));
        SlopeFit fb = psi_slope_b(ps, sp, bs);
        SlopeFit fv = psi_slope_v(ps, sp, vs);
        EnergyExpansion en = energy_expansion(ps, sp);
        VirialPairing vp = virial_pairing(ps, sp);

        json rep;
        rep["beta"] = beta;
        rep["solvability_residuals"] = ps.solvability_residuals;
        rep["c0_formula"] = ps.c0;
        rep["c0_gradq"] = ps.c0_gradq;
        rep["c0_fit"] = en.c0_fit;
        rep["h_variant_gap"] = ps.h_variant_gap;
        rep["h_taylor_oracle_gap"] = ps.h_taylor_oracle_gap;
        rep["psi_baseline_l2"] = ps.psi_baseline_l2;
        rep["slope_b"] = fb.slope;
        rep["slope_b_plain"] = fb.slope_plain;
        rep["slope_b_floor"] = fb.floor;
        rep["slope_v"] = fv.slope;
        rep["slope_v_plain"] = fv.slope_plain;
        rep["virial_pairing_fitted"] = vp.fitted;
        rep["virial_pairing_predicted"] = vp.predicted;
        json parsed;
        for (const auto& st : ps.solve_stats) {
            json s;
            s["rel_residual"] = st.rel_residual;
            s["iterations"] = st.iterations;
            s["rhs_kernel_fraction"] = st.rhs_kernel_fraction;
            parsed.push_back(s);
        }
        rep["solves"] = parsed;
        std::ofstream(run.path("profiles.json")) << rep.dump(2) << "\n";

        std::FILE* fp = std::fopen(run.path("psi_slopes.csv").c_str(), "w");
        std::fprintf(fp, "kind,x,psi_l2\n");
        for (auto& [x, y] : fb.samples) std::fprintf(fp, "b,%.17g,%.17g\n", x, y);
        for (auto& [x, y] : fv.samples) std::fprintf(fp, "v,%.17g,%.17g\n", x, y);
        std::fclose(fp);

        run.manifest["residuals"]["solvability_max"] =
            *std::max_element(ps.solvability_residuals.begin(), ps.solvability_residuals.end());
        run.finish(0);
        return 0;
    } catch (const ValidationError& e) {
        run.finish(1, e.what());
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        run.finish(2, e.what());
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

//------------------------------------------------------------------------------
namespace {

json spectral_one_beta(const RunConfig& cfg, double beta, unsigned long long seed) {
    double L;
    int N;
    grid_for(cfg, beta, &L, &N);
    Spectral sp(make_grid(L, N));
    GroundState gs = solve_ground_state(sp, beta, cfg.tol);
    ProfileSet ps = build_profiles(sp, gs);

    DeltaReport d2 = spectral_delta(sp, gs, ps.G1, 2048);
    DeltaReport d1 = spectral_delta(sp, gs, ps.G1, 1024);
    IndexReport idx = index_counts(sp, gs, 1024);
    PhiReport phi = phi_quantities(sp, gs);

    // box-doubling control for the phi quantities
    Spectral sp2(make_grid(2 * L, 2 * N));
    GroundState gs2 = solve_ground_state(sp2, beta, cfg.tol);
    PhiReport phi2 = phi_quantities(sp2, gs2);

    double hardy = hardy_constant(sp, beta);

    // seeded random-field check of the Hardy inequality with the computed C
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    int hardy_violations = 0;
    const Grid& g = sp.grid();
    for (int trial = 0; trial < 100; ++trial) {
        const double width = 0.5 + 40.0 * std::generate_canonical<double, 53>(rng);
        const double center = (2.0 * std::generate_canonical<double, 53>(rng) - 1.0) * L / 4;
        Vec f(g.N);
        for (int j = 0; j < g.N; ++j) {
            const double z = (g.y[j] - center) / width;
            f[j] = std::exp(-0.5 * z * z) * (1.0 + 0.3 * gauss(rng) * std::cos(g.y[j]));
        }
        WeightedNorms w = weighted_norms(sp, f, beta);
        if (w.polyw > hardy * (w.hdot + w.expw) * (1.0 + 1e-8)) ++hardy_violations;
    }

    json j;
    j["beta"] = beta;
    j["L"] = L;
    j["N"] = N;
    j["delta"] = d2.delta;
    j["delta_sectors"] = {d2.e1_even, d2.e1_odd, d2.e2_even, d2.e2_odd};
    j["delta_n1024"] = d1.delta;
    j["delta_certificate_gap"] = d2.certificate_gap;
    j["delta_constraint_residual"] = d2.constraint_residual;
    j["index_hbar1"] = {idx.hbar1_even, idx.hbar1_odd};
    j["index_hbar2"] = {idx.hbar2_even, idx.hbar2_odd};
    j["index_raw_hbar1"] = {idx.raw1_even, idx.raw1_odd};
    j["index_raw_hbar2"] = {idx.raw2_even, idx.raw2_odd};
    j["index_stable"] = idx.stable;
    j["q1"] = phi.q1;
    j["q2"] = phi.q2;
    j["q3"] = phi.q3;
    j["q1_boxdoubled"] = phi2.q1;
    j["q2_boxdoubled"] = phi2.q2;
    j["q3_boxdoubled"] = phi2.q3;
    j["hardy_c"] = hardy;
    j["hardy_violations"] = hardy_violations;
    j["ground_residual"] = gs.residual_norm;
    return j;
}

void write_spectral_csv(const std::string& path, const std::vector<json>& rows) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    std::fprintf(fp, "beta,delta,idx1_even,idx1_odd,idx2_even,idx2_odd,q1,q2,q3,hardy_c\n");
    for (const auto& r : rows) {
        if (r.contains("error")) continue;
        std::fprintf(fp, "%.17g,%.17g,%d,%d,%d,%d,%.17g,%.17g,%.17g,%.17g\n",
                     r["beta"].get<double>(), r["delta"].get<double>(),
                     r["index_hbar1"][0].get<int>(), r["index_hbar1"][1].get<int>(),
                     r["index_hbar2"][0].get<int>(), r["index_hbar2"][1].get<int>(),
                     r["q1"].get<double>(), r["q2"].get<double>(), r["q3"].get<double>(),
                     r["hardy_c"].get<double>());
    }
    std::fclose(fp);
}

} // namespace

int run_spectral(const RunConfig& cfg) {
    Run run(cfg);
    try {
        std::vector<json> rows;
        for (double beta : cfg.betas) {
            json row = spectral_one_beta(cfg, beta, cfg.seed);
            std::ofstream(run.path("spectral_" + beta_tag(beta) + ".json")) << row.dump(2) << "\n";
            rows.push_back(std::move(row));
        }
        write_spectral_csv(run.path("spectral.csv"), rows);
        run.finish(0);
        return 0;
    } catch (const ValidationError& e) {
        run.finish(1, e.what());
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        run.finish(2, e.what());
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

//------------------------------------------------------------------------------
int run_hardy(const RunConfig& cfg) {
    Run run(cfg);
    try {
        std::FILE* fp = std::fopen(run.path("hardy.csv").c_str(), "w");
        std::fprintf(fp, "beta,L,N,C,C_doubled,rel_drift\n");
        for (double beta : cfg.betas) {
            double L;
            int N;
            grid_for(cfg, beta, &L, &N);
            Spectral sp(make_grid(L, N));
            Spectral sp2(make_grid(2 * L, 2 * N));
            const double c = hardy_constant(sp, beta);
            const double c2 = hardy_constant(sp2, beta);
            std::fprintf(fp, "%.17g,%.17g,%d,%.17g,%.17g,%.17g\n", beta, L, N, c, c2,
                         std::abs(c2 - c) / c);
        }
        std::fclose(fp);
        run.finish(0);
        return 0;
    } catch (const ValidationError& e) {
        run.finish(1, e.what());
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        run.finish(2, e.what());
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

//------------------------------------------------------------------------------
int run_evolve(const RunConfig& cfg) {
    Run run(cfg);
    try {
        const double beta = cfg.betas.at(0);
        double L;
        int N;
        grid_for(cfg, beta, &L, &N);
        Spectral sp(make_grid(L, N));
        GroundState gs = solve_ground_state(sp, beta, cfg.tol);
        ProfileSet ps = build_profiles(sp, gs);

        CVec u0;
        if (cfg.init == "ground") {
            u0 = gs.q.cast<Cplx>();
        } else if (cfg.init.rfind("scaled:", 0) == 0) {
            const double a = std::stod(cfg.init.substr(7));
            u0 = (a * gs.q).cast<Cplx>();
        } else if (cfg.init.rfind("file:", 0) == 0) {
            Field f = read_dump(cfg.init.substr(5));
            if (f.grid->N != N || f.grid->L != L)
                throw ValidationError("evolve: initial data grid mismatch");
            u0 = f.v;
        } else {
            throw ValidationError("evolve: unknown init " + cfg.init);
        }

        Functionals f0 = functionals(sp, u0, beta);
        run.manifest["initial"]["mass"] = f0.mass;
        run.manifest["initial"]["energy"] = f0.energy;
        run.manifest["initial"]["mass_excess"] = f0.mass / gs.mass - 1.0;
        if (f0.energy >= 0)
            std::cerr << "[fnls] note: initial energy is nonnegative; outside the "
                         "blow-up regime\n";

        EvolveConfig ecfg;
        ecfg.dt0 = cfg.dt0;
        ecfg.t_max = cfg.t_max;
        ecfg.lambda_min = cfg.lambda_min;
        EvolutionTrace tr = run_blowup(sp, ps, u0, beta, ecfg);

        std::FILE* fp = std::fopen(run.path("trace.csv").c_str(), "w");
        std::fprintf(fp, "t,s,lambda,b,v,x,gamma,hhalf,mass,energy,momentum,mass_drift,"
                         "energy_drift,momentum_drift,phi,eps_l2,orth_max,modulated\n");
        for (const auto& f : tr.frames)
            std::fprintf(fp,
                         "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                         "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                         f.t, f.s, f.lambda, f.b, f.v, f.x, f.gamma, f.hhalf, f.mass, f.energy,
                         f.momentum, f.mass / f0.mass - 1.0, f.energy - f0.energy,
                         f.momentum - f0.momentum, f.phi, f.eps_l2, f.orth_max,
                         f.modulated ? 1 : 0);
        std::fclose(fp);

        json sum;
        sum["termination"] = tr.termination;
        sum["frames"] = tr.frames.size();
        sum["T_estimate"] = tr.T_estimate;
        sum["b_sign_changes"] = tr.b_sign_changes;
        sum["b_positive_after"] = tr.b_positive_after;
        sum["b_sign_change_s"] = tr.b_sign_change_s;
        sum["lambda_halving_ok"] = tr.lambda_halving_ok;
        sum["lambda_halving_s"] = tr.lambda_halving_s;
        sum["growth_exponent"] = tr.growth_exponent;
        sum["lower_bound_min"] = tr.lower_bound_min;
        sum["upper_bound_cstar"] = tr.upper_bound_cstar;
        sum["mass_drift_per_time"] = tr.mass_drift_per_time;
        sum["energy_drift_per_time"] = tr.energy_drift_per_time;
        std::ofstream(run.path("summary.json")) << sum.dump(2) << "\n";
        run.finish(0);
        return 0;
    } catch (const ValidationError& e) {
        run.finish(1, e.what());
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        run.finish(2, e.what());
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

//------------------------------------------------------------------------------
int run_sweep(const RunConfig& cfg) {
    Run run(cfg);
    try {
        if (cfg.betas.empty()) throw ValidationError("sweep: beta list is empty");
        std::vector<json> rows(cfg.betas.size());
        std::vector<std::string> errors(cfg.betas.size());
        std::mutex io_mutex;

        int workers = cfg.workers;
        if (const char* env = std::getenv("FNLS_WORKERS")) workers = std::max(1, std::atoi(env));
        workers = std::max(1, std::min<int>(workers, (int)cfg.betas.size()));

        std::vector<std::thread> pool;
        std::atomic_size_t next{0};
        auto worker = [&]() {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= cfg.betas.size()) return;
                const double beta = cfg.betas[i];
                try {
                    RunConfig sub = cfg;
                    sub.out_dir = (fs::path(cfg.out_dir) / beta_tag(beta)).string();
                    fs::create_directories(sub.out_dir);
                    json row = spectral_one_beta(sub, beta, cfg.seed);
                    // profile-level aggregates for the sweep table
                    double L;
                    int N;
                    grid_for(sub, beta, &L, &N);
                    Spectral sp(make_grid(L, N));
                    GroundState gs = solve_ground_state(sp, beta, cfg.tol);
                    ProfileSet ps = build_profiles(sp, gs);
                    row["c0"] = ps.c0;
                    row["solvability_max"] = *std::max_element(ps.solvability_residuals.begin(),
                                                               ps.solvability_residuals.end());
                    SlopeFit fb = psi_slope_b(ps, sp, {1e-3, 3.16e-3, 1e-2, 3.16e-2});
                    row["slope_b"] = fb.slope;
                    std::lock_guard<std::mutex> lock(io_mutex);
                    std::ofstream((fs::path(sub.out_dir) / "report.json"))
                        << row.dump(2) << "\n";
                    rows[i] = std::move(row);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(io_mutex);
                    errors[i] = e.what();
                }
            }
        };
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();

        std::FILE* fp = std::fopen(run.path("sweep.csv").c_str(), "w");
        std::fprintf(fp, "beta,delta,idx1_even,idx1_odd,idx2_even,idx2_odd,q1,q2,q3,"
                         "hardy_c,c0,solvability_max,slope_b,status\n");
        for (size_t i = 0; i < cfg.betas.size(); ++i) {
            if (!errors[i].empty()) {
                std::fprintf(fp, "%.17g,,,,,,,,,,,,,failed\n", cfg.betas[i]);
                run.manifest["failures"][beta_tag(cfg.betas[i])] = errors[i];
                continue;
            }
            const json& r = rows[i];
            std::fprintf(fp,
                         "%.17g,%.17g,%d,%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                         "%.17g,ok\n",
                         r["beta"].get<double>(), r["delta"].get<double>(),
                         r["index_hbar1"][0].get<int>(), r["index_hbar1"][1].get<int>(),
                         r["index_hbar2"][0].get<int>(), r["index_hbar2"][1].get<int>(),
                         r["q1"].get<double>(), r["q2"].get<double>(), r["q3"].get<double>(),
                         r["hardy_c"].get<double>(), r["c0"].get<double>(),
                         r["solvability_max"].get<double>(), r["slope_b"].get<double>());
        }
        std::fclose(fp);
        run.finish(0);
        return 0;
    } catch (const ValidationError& e) {
        run.finish(1, e.what());
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        run.finish(2, e.what());
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

//------------------------------------------------------------------------------
int dispatch(const RunConfig& cfg) {
    try {
        if (cfg.betas.empty()) throw ValidationError("no beta given");
        for (double b : cfg.betas)
            if (!(b >= 1.0 && b <= 2.0))
                throw ValidationError("beta must lie in [1, 2]");
        if (cfg.box < 0 || (cfg.box > 0 && !(cfg.box > 0)))
            throw ValidationError("box must be positive");
        if (cfg.points != 0) make_grid(cfg.box > 0 ? cfg.box : 64.0, cfg.points); // validates
        if (!(cfg.tol > 0 && cfg.tol < 1)) throw ValidationError("tol must be in (0,1)");
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    if (cfg.subcommand == "ground") return run_ground(cfg);
    if (cfg.subcommand == "profiles") return run_profiles(cfg);
    if (cfg.subcommand == "spectral") return run_spectral(cfg);
    if (cfg.subcommand == "hardy") return run_hardy(cfg);
    if (cfg.subcommand == "evolve") return run_evolve(cfg);
    if (cfg.subcommand == "sweep") return run_sweep(cfg);
    std::cerr << "error: unknown subcommand " << cfg.subcommand << "\n";
    return 1;
}

} // namespace fnls
