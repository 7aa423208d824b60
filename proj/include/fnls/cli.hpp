//==============================================================================
// cli.hpp
// Run configuration, per-subcommand drivers and the run manifest. Every run
// writes a manifest.json (config echo, version, wall clock, per-stage
// residuals, produced files) into its output directory.
//==============================================================================
#pragma once

#include <string>
#include <vector>

namespace fnls {

inline constexpr const char* kVersion = "fnls 0.1.0";

struct RunConfig {
    std::string subcommand;
    std::vector<double> betas;
    double box = 0;   // 0: per-beta default (200 below beta=2, 64 at beta=2)
    int points = 0;   // 0: per-beta default (2^14 below beta=2, 2^12 at beta=2)
    double tol = 1e-11;
    std::string out_dir = "fnls_out";
    int workers = 1;
    unsigned long long seed = 12345;

    // profiles
    std::vector<double> b_grid;
    std::vector<double> v_grid;

    // evolve
    std::string init = "scaled:1.05";
    double t_max = 50.0;
    double dt0 = 1e-3;
    double lambda_min = 1e-3;
};

void default_grid(double beta, double* L, int* N);

int run_ground(const RunConfig& cfg);
int run_profiles(const RunConfig& cfg);
int run_spectral(const RunConfig& cfg);
int run_hardy(const RunConfig& cfg);
int run_evolve(const RunConfig& cfg);
int run_sweep(const RunConfig& cfg);

// Dispatch with validation; returns the process exit code (0 ok,
// 1 validation error, 2 numerical failure).
int dispatch(const RunConfig& cfg);

} // namespace fnls
