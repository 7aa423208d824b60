// Command-line front end: ground / profiles / spectral / hardy / evolve / sweep.
#include <CLI11.hpp>

#include "fnls/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Pseudospectral toolkit for the L2-critical fractional NLS: ground states, "
                 "blow-up profiles, spectral-property certification and evolution"};
    app.set_config("--config", "", "configuration file (key = value sections)");
    app.require_subcommand(1);

    fnls::RunConfig cfg;
    double beta = 0;
    std::string beta_list;

    auto add_common = [&](CLI::App* sub, bool list_ok) {
        if (list_ok)
            sub->add_option("--beta-list", beta_list, "comma-separated list of beta values");
        sub->add_option("--beta", beta, "exponent of the fractional dispersion, in [1,2]");
        sub->add_option("--box", cfg.box, "half width L of the periodic box");
        sub->add_option("--points", cfg.points, "number of grid points (power of two)");
        sub->add_option("--tol", cfg.tol, "ground-state residual tolerance");
        sub->add_option("--out", cfg.out_dir, "output directory");
        sub->add_option("--workers", cfg.workers, "parallel jobs for sweeps");
        sub->add_option("--seed", cfg.seed, "seed for property-test field draws");
    };

    CLI::App* ground = app.add_subcommand("ground", "solve the ground state");
    add_common(ground, false);
    CLI::App* profiles = app.add_subcommand("profiles", "build the blow-up profile corrections");
    add_common(profiles, false);
    profiles->add_option("--b-grid", cfg.b_grid, "b values for the residual slope fit");
    profiles->add_option("--v-grid", cfg.v_grid, "v values for the residual slope fit");
    CLI::App* spectral = app.add_subcommand("spectral", "certify the spectral property");
    add_common(spectral, true);
    CLI::App* hardy = app.add_subcommand("hardy", "compute the Hardy-type constant");
    add_common(hardy, true);
    CLI::App* evolve = app.add_subcommand("evolve", "evolve the equation with modulation tracking");
    add_common(evolve, false);
    evolve->add_option("--init", cfg.init, "initial data: ground | scaled:A | file:PATH");
    evolve->add_option("--tmax", cfg.t_max, "final time");
    evolve->add_option("--dt0", cfg.dt0, "rescaled time step");
    evolve->add_option("--lambda-min", cfg.lambda_min, "stop once lambda falls below this");
    CLI::App* sweep = app.add_subcommand("sweep", "ground -> profiles -> spectral over a beta list");
    add_common(sweep, true);

    CLI11_PARSE(app, argc, argv);

    CLI::App* sub = app.get_subcommands().front();
    cfg.subcommand = sub->get_name();
    if (!beta_list.empty()) {
        std::stringstream ss(beta_list);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) cfg.betas.push_back(std::stod(tok));
    }
    if (beta > 0) cfg.betas.push_back(beta);

    return fnls::dispatch(cfg);
}
