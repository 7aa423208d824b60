#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fnls/cli.hpp"
#include "fnls/grid.hpp"

using namespace fnls;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct TmpDir {
    fs::path path;
    explicit TmpDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
    }
    ~TmpDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("ground subcommand writes diagnostics and a manifest") {
    TmpDir tmp("fnls_cli_ground");
    RunConfig cfg;
    cfg.subcommand = "ground";
    cfg.betas = {2.0};
    cfg.box = 64;
    cfg.points = 1024;
    cfg.out_dir = tmp.path.string();
    CHECK(dispatch(cfg) == 0);
    CHECK(fs::exists(tmp.path / "ground.json"));
    CHECK(fs::exists(tmp.path / "ground.bin"));
    CHECK(fs::exists(tmp.path / "ground.csv"));
    CHECK(fs::exists(tmp.path / "manifest.json"));

    auto manifest = nlohmann::json::parse(slurp(tmp.path / "manifest.json"));
    CHECK(manifest["exit_code"] == 0);
    // every output is referenced from the manifest
    for (const auto& name : {"ground.json", "ground.bin", "ground.csv"}) {
        bool found = false;
        for (const auto& f : manifest["files"]) found |= f.get<std::string>() == name;
        CHECK(found);
    }
    auto diag = nlohmann::json::parse(slurp(tmp.path / "ground.json"));
    CHECK(diag["residual"].get<double>() <= 1e-9);

    Field q = read_dump((tmp.path / "ground.bin").string());
    CHECK(q.grid->N == 1024);
}

TEST_CASE("validation failures exit with code 1") {
    TmpDir tmp("fnls_cli_bad");
    RunConfig cfg;
    cfg.subcommand = "ground";
    cfg.betas = {3.0};
    cfg.out_dir = tmp.path.string();
    CHECK(dispatch(cfg) == 1);

    cfg.betas = {};
    CHECK(dispatch(cfg) == 1);

    cfg.subcommand = "nonsense";
    cfg.betas = {2.0};
    CHECK(dispatch(cfg) == 1);
}

TEST_CASE("sweep emits one row per beta and is seed-deterministic") {
    TmpDir tmp("fnls_cli_sweep");
    RunConfig cfg;
    cfg.subcommand = "sweep";
    cfg.betas = {2.0};
    cfg.box = 48;
    cfg.points = 1024;
    cfg.out_dir = (tmp.path / "a").string();
    CHECK(dispatch(cfg) == 0);
    std::string csv_a = slurp(tmp.path / "a" / "sweep.csv");
    CHECK(csv_a.find("\n2,") != std::string::npos);

    cfg.out_dir = (tmp.path / "b").string();
    CHECK(dispatch(cfg) == 0);
    std::string csv_b = slurp(tmp.path / "b" / "sweep.csv");
    CHECK(csv_a == csv_b); // byte-identical rerun with the same seed
}

TEST_CASE("evolve subcommand writes a trace") {
    TmpDir tmp("fnls_cli_evolve");
    RunConfig cfg;
    cfg.subcommand = "evolve";
    cfg.betas = {2.0};
    cfg.box = 48;
    cfg.points = 1024;
    cfg.out_dir = tmp.path.string();
    cfg.init = "scaled:1.05";
    cfg.dt0 = 5e-3;
    cfg.t_max = 0.2;
    CHECK(dispatch(cfg) == 0);
    CHECK(fs::exists(tmp.path / "trace.csv"));
    auto summary = nlohmann::json::parse(slurp(tmp.path / "summary.json"));
    CHECK(summary.contains("termination"));
    std::string trace = slurp(tmp.path / "trace.csv");
    CHECK(trace.rfind("t,s,lambda,b,", 0) == 0);
}

TEST_CASE("spectral subcommand: one combined CSV row per beta") {
    TmpDir tmp("fnls_cli_spectral");
    RunConfig cfg;
    cfg.subcommand = "spectral";
    cfg.betas = {1.9, 1.95, 2.0};
    cfg.box = 48;
    cfg.points = 512;
    cfg.out_dir = tmp.path.string();
    CHECK(dispatch(cfg) == 0);
    std::string csv = slurp(tmp.path / "spectral.csv");
    int rows = 0;
    for (char ch : csv) rows += (ch == '\n');
    CHECK(rows == 4); // header + 3 rows
    CHECK(fs::exists(tmp.path / "spectral_beta_1.9500.json"));
}
