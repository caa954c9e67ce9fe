#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>

#include "tmlab/experiments.hpp"

using namespace tmlab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "tmlab_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("config files parse into validated configs") {
    const std::string text = R"(
[experiment]
kind = entropy_sweep
out_dir = runs/demo
seed = 42
workers = 2
samples = 8

[model]
h_R = 0.5235987755982988

[sweep]
L = 8,10
h_I = 0.05, 0.2

[evolve]
t_factor = 2
)";
    const ExperimentConfig cfg = parse_config_text(text);
    CHECK(cfg.kind == ExperimentKind::entropy_sweep);
    CHECK(cfg.seed == 42);
    CHECK(cfg.n_samples == 8);
    CHECK(cfg.L_list == std::vector<int>{8, 10});
    CHECK(cfg.h_I_grid == std::vector<double>{0.05, 0.2});
    CHECK(cfg.base.J == Approx(M_PI / 4.0));
    CHECK(cfg.base.g == Approx(-M_PI / 4.0));
    CHECK_NOTHROW(validate_config(cfg));

    SECTION("resolved dump round-trips") {
        const ExperimentConfig again = parse_config_text(dump_resolved_config(cfg));
        CHECK(again.L_list == cfg.L_list);
        CHECK(again.h_I_grid == cfg.h_I_grid);
        CHECK(again.seed == cfg.seed);
        CHECK(again.t_factor == cfg.t_factor);
    }
}

TEST_CASE("config validation rejects bad input") {
    SECTION("unknown keys and sections") {
        CHECK_THROWS_AS(parse_config_text("[nope]\nx = 1\n"), ConfigError);
        CHECK_THROWS_AS(parse_config_text("[model]\nbogus = 1\n"), ConfigError);
        CHECK_THROWS_AS(parse_config_text("[model]\nJ = sideways\n"), ConfigError);
    }
    SECTION("empty sweep grid fails before any compute") {
        ExperimentConfig cfg;
        cfg.h_I_grid.clear();
        CHECK_THROWS_AS(validate_config(cfg), ConfigError);
    }
    SECTION("mutual info needs 6 | L") {
        ExperimentConfig cfg;
        cfg.kind = ExperimentKind::mutual_info;
        cfg.L_list = {10};
        CHECK_THROWS_AS(validate_config(cfg), ConfigError);
    }
    SECTION("sectors and open boundaries are incompatible") {
        ExperimentConfig cfg;
        cfg.base.boundary = Boundary::open;
        CHECK_THROWS_AS(validate_config(cfg), ConfigError);
    }
}

TEST_CASE("oracle check experiment passes and writes a summary") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::oracle_check;
    cfg.base.h_R = M_PI / 6.0;
    cfg.oracle_max_bits = 8;
    cfg.out_dir = fresh_dir("oracle").string();
    const RunOutcome out = run_experiment(cfg);
    CHECK(out.exit_code == 0);
    CHECK(fs::exists(out.manifest));
    CHECK(out.summary.find("worst_rel_err") != std::string::npos);
}

TEST_CASE("identical config and seed give identical CSV bytes") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::entropy_sweep;
    cfg.base.h_R = M_PI / 6.0;
    cfg.L_list = {8};
    cfg.h_I_grid = {0.1, 0.3};
    cfg.n_samples = 4;
    cfg.t_factor = 2.0;
    cfg.seed = 77;

    cfg.out_dir = fresh_dir("det_a").string();
    run_experiment(cfg);
    const std::string a = slurp(fs::path(cfg.out_dir) / "entropy_mean.csv");

    cfg.out_dir = fresh_dir("det_b").string();
    run_experiment(cfg);
    const std::string b = slurp(fs::path(cfg.out_dir) / "entropy_mean.csv");
    CHECK(a == b);

    SECTION("worker count does not change the numbers") {
        cfg.workers = 2;
        cfg.out_dir = fresh_dir("det_c").string();
        run_experiment(cfg);
        const std::string c = slurp(fs::path(cfg.out_dir) / "entropy_mean.csv");
        CHECK(c == a);
    }
}

TEST_CASE("sigma = 0 disorder reproduces the clean ensemble") {
    ExperimentConfig clean;
    clean.kind = ExperimentKind::entropy_sweep;
    clean.base.h_R = M_PI / 6.0;
    clean.L_list = {8};
    clean.h_I_grid = {0.2};
    clean.n_samples = 4;
    clean.t_factor = 2.0;
    clean.seed = 5;
    clean.out_dir = fresh_dir("clean").string();
    run_experiment(clean);

    ExperimentConfig noisy = clean;
    noisy.disorder = DisorderKind::hr_site;
    noisy.disorder_mean = M_PI / 6.0;
    noisy.disorder_sigma = 0.0;
    noisy.out_dir = fresh_dir("noisy").string();
    run_experiment(noisy);

    const CsvTable a = read_csv(fs::path(clean.out_dir) / "entropy_mean.csv");
    const CsvTable b = read_csv(fs::path(noisy.out_dir) / "entropy_mean.csv");
    REQUIRE(a.rows.size() == b.rows.size());
    const int col = a.column_index("mean_S_half");
    CHECK(a.rows[0][col] == Approx(b.rows[0][col]).margin(1e-12));
}

TEST_CASE("scaling collapse recovers synthetic critical parameters") {
    // S_L(h) = 2 + tanh((h - h_c) L^{1/nu}) with (h_c, nu) = (0.15, 0.8)
    const double hc = 0.15, nu = 0.8;
    std::vector<CollapseSeries> series;
    for (int L : {8, 12, 16, 24}) {
        CollapseSeries s;
        s.L = L;
        for (double h = 0.02; h <= 0.401; h += 0.02) {
            s.h.push_back(h);
            s.s.push_back(2.0 + std::tanh((h - hc) * std::pow(double(L), 1.0 / nu)));
        }
        series.push_back(std::move(s));
    }
    const CollapseFit fit = scaling_collapse(series, 0.05, 0.30, 0.3, 2.0);
    REQUIRE(fit.ok);
    CHECK(std::abs(fit.h_c - hc) / hc < 0.05);
    CHECK(std::abs(fit.nu - nu) / nu < 0.05);

    SECTION("permuting the input order changes nothing") {
        std::vector<CollapseSeries> shuffled = {series[2], series[0], series[3], series[1]};
        const CollapseFit fit2 = scaling_collapse(shuffled, 0.05, 0.30, 0.3, 2.0);
        REQUIRE(fit2.ok);
        CHECK(fit2.h_c == Approx(fit.h_c).margin(1e-12));
        CHECK(fit2.nu == Approx(fit.nu).margin(1e-12));
    }
    SECTION("disjoint rescaled supports fail with a diagnostic") {
        std::vector<CollapseSeries> bad;
        for (int i = 0; i < 3; ++i) {
            CollapseSeries s;
            s.L = 8 + 2 * i;
            // series living on disjoint h windows cannot overlap after rescaling
            for (double h = 10.0 * i + 1.0; h < 10.0 * i + 1.2; h += 0.05) {
                s.h.push_back(h);
                s.s.push_back(h);
            }
            bad.push_back(std::move(s));
        }
        const CollapseFit fit3 = scaling_collapse(bad, 0.05, 0.30, 0.3, 2.0);
        CHECK_FALSE(fit3.ok);
        CHECK_FALSE(fit3.message.empty());
    }
}

TEST_CASE("entropy sweep emits mean, samples, trajectories and plot files") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::entropy_sweep;
    cfg.base.h_R = M_PI / 6.0;
    cfg.L_list = {8};
    cfg.h_I_grid = {0.1};
    cfg.n_samples = 3;
    cfg.t_factor = 2.0;
    cfg.record_every = 4;
    cfg.renyi_indices = {0.5};
    cfg.out_dir = fresh_dir("files").string();
    const RunOutcome out = run_experiment(cfg);
    CHECK(out.exit_code == 0);
    CHECK(fs::exists(fs::path(cfg.out_dir) / "entropy_mean.csv"));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "entropy_samples.csv"));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "entropy.svg"));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "manifest.json"));

    const CsvTable mean = read_csv(fs::path(cfg.out_dir) / "entropy_mean.csv");
    CHECK(mean.column_index("mean_S_renyi_0.5") >= 0);
    CHECK(mean.header_echo.count("J") == 1);
    CHECK(mean.header_echo.count("seed") == 1);
    REQUIRE(mean.rows.size() == 1);
    CHECK(mean.rows[0][mean.column_index("n")] == 3.0);

    // time series at t = 4, 8, 12, 16 for each of the three trajectories
    const CsvTable traj = read_csv(fs::path(cfg.out_dir) / "entropy_trajectories.csv");
    CHECK(traj.rows.size() == 12);
    const int tcol = traj.column_index("t");
    const int scol = traj.column_index("S_half");
    REQUIRE(tcol >= 0);
    REQUIRE(scol >= 0);
    CHECK(traj.rows.front()[tcol] == 4.0);
    // the final trajectory point agrees with the per-sample summary
    const CsvTable samples = read_csv(fs::path(cfg.out_dir) / "entropy_samples.csv");
    CHECK(traj.rows[3][scol] ==
          Approx(samples.rows[0][samples.column_index("S_half")]).margin(1e-12));
}

TEST_CASE("spectrum sweep exports raw spectra as (rho, phi) tables") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::spectrum_gap;
    cfg.base.h_R = M_PI / 6.0;
    cfg.L_list = {6};
    cfg.h_I_grid = {0.25};
    cfg.out_dir = fresh_dir("spectrum_files").string();
    const RunOutcome out = run_experiment(cfg);
    CHECK(out.exit_code == 0);
    const CsvTable gap = read_csv(fs::path(cfg.out_dir) / "gap.csv");
    REQUIRE(gap.rows.size() == 1);
    const CsvTable spec = read_csv(fs::path(cfg.out_dir) / "spectrum_L6_h0.25.csv");
    CHECK(spec.rows.size() == std::size_t(gap.rows[0][gap.column_index("dim")]));
    CHECK(spec.column_index("rho") == 0);
    CHECK(spec.column_index("phi") == 1);
    // gap.csv and the raw table agree on the leading magnitude
    CHECK(spec.rows[0][0] == Approx(gap.rows[0][gap.column_index("rho0")]).margin(1e-12));
}

TEST_CASE("collapse experiment consumes an entropy sweep output") {
    // synthetic entropy_mean.csv in the exact scaling form
    const fs::path dir = fresh_dir("collapse_io");
    {
        CsvWriter w(dir / "entropy_mean.csv", {"L", "h_I", "t", "mean_S_half", "stderr", "n"});
        for (int L : {8, 10, 12}) {
            for (double h = 0.02; h <= 0.401; h += 0.02) {
                const double s = 2.0 + std::tanh((h - 0.15) * std::pow(double(L), 1.0 / 0.8));
                w.row({cell(L), cell(h), cell(4 * L), cell(s), cell(0.0), cell(10)});
            }
        }
    }
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::collapse;
    cfg.input_csv = (dir / "entropy_mean.csv").string();
    cfg.out_dir = (dir / "fit").string();
    const RunOutcome out = run_experiment(cfg);
    CHECK(out.exit_code == 0);
    const CsvTable fit = read_csv(fs::path(cfg.out_dir) / "collapse.csv");
    REQUIRE(fit.rows.size() == 1);
    CHECK(std::abs(fit.rows[0][fit.column_index("h_Ic")] - 0.15) < 0.05 * 0.15);
    CHECK(std::abs(fit.rows[0][fit.column_index("nu")] - 0.8) < 0.05 * 0.8);
}
