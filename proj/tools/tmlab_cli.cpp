// tmlab: batch driver for the transfer-matrix contraction experiments.
// Subcommands construct an ExperimentConfig and hand it to run_experiment;
// `run` takes the same configuration from a key=value file instead.
//
// Exit codes: 0 success, 1 validation error, 2 partial failures (see the
// run's manifest.json).

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tmlab/experiments.hpp"

namespace {

using namespace tmlab;

struct CommonFlags {
    std::uint64_t seed = 1;
    int workers = 1;
    std::string out_dir;
    std::string sector = "0,even";
    std::string boundary = "pbc";
    std::vector<int> L_list;
    std::vector<double> h_I;
    int samples = 20;
};

void attach_common(CLI::App* cmd, CommonFlags& f, const std::string& default_out) {
    f.out_dir = default_out;
    cmd->add_option("--seed", f.seed, "master RNG seed (recorded in all outputs)");
    cmd->add_option("--workers", f.workers, "worker threads over independent grid points");
    cmd->add_option("--out-dir", f.out_dir, "output directory");
    cmd->add_option("--sector", f.sector, "symmetry sector as k,parity (parity: even|odd|none) or 'full'");
    cmd->add_option("--boundary", f.boundary, "pbc or obc")
        ->check(CLI::IsMember({"pbc", "obc"}));
}

void apply_common(const CommonFlags& f, ExperimentConfig& cfg) {
    cfg.seed = f.seed;
    cfg.workers = f.workers;
    cfg.out_dir = f.out_dir;
    cfg.base.boundary = f.boundary == "obc" ? Boundary::open : Boundary::periodic;
    if (!f.L_list.empty()) cfg.L_list = f.L_list;
    if (!f.h_I.empty()) cfg.h_I_grid = f.h_I;
    cfg.n_samples = f.samples;

    if (f.sector == "full") {
        cfg.use_sector = false;
    } else {
        const auto comma = f.sector.find(',');
        if (comma == std::string::npos)
            throw ConfigError("--sector expects k,parity or 'full'");
        cfg.use_sector = true;
        cfg.sector_k = std::stoi(f.sector.substr(0, comma));
        const std::string par = f.sector.substr(comma + 1);
        if (par == "even") cfg.sector_parity = Parity::even;
        else if (par == "odd") cfg.sector_parity = Parity::odd;
        else if (par == "none") cfg.sector_parity = Parity::none;
        else throw ConfigError("--sector parity must be even, odd or none");
    }
}

int finish(const RunOutcome& outcome) {
    for (const auto& [idx, msg] : outcome.point_errors)
        std::fprintf(stderr, "point %zu failed: %s\n", idx, msg.c_str());
    if (!outcome.summary.empty()) std::printf("%s\n", outcome.summary.c_str());
    std::printf("manifest: %s\n", outcome.manifest.string().c_str());
    return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"transfer-matrix contraction laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "run an experiment from a config file");
    run_cmd->add_option("config", config_path, "key=value config file")->required();
    bool dump_only = false;
    run_cmd->add_flag("--dump-config", dump_only, "print the resolved config and exit");

    ExperimentConfig cfg;

    auto* oracle_cmd = app.add_subcommand("oracle", "partition-function oracle vs matrix powers");
    CommonFlags oracle_flags;
    attach_common(oracle_cmd, oracle_flags, "runs/oracle");
    int max_bits = 16;
    oracle_cmd->add_option("--max-bits", max_bits, "guard on L*(t-1)");

    auto* spectrum_cmd = app.add_subcommand("spectrum", "spectral gaps over (L, h_I)");
    CommonFlags spec_flags;
    attach_common(spectrum_cmd, spec_flags, "runs/spectrum");
    spectrum_cmd->add_option("--L", spec_flags.L_list, "system sizes")->delimiter(',');
    spectrum_cmd->add_option("--h-i", spec_flags.h_I, "non-unitary field grid")->delimiter(',');

    auto* edge_cmd = app.add_subcommand("edge", "radial density, erfc edge fit and metrics");
    CommonFlags edge_flags;
    attach_common(edge_cmd, edge_flags, "runs/edge");
    edge_cmd->add_option("--L", edge_flags.L_list, "system sizes")->delimiter(',');
    edge_cmd->add_option("--h-i", edge_flags.h_I, "non-unitary field grid")->delimiter(',');
    edge_cmd->add_option("--draws", edge_flags.samples, "ensemble draws per point");
    double edge_mean = M_PI / 6.0, edge_sigma = M_PI / 60.0;
    edge_cmd->add_option("--mean", edge_mean, "h_R ensemble mean");
    edge_cmd->add_option("--sigma", edge_sigma, "h_R ensemble standard deviation");
    int edge_bins = 0;
    edge_cmd->add_option("--bins", edge_bins, "histogram bins (0 = Freedman-Diaconis)");

    auto* evolve_cmd = app.add_subcommand("evolve", "entropy of evolved row states");
    CommonFlags evolve_flags;
    attach_common(evolve_cmd, evolve_flags, "runs/evolve");
    evolve_cmd->add_option("--L", evolve_flags.L_list, "system sizes")->delimiter(',');
    evolve_cmd->add_option("--h-i", evolve_flags.h_I, "non-unitary field grid")->delimiter(',');
    evolve_cmd->add_option("--samples", evolve_flags.samples, "initial states per point");
    double t_factor = 4.0;
    int t_steps = 0;
    std::vector<double> renyi;
    evolve_cmd->add_option("--t-factor", t_factor, "evolution time = round(t_factor * L)");
    evolve_cmd->add_option("--t-steps", t_steps, "explicit step count (overrides --t-factor)");
    int record_every = 0;
    evolve_cmd->add_option("--record-every", record_every,
                           "emit per-trajectory time series every N steps (0 = final only)");
    evolve_cmd->add_option("--renyi", renyi, "extra Renyi indices")->delimiter(',');
    bool mutual = false;
    evolve_cmd->add_flag("--mutual-info", mutual, "record antipodal mutual information instead");
    std::string disorder_kind = "none";
    double disorder_mean = M_PI / 6.0, disorder_sigma = 0.0;
    evolve_cmd->add_option("--disorder", disorder_kind, "none | hr_scalar | hr_site")
        ->check(CLI::IsMember({"none", "hr_scalar", "hr_site"}));
    evolve_cmd->add_option("--disorder-mean", disorder_mean, "disordered field mean");
    evolve_cmd->add_option("--disorder-sigma", disorder_sigma, "disordered field std dev");

    auto* purify_cmd = app.add_subcommand("purify", "reference-qubit purification");
    CommonFlags purify_flags;
    attach_common(purify_cmd, purify_flags, "runs/purify");
    purify_cmd->add_option("--L", purify_flags.L_list, "system sizes")->delimiter(',');
    purify_cmd->add_option("--h-i", purify_flags.h_I, "non-unitary field grid")->delimiter(',');
    purify_cmd->add_option("--pairs", purify_flags.samples, "orthogonal pairs per point");
    int purify_tmax = 0;
    double purify_tfactor = 0.5;
    std::vector<double> eps_list = {1e-1, 1e-2, 1e-3};
    purify_cmd->add_option("--t-max", purify_tmax, "steps to evolve (overrides --t-factor)");
    purify_cmd->add_option("--t-factor", purify_tfactor, "steps = round(t_factor * L)");
    purify_cmd->add_option("--eps", eps_list, "threshold list for t_eps")->delimiter(',');

    auto* meanfield_cmd = app.add_subcommand("meanfield", "self-consistent mean-field gap sweep");
    CommonFlags mf_flags;
    attach_common(meanfield_cmd, mf_flags, "runs/meanfield");
    meanfield_cmd->add_option("--h-i", mf_flags.h_I, "non-unitary field grid")->delimiter(',');
    meanfield_cmd->add_option("--exact-L", mf_flags.L_list, "sizes for the exact comparison")
        ->delimiter(',');

    auto* imps_cmd = app.add_subcommand("imps", "infinite-MPS contraction sweep");
    CommonFlags imps_flags;
    attach_common(imps_cmd, imps_flags, "runs/imps");
    imps_cmd->add_option("--h-i", imps_flags.h_I, "non-unitary field grid")->delimiter(',');
    std::vector<int> chi_list = {16, 32, 64};
    int imps_steps = 100;
    double imps_theta = 1.0, imps_phi = 0.7;
    imps_cmd->add_option("--chi", chi_list, "bond dimensions")->delimiter(',');
    imps_cmd->add_option("--steps", imps_steps, "MPO applications");
    imps_cmd->add_option("--theta", imps_theta, "initial Bloch polar angle");
    imps_cmd->add_option("--phi", imps_phi, "initial Bloch azimuthal angle");

    auto* collapse_cmd = app.add_subcommand("collapse", "finite-size scaling collapse of a sweep");
    CommonFlags collapse_flags;
    attach_common(collapse_cmd, collapse_flags, "runs/collapse");
    std::string input_csv;
    collapse_cmd->add_option("input", input_csv, "entropy_mean.csv from an entropy sweep")
        ->required();
    std::vector<double> hc_range = {0.05, 0.30}, nu_range = {0.3, 2.0};
    int bootstrap = 20;
    collapse_cmd->add_option("--hc-range", hc_range, "h_Ic search range")->delimiter(',');
    collapse_cmd->add_option("--nu-range", nu_range, "nu search range")->delimiter(',');
    collapse_cmd->add_option("--bootstrap", bootstrap, "bootstrap resamples for error bars");

    auto* plot_cmd = app.add_subcommand("plot", "render a CSV as an SVG line plot");
    std::string plot_csv, plot_x = "h_I", plot_out = "plot.svg";
    std::vector<std::string> plot_y;
    std::string plot_group;
    plot_cmd->add_option("input", plot_csv, "CSV file")->required();
    plot_cmd->add_option("--x", plot_x, "x column");
    plot_cmd->add_option("--y", plot_y, "y columns")->delimiter(',');
    plot_cmd->add_option("--group", plot_group, "split series by this column (e.g. L)");
    plot_cmd->add_option("-o,--out", plot_out, "output SVG path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            cfg = parse_config_file(config_path);
            validate_config(cfg);
            if (dump_only) {
                std::cout << dump_resolved_config(cfg);
                return 0;
            }
            return finish(run_experiment(cfg));
        }
        if (oracle_cmd->parsed()) {
            cfg.kind = ExperimentKind::oracle_check;
            cfg.base.h_R = M_PI / 6.0;
            apply_common(oracle_flags, cfg);
            cfg.oracle_max_bits = max_bits;
            return finish(run_experiment(cfg));
        }
        if (spectrum_cmd->parsed()) {
            cfg.kind = ExperimentKind::spectrum_gap;
            cfg.base.h_R = M_PI / 6.0;
            cfg.L_list = {10, 12};
            cfg.h_I_grid = {0.02, 0.1, 0.2, 0.3, 0.4};
            apply_common(spec_flags, cfg);
            return finish(run_experiment(cfg));
        }
        if (edge_cmd->parsed()) {
            cfg.kind = ExperimentKind::edge_profile;
            cfg.L_list = {10, 12};
            cfg.h_I_grid = {0.01};
            cfg.n_samples = 100;
            apply_common(edge_flags, cfg);
            cfg.disorder = DisorderKind::hr_scalar;
            cfg.disorder_mean = edge_mean;
            cfg.disorder_sigma = edge_sigma;
            cfg.bins = edge_bins;
            return finish(run_experiment(cfg));
        }
        if (evolve_cmd->parsed()) {
            cfg.kind = mutual ? ExperimentKind::mutual_info : ExperimentKind::entropy_sweep;
            cfg.base.h_R = M_PI / 6.0;
            cfg.L_list = {12};
            cfg.h_I_grid = {0.02, 0.1, 0.2, 0.4};
            apply_common(evolve_flags, cfg);
            cfg.t_factor = t_factor;
            cfg.t_steps = t_steps;
            cfg.record_every = record_every;
            cfg.renyi_indices = renyi;
            if (disorder_kind == "hr_scalar") cfg.disorder = DisorderKind::hr_scalar;
            if (disorder_kind == "hr_site") cfg.disorder = DisorderKind::hr_site;
            cfg.disorder_mean = disorder_mean;
            cfg.disorder_sigma = disorder_sigma;
            return finish(run_experiment(cfg));
        }
        if (purify_cmd->parsed()) {
            cfg.kind = ExperimentKind::purification;
            cfg.base.h_R = M_PI / 6.0;
            cfg.L_list = {12};
            cfg.h_I_grid = {0.01, 0.1, 0.4};
            apply_common(purify_flags, cfg);
            cfg.t_steps = purify_tmax;
            cfg.t_factor = purify_tfactor;
            cfg.eps_list = eps_list;
            return finish(run_experiment(cfg));
        }
        if (meanfield_cmd->parsed()) {
            cfg.kind = ExperimentKind::meanfield_compare;
            cfg.base.h_R = M_PI / 6.0;
            cfg.L_list = {12};
            cfg.h_I_grid = {0.1, 0.2, 0.3, 0.4, 0.5};
            apply_common(mf_flags, cfg);
            return finish(run_experiment(cfg));
        }
        if (imps_cmd->parsed()) {
            cfg.kind = ExperimentKind::imps_sweep;
            cfg.base.h_R = M_PI / 6.0;
            cfg.L_list = {12};  // unused by the infinite chain, kept for the echo
            cfg.h_I_grid = {0.05, 0.1, 0.2, 0.3};
            apply_common(imps_flags, cfg);
            cfg.chi_list = chi_list;
            cfg.imps_steps = imps_steps;
            cfg.imps_theta = imps_theta;
            cfg.imps_phi = imps_phi;
            return finish(run_experiment(cfg));
        }
        if (collapse_cmd->parsed()) {
            cfg.kind = ExperimentKind::collapse;
            cfg.L_list = {8, 10, 12};
            cfg.h_I_grid = {0.1};
            apply_common(collapse_flags, cfg);
            cfg.input_csv = input_csv;
            if (hc_range.size() == 2) {
                cfg.hc_min = hc_range[0];
                cfg.hc_max = hc_range[1];
            }
            if (nu_range.size() == 2) {
                cfg.nu_min = nu_range[0];
                cfg.nu_max = nu_range[1];
            }
            cfg.bootstrap = bootstrap;
            return finish(run_experiment(cfg));
        }
        if (plot_cmd->parsed()) {
            const CsvTable t = read_csv(plot_csv);
            const int cx = t.column_index(plot_x);
            if (cx < 0) throw ConfigError("no column '" + plot_x + "' in " + plot_csv);
            if (plot_y.empty())
                for (const auto& c : t.columns)
                    if (c != plot_x) {
                        plot_y.push_back(c);
                        break;
                    }
            SvgPlot plot(plot_csv, plot_x, plot_y.size() == 1 ? plot_y[0] : "value");
            const int cg = plot_group.empty() ? -1 : t.column_index(plot_group);
            for (const auto& ycol : plot_y) {
                const int cy = t.column_index(ycol);
                if (cy < 0) throw ConfigError("no column '" + ycol + "' in " + plot_csv);
                if (cg < 0) {
                    SvgSeries s;
                    s.label = ycol;
                    for (const auto& row : t.rows) {
                        s.x.push_back(row[cx]);
                        s.y.push_back(row[cy]);
                    }
                    plot.add(std::move(s));
                } else {
                    std::set<double> groups;
                    for (const auto& row : t.rows) groups.insert(row[cg]);
                    for (double gval : groups) {
                        SvgSeries s;
                        s.label = ycol + " " + plot_group + "=" + format_double(gval);
                        for (const auto& row : t.rows)
                            if (row[cg] == gval) {
                                s.x.push_back(row[cx]);
                                s.y.push_back(row[cy]);
                            }
                        plot.add(std::move(s));
                    }
                }
            }
            plot.write(plot_out);
            std::printf("wrote %s\n", plot_out.c_str());
            return 0;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
