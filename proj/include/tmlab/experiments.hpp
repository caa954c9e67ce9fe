#pragma once

// Ensemble orchestration: a flat key=value config schema, a dispatcher that
// maps experiment kinds onto the core modules over an (L, h_I, sample) grid,
// disorder averaging, the finite-size scaling collapse, and persistence
// (CSV + JSON manifest + SVG) for every run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tmlab/boundary_mps.hpp"
#include "tmlab/diagnostics.hpp"
#include "tmlab/edge.hpp"
#include "tmlab/io.hpp"
#include "tmlab/meanfield.hpp"
#include "tmlab/pool.hpp"
#include "tmlab/spectral.hpp"

namespace tmlab {

enum class ExperimentKind {
    entropy_sweep,
    mutual_info,
    purification,
    spectrum_gap,
    edge_profile,
    meanfield_compare,
    imps_sweep,
    collapse,
    oracle_check
};

enum class DisorderKind { none, hr_scalar, hr_site };

inline const std::map<std::string, ExperimentKind>& kind_names() {
    static const std::map<std::string, ExperimentKind> m = {
        {"entropy_sweep", ExperimentKind::entropy_sweep},
        {"mutual_info", ExperimentKind::mutual_info},
        {"purification", ExperimentKind::purification},
        {"spectrum_gap", ExperimentKind::spectrum_gap},
        {"edge_profile", ExperimentKind::edge_profile},
        {"meanfield_compare", ExperimentKind::meanfield_compare},
        {"imps_sweep", ExperimentKind::imps_sweep},
        {"collapse", ExperimentKind::collapse},
        {"oracle_check", ExperimentKind::oracle_check}};
    return m;
}

inline std::string kind_name(ExperimentKind k) {
    for (const auto& [name, kk] : kind_names())
        if (kk == k) return name;
    return "?";
}

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::entropy_sweep;
    std::string out_dir = "runs/out";
    std::uint64_t seed = 1;
    int workers = 1;
    int n_samples = 20;

    ModelParams base;  // sites filled per grid point

    std::vector<int> L_list = {12};
    std::vector<double> h_I_grid = {0.1};

    bool use_sector = true;
    int sector_k = 0;
    Parity sector_parity = Parity::even;

    DisorderKind disorder = DisorderKind::none;
    double disorder_mean = M_PI / 6.0;
    double disorder_sigma = 0.0;

    double t_factor = 4.0;  // evolution time = round(t_factor * L) unless t_steps > 0
    int t_steps = 0;
    int record_every = 0;  // > 0: per-trajectory time series every so many steps
    std::vector<double> renyi_indices;

    std::vector<double> eps_list = {1e-1, 1e-2, 1e-3};

    std::vector<int> chi_list = {16, 32, 64};
    int imps_steps = 100;
    double imps_theta = 1.0;
    double imps_phi = 0.7;

    int bins = 0;

    std::string input_csv;
    double hc_min = 0.05, hc_max = 0.30;
    double nu_min = 0.3, nu_max = 2.0;
    int bootstrap = 20;

    int oracle_max_bits = 16;

    int evolve_time(int L) const {
        return t_steps > 0 ? t_steps : static_cast<int>(std::lround(t_factor * L));
    }
};

// ---------------------------------------------------------------------------
// Config file parsing: [section] / key = value lines, '#' comments, lists as
// comma-separated values. Unknown sections or keys are validation errors.

namespace detail_cfg {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

inline std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    for (double v : parse_double_list(s)) out.push_back(static_cast<int>(std::lround(v)));
    return out;
}

}  // namespace detail_cfg

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline ExperimentConfig parse_config_text(const std::string& text) {
    using detail_cfg::trim;
    static const std::map<std::string, std::set<std::string>> schema = {
        {"experiment", {"kind", "out_dir", "seed", "workers", "samples"}},
        {"model", {"J", "g", "h_R", "h_I", "boundary"}},
        {"sweep", {"L", "h_I"}},
        {"sector", {"use", "k", "parity"}},
        {"disorder", {"kind", "mean", "sigma"}},
        {"evolve", {"t_factor", "t_steps", "record_every", "renyi"}},
        {"purify", {"eps"}},
        {"imps", {"chi", "steps", "theta", "phi"}},
        {"edge", {"bins"}},
        {"collapse", {"input_csv", "hc_min", "hc_max", "nu_min", "nu_max", "bootstrap"}},
        {"oracle", {"max_bits"}}};

    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!schema.count(section))
                throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": key outside a section");
        if (!schema.at(section).count(key))
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "' in [" + section + "]");

        try {
            if (section == "experiment") {
                if (key == "kind") {
                    if (!kind_names().count(value)) throw ConfigError("unknown experiment kind '" + value + "'");
                    cfg.kind = kind_names().at(value);
                } else if (key == "out_dir") cfg.out_dir = value;
                else if (key == "seed") cfg.seed = std::stoull(value);
                else if (key == "workers") cfg.workers = std::stoi(value);
                else if (key == "samples") cfg.n_samples = std::stoi(value);
            } else if (section == "model") {
                if (key == "J") cfg.base.J = std::stod(value);
                else if (key == "g") cfg.base.g = std::stod(value);
                else if (key == "h_R") cfg.base.h_R = std::stod(value);
                else if (key == "h_I") cfg.base.h_I = std::stod(value);
                else if (key == "boundary") {
                    if (value == "pbc") cfg.base.boundary = Boundary::periodic;
                    else if (value == "obc") cfg.base.boundary = Boundary::open;
                    else throw ConfigError("boundary must be pbc or obc");
                }
            } else if (section == "sweep") {
                if (key == "L") cfg.L_list = detail_cfg::parse_int_list(value);
                else cfg.h_I_grid = detail_cfg::parse_double_list(value);
            } else if (section == "sector") {
                if (key == "use") cfg.use_sector = (value == "true" || value == "1" || value == "yes");
                else if (key == "k") cfg.sector_k = std::stoi(value);
                else if (key == "parity") {
                    if (value == "even") cfg.sector_parity = Parity::even;
                    else if (value == "odd") cfg.sector_parity = Parity::odd;
                    else if (value == "none") cfg.sector_parity = Parity::none;
                    else throw ConfigError("parity must be even, odd or none");
                }
            } else if (section == "disorder") {
                if (key == "kind") {
                    if (value == "none") cfg.disorder = DisorderKind::none;
                    else if (value == "hr_scalar") cfg.disorder = DisorderKind::hr_scalar;
                    else if (value == "hr_site") cfg.disorder = DisorderKind::hr_site;
                    else throw ConfigError("disorder kind must be none, hr_scalar or hr_site");
                } else if (key == "mean") cfg.disorder_mean = std::stod(value);
                else cfg.disorder_sigma = std::stod(value);
            } else if (section == "evolve") {
                if (key == "t_factor") cfg.t_factor = std::stod(value);
                else if (key == "t_steps") cfg.t_steps = std::stoi(value);
                else if (key == "record_every") cfg.record_every = std::stoi(value);
                else cfg.renyi_indices = detail_cfg::parse_double_list(value);
            } else if (section == "purify") {
                cfg.eps_list = detail_cfg::parse_double_list(value);
            } else if (section == "imps") {
                if (key == "chi") cfg.chi_list = detail_cfg::parse_int_list(value);
                else if (key == "steps") cfg.imps_steps = std::stoi(value);
                else if (key == "theta") cfg.imps_theta = std::stod(value);
                else cfg.imps_phi = std::stod(value);
            } else if (section == "edge") {
                cfg.bins = std::stoi(value);
            } else if (section == "collapse") {
                if (key == "input_csv") cfg.input_csv = value;
                else if (key == "hc_min") cfg.hc_min = std::stod(value);
                else if (key == "hc_max") cfg.hc_max = std::stod(value);
                else if (key == "nu_min") cfg.nu_min = std::stod(value);
                else if (key == "nu_max") cfg.nu_max = std::stod(value);
                else cfg.bootstrap = std::stoi(value);
            } else if (section == "oracle") {
                cfg.oracle_max_bits = std::stoi(value);
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": cannot parse value '" + value +
                              "' (" + e.what() + ")");
        }
    }
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

inline void validate_config(const ExperimentConfig& cfg) {
    if (cfg.n_samples < 1) throw ConfigError("samples must be >= 1");
    if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
    const bool needs_grid = cfg.kind != ExperimentKind::collapse && cfg.kind != ExperimentKind::oracle_check;
    if (needs_grid && (cfg.L_list.empty() || cfg.h_I_grid.empty()))
        throw ConfigError("empty sweep grid: both [sweep] L and h_I must be non-empty");
    for (int L : cfg.L_list) {
        if (L < 2 || L > 24) throw ConfigError("L must be in [2, 24]");
        if (cfg.kind == ExperimentKind::mutual_info && L % 6 != 0)
            throw ConfigError("mutual_info default geometry requires 6 | L");
        if ((cfg.kind == ExperimentKind::entropy_sweep || cfg.kind == ExperimentKind::purification) && L % 2 != 0)
            throw ConfigError("half-chain observables require even L");
    }
    if (cfg.use_sector && cfg.base.boundary == Boundary::open)
        throw ConfigError("symmetry sectors require periodic boundaries (set [sector] use = false)");
    if (cfg.disorder == DisorderKind::hr_site && cfg.use_sector &&
        (cfg.kind == ExperimentKind::spectrum_gap || cfg.kind == ExperimentKind::edge_profile))
        throw ConfigError("per-site disorder breaks translation: spectra need [sector] use = false");
    if (cfg.kind == ExperimentKind::edge_profile && cfg.disorder == DisorderKind::hr_site)
        for (int L : cfg.L_list)
            if (L > 12) throw ConfigError("full-space disordered spectra are guarded at L <= 12");
    if (cfg.kind == ExperimentKind::collapse && cfg.input_csv.empty())
        throw ConfigError("collapse requires [collapse] input_csv");
    if (cfg.kind == ExperimentKind::purification && cfg.eps_list.empty())
        throw ConfigError("purification requires a non-empty [purify] eps list");
    if (cfg.kind == ExperimentKind::imps_sweep && cfg.chi_list.empty())
        throw ConfigError("imps_sweep requires a non-empty [imps] chi list");
    if (cfg.oracle_max_bits < 2 || cfg.oracle_max_bits > 24)
        throw ConfigError("[oracle] max_bits must be in [2, 24]");
}

inline std::string dump_resolved_config(const ExperimentConfig& c) {
    std::ostringstream o;
    o << "[experiment]\n"
      << "kind = " << kind_name(c.kind) << "\nout_dir = " << c.out_dir << "\nseed = " << c.seed
      << "\nworkers = " << c.workers << "\nsamples = " << c.n_samples << "\n\n[model]\nJ = "
      << format_double(c.base.J) << "\ng = " << format_double(c.base.g)
      << "\nh_R = " << format_double(c.base.h_R) << "\nh_I = " << format_double(c.base.h_I)
      << "\nboundary = " << boundary_name(c.base.boundary) << "\n\n[sweep]\nL = ";
    for (std::size_t i = 0; i < c.L_list.size(); ++i) o << (i ? "," : "") << c.L_list[i];
    o << "\nh_I = ";
    for (std::size_t i = 0; i < c.h_I_grid.size(); ++i)
        o << (i ? "," : "") << format_double(c.h_I_grid[i]);
    o << "\n\n[sector]\nuse = " << (c.use_sector ? "true" : "false") << "\nk = " << c.sector_k
      << "\nparity = " << parity_name(c.sector_parity) << "\n\n[disorder]\nkind = "
      << (c.disorder == DisorderKind::none ? "none"
          : c.disorder == DisorderKind::hr_scalar ? "hr_scalar" : "hr_site")
      << "\nmean = " << format_double(c.disorder_mean)
      << "\nsigma = " << format_double(c.disorder_sigma) << "\n\n[evolve]\nt_factor = "
      << format_double(c.t_factor) << "\nt_steps = " << c.t_steps
      << "\nrecord_every = " << c.record_every << "\nrenyi = ";
    for (std::size_t i = 0; i < c.renyi_indices.size(); ++i)
        o << (i ? "," : "") << format_double(c.renyi_indices[i]);
    o << "\n\n[purify]\neps = ";
    for (std::size_t i = 0; i < c.eps_list.size(); ++i)
        o << (i ? "," : "") << format_double(c.eps_list[i]);
    o << "\n\n[imps]\nchi = ";
    for (std::size_t i = 0; i < c.chi_list.size(); ++i) o << (i ? "," : "") << c.chi_list[i];
    o << "\nsteps = " << c.imps_steps << "\ntheta = " << format_double(c.imps_theta)
      << "\nphi = " << format_double(c.imps_phi) << "\n\n[edge]\nbins = " << c.bins
      << "\n\n[collapse]\ninput_csv = " << c.input_csv << "\nhc_min = " << format_double(c.hc_min)
      << "\nhc_max = " << format_double(c.hc_max) << "\nnu_min = " << format_double(c.nu_min)
      << "\nnu_max = " << format_double(c.nu_max) << "\nbootstrap = " << c.bootstrap
      << "\n\n[oracle]\nmax_bits = " << c.oracle_max_bits << "\n";
    return o.str();
}

// ---------------------------------------------------------------------------
// Finite-size scaling collapse.

struct CollapseSeries {
    int L = 0;
    std::vector<double> h;  // ascending
    std::vector<double> s;
};

struct CollapseFit {
    bool ok = false;
    std::string message;
    double h_c = 0.0, nu = 0.0, cost = 0.0;
    double h_c_err = 0.0, nu_err = 0.0;
};

namespace detail_collapse {

inline double interp(const std::vector<double>& x, const std::vector<double>& y, double xq) {
    if (xq < x.front() || xq > x.back()) return std::numeric_limits<double>::quiet_NaN();
    const auto it = std::upper_bound(x.begin(), x.end(), xq);
    if (it == x.begin()) return y.front();
    const std::size_t i = it - x.begin();
    if (i >= x.size()) return y.back();
    const double f = (xq - x[i - 1]) / (x[i] - x[i - 1]);
    return y[i - 1] * (1.0 - f) + y[i] * f;
}

// cost = normalized residual variance of every rescaled point against the
// master curve interpolated from its nearest neighbours belonging to OTHER
// system sizes; binning-free, so exact collapses reach cost ~ 0 even when the
// available L values are close together
inline double collapse_cost(const std::vector<CollapseSeries>& series, double h_c, double nu) {
    struct Pt {
        double x, y;
        int L;
    };
    std::vector<Pt> pts;
    for (const auto& s : series) {
        const double s_c = interp(s.h, s.s, h_c);
        if (!std::isfinite(s_c)) return 1e300;  // h_c outside this series' grid
        const double scale = std::pow(double(s.L), 1.0 / nu);
        for (std::size_t i = 0; i < s.h.size(); ++i)
            pts.push_back({(s.h[i] - h_c) * scale, std::abs(s.s[i] - s_c), s.L});
    }
    if (pts.size() < 8) return 1e300;
    std::sort(pts.begin(), pts.end(), [](const Pt& a, const Pt& b) {
        if (a.x != b.x) return a.x < b.x;
        if (a.y != b.y) return a.y < b.y;
        return a.L < b.L;
    });

    double mean_y = 0.0;
    for (const auto& p : pts) mean_y += p.y / pts.size();
    double var_y = 0.0;
    for (const auto& p : pts) var_y += (p.y - mean_y) * (p.y - mean_y) / pts.size();
    if (!(var_y > 0.0)) return 1e300;

    double ssr = 0.0;
    std::size_t used = 0;
    std::map<int, std::size_t> used_per_L;
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = i, k = i;
        while (j > 0 && pts[--j].L == pts[i].L) {}
        while (k + 1 < n && pts[++k].L == pts[i].L) {}
        if (pts[j].L == pts[i].L || pts[k].L == pts[i].L) continue;
        const double dx = pts[k].x - pts[j].x;
        const double f = dx > 0.0 ? (pts[i].x - pts[j].x) / dx : 0.5;
        const double master = pts[j].y * (1.0 - f) + pts[k].y * f;
        ssr += (pts[i].y - master) * (pts[i].y - master);
        ++used;
        ++used_per_L[pts[i].L];
    }
    // every system size must contribute points inside shared support
    if (used < pts.size() / 2) return 1e300;
    for (const auto& s : series)
        if (used_per_L[s.L] < 2) return 1e300;
    return ssr / (double(used) * var_y);
}

// 2D Nelder-Mead refinement
inline void nelder_mead(const std::function<double(double, double)>& f, double& x, double& y,
                        double step_x, double step_y, int iters = 200) {
    struct V {
        double x, y, f;
    };
    std::array<V, 3> s = {V{x, y, f(x, y)}, V{x + step_x, y, f(x + step_x, y)},
                          V{x, y + step_y, f(x, y + step_y)}};
    for (int it = 0; it < iters; ++it) {
        std::sort(s.begin(), s.end(), [](const V& a, const V& b) { return a.f < b.f; });
        if (std::abs(s[2].f - s[0].f) < 1e-10 * (std::abs(s[0].f) + 1e-12)) break;
        const double cx = (s[0].x + s[1].x) / 2.0, cy = (s[0].y + s[1].y) / 2.0;
        V refl{cx + (cx - s[2].x), cy + (cy - s[2].y), 0.0};
        refl.f = f(refl.x, refl.y);
        if (refl.f < s[0].f) {
            V exp_{cx + 2.0 * (cx - s[2].x), cy + 2.0 * (cy - s[2].y), 0.0};
            exp_.f = f(exp_.x, exp_.y);
            s[2] = exp_.f < refl.f ? exp_ : refl;
        } else if (refl.f < s[1].f) {
            s[2] = refl;
        } else {
            V con{cx + 0.5 * (s[2].x - cx), cy + 0.5 * (s[2].y - cy), 0.0};
            con.f = f(con.x, con.y);
            if (con.f < s[2].f) {
                s[2] = con;
            } else {
                for (int i = 1; i < 3; ++i) {
                    s[i].x = s[0].x + 0.5 * (s[i].x - s[0].x);
                    s[i].y = s[0].y + 0.5 * (s[i].y - s[0].y);
                    s[i].f = f(s[i].x, s[i].y);
                }
            }
        }
    }
    std::sort(s.begin(), s.end(), [](const V& a, const V& b) { return a.f < b.f; });
    x = s[0].x;
    y = s[0].y;
}

}  // namespace detail_collapse

// Coarse 21x21 grid over the declared ranges, then Nelder-Mead refinement.
inline CollapseFit scaling_collapse(const std::vector<CollapseSeries>& series, double hc_min,
                                    double hc_max, double nu_min, double nu_max) {
    CollapseFit fit;
    if (series.size() < 3) {
        fit.message = "need series for at least three system sizes";
        return fit;
    }
    auto cost = [&](double hc, double nu) {
        if (nu <= 0.01) return 1e300;
        return detail_collapse::collapse_cost(series, hc, nu);
    };
    double best = 1e300, bhc = 0.0, bnu = 0.0;
    for (int i = 0; i <= 20; ++i)
        for (int j = 0; j <= 20; ++j) {
            const double hc = hc_min + (hc_max - hc_min) * i / 20.0;
            const double nu = nu_min + (nu_max - nu_min) * j / 20.0;
            const double c = cost(hc, nu);
            if (c < best) {
                best = c;
                bhc = hc;
                bnu = nu;
            }
        }
    if (best >= 1e300) {
        fit.message = "no overlapping rescaled support anywhere on the search grid";
        return fit;
    }
    detail_collapse::nelder_mead(cost, bhc, bnu, (hc_max - hc_min) / 40.0, (nu_max - nu_min) / 40.0);
    fit.ok = true;
    fit.h_c = bhc;
    fit.nu = std::abs(bnu);
    fit.cost = cost(bhc, bnu);
    return fit;
}

// ---------------------------------------------------------------------------
// Runner plumbing.

struct RunOutcome {
    int exit_code = 0;  // 0 ok, 1 validation error (thrown instead), 2 partial failures
    std::filesystem::path manifest;
    std::vector<std::filesystem::path> outputs;
    std::vector<std::pair<std::size_t, std::string>> point_errors;
    std::string summary;
};

namespace detail_run {

struct SampleRow {
    int L = 0;
    double h_I = 0.0;
    int sample = 0;
    std::uint64_t seed = 0;
    double value = 0.0;
    double log_norm = 0.0;
    std::vector<double> extra;
    bool ok = true;
    std::string error;
};

struct MeanRow {
    int L;
    double h_I;
    int t;
    double mean, stderr_;
    int n;
    std::vector<double> extra_mean;
};

inline std::vector<MeanRow> reduce(const std::vector<SampleRow>& rows,
                                   const std::vector<int>& L_list,
                                   const std::vector<double>& h_grid,
                                   const std::function<int(int)>& t_of_L) {
    std::vector<MeanRow> out;
    for (int L : L_list)
        for (double h : h_grid) {
            MeanRow m{L, h, t_of_L(L), 0.0, 0.0, 0, {}};
            std::vector<double> vals;
            std::size_t n_extra = 0;
            for (const auto& r : rows)
                if (r.L == L && r.h_I == h && r.ok) {
                    vals.push_back(r.value);
                    n_extra = std::max(n_extra, r.extra.size());
                }
            if (vals.empty()) continue;
            m.n = static_cast<int>(vals.size());
            for (double v : vals) m.mean += v / vals.size();
            double var = 0.0;
            for (double v : vals) var += (v - m.mean) * (v - m.mean);
            m.stderr_ = vals.size() > 1 ? std::sqrt(var / (vals.size() - 1.0) / vals.size()) : 0.0;
            m.extra_mean.assign(n_extra, 0.0);
            for (const auto& r : rows)
                if (r.L == L && r.h_I == h && r.ok)
                    for (std::size_t e = 0; e < r.extra.size(); ++e)
                        m.extra_mean[e] += r.extra[e] / vals.size();
            out.push_back(m);
        }
    return out;
}

// initial state + applier for one sample, honoring the disorder mode
struct SamplePrep {
    ModelParams params;
    std::optional<DisorderRealization> realization;
};

inline SamplePrep prepare_sample(const ExperimentConfig& cfg, int L, double h_I,
                                 std::uint64_t sample_seed) {
    SamplePrep prep;
    prep.params = cfg.base;
    prep.params.sites = L;
    prep.params.h_I = h_I;
    if (cfg.disorder == DisorderKind::hr_scalar) {
        Rng rng(Rng::derive(sample_seed, 0xD15C));
        prep.params.h_R = cfg.disorder_mean + cfg.disorder_sigma * rng.normal();
    } else if (cfg.disorder == DisorderKind::hr_site) {
        prep.realization =
            sample_disorder(L, cfg.disorder_mean, cfg.disorder_sigma, h_I,
                            Rng::derive(sample_seed, 0xD15C));
    }
    return prep;
}

}  // namespace detail_run

// ---------------------------------------------------------------------------
// The experiment runners. Each writes its CSV/SVG set into cfg.out_dir and
// returns the produced files; per-point failures are recorded, not fatal.

inline RunOutcome run_experiment(const ExperimentConfig& cfg);

namespace detail_run {

using Files = std::vector<std::filesystem::path>;

inline void run_entropy_like(const ExperimentConfig& cfg, bool mutual_info_mode,
                             RunOutcome& outcome) {
    const auto& Ls = cfg.L_list;
    const auto& hs = cfg.h_I_grid;
    const std::size_t n_points = Ls.size() * hs.size() * cfg.n_samples;
    std::vector<SampleRow> rows(n_points);

    struct TrajRow {
        int t;
        double value, log_norm;
        std::vector<double> extra;
    };
    std::vector<std::vector<TrajRow>> trajectories(cfg.record_every > 0 ? n_points : 0);

    auto point = [&](std::size_t idx) {
        const std::size_t per_L = hs.size() * cfg.n_samples;
        const int L = Ls[idx / per_L];
        const double h = hs[(idx % per_L) / cfg.n_samples];
        const int sample = static_cast<int>(idx % cfg.n_samples);
        const std::uint64_t sample_seed = Rng::derive(cfg.seed, idx);
        SampleRow& row = rows[idx];
        row = {L, h, sample, sample_seed, 0.0, 0.0, {}, true, ""};

        const SamplePrep prep = prepare_sample(cfg, L, h, sample_seed);
        Rng rng(sample_seed);
        RowState psi = random_ti_product_state(L, rng);
        const int t = cfg.evolve_time(L);
        TransferApplier op = prep.realization ? TransferApplier(prep.params, *prep.realization)
                                              : TransferApplier(prep.params);
        const auto half = contiguous_region(0, L / 2, L);
        auto measure = [&](int step) {
            TrajRow tr{step, 0.0, psi.log_norm, {}};
            if (mutual_info_mode) {
                tr.value = antipodal_mutual_information(psi);
            } else {
                tr.value = half_chain_entropy(psi);
                for (double n : cfg.renyi_indices) tr.extra.push_back(entropy_renyi(psi, half, n));
            }
            return tr;
        };
        for (int step = 0; step < t; ++step) {
            op.apply(psi.amplitudes);
            psi.normalize();
            if (cfg.record_every > 0 &&
                ((step + 1) % cfg.record_every == 0 || step + 1 == t))
                trajectories[idx].push_back(measure(step + 1));
        }
        const TrajRow final_row = measure(t);
        row.value = final_row.value;
        row.log_norm = final_row.log_norm;
        row.extra = final_row.extra;
    };
    const auto errors = parallel_for_errors(n_points, cfg.workers, point);
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty()) {
            rows[i].ok = false;
            outcome.point_errors.emplace_back(i, errors[i]);
        }

    const std::filesystem::path dir = cfg.out_dir;
    const std::string stem = mutual_info_mode ? "mutual_info" : "entropy";
    auto echo = params_echo(cfg.base);
    echo["seed"] = std::to_string(cfg.seed);
    echo["samples"] = std::to_string(cfg.n_samples);
    echo["distribution"] = "bloch_haar_uniform";

    {
        std::vector<std::string> cols = {"L", "h_I", "sample", "seed", "t",
                                         mutual_info_mode ? "I_AB" : "S_half", "log_norm"};
        for (double n : cfg.renyi_indices) cols.push_back("S_renyi_" + format_double(n));
        CsvWriter w(dir / (stem + "_samples.csv"), cols, echo);
        for (const auto& r : rows) {
            if (!r.ok) continue;
            std::vector<std::string> cells = {cell(r.L),     cell(r.h_I),
                                              cell(r.sample), cell(r.seed),
                                              cell(cfg.evolve_time(r.L)), cell(r.value),
                                              cell(r.log_norm)};
            for (double e : r.extra) cells.push_back(cell(e));
            w.row(cells);
        }
        outcome.outputs.push_back(dir / (stem + "_samples.csv"));
    }
    if (cfg.record_every > 0) {
        std::vector<std::string> cols = {"L", "h_I", "sample", "t",
                                         mutual_info_mode ? "I_AB" : "S_half", "log_norm"};
        for (double n : cfg.renyi_indices) cols.push_back("S_renyi_" + format_double(n));
        CsvWriter w(dir / (stem + "_trajectories.csv"), cols, echo);
        for (std::size_t idx = 0; idx < trajectories.size(); ++idx) {
            if (!rows[idx].ok) continue;
            for (const auto& tr : trajectories[idx]) {
                std::vector<std::string> cells = {cell(rows[idx].L), cell(rows[idx].h_I),
                                                  cell(rows[idx].sample), cell(tr.t),
                                                  cell(tr.value), cell(tr.log_norm)};
                for (double e : tr.extra) cells.push_back(cell(e));
                w.row(cells);
            }
        }
        outcome.outputs.push_back(dir / (stem + "_trajectories.csv"));
    }
    const auto means = reduce(rows, Ls, hs, [&](int L) { return cfg.evolve_time(L); });
    {
        std::vector<std::string> cols = {"L", "h_I", "t",
                                         mutual_info_mode ? "mean_I_AB" : "mean_S_half",
                                         "stderr", "n"};
        for (double n : cfg.renyi_indices) cols.push_back("mean_S_renyi_" + format_double(n));
        CsvWriter w(dir / (stem + "_mean.csv"), cols, echo);
        for (const auto& m : means) {
            std::vector<std::string> cells = {cell(m.L), cell(m.h_I), cell(m.t), cell(m.mean),
                                              cell(m.stderr_), cell(m.n)};
            for (double e : m.extra_mean) cells.push_back(cell(e));
            w.row(cells);
        }
        outcome.outputs.push_back(dir / (stem + "_mean.csv"));
    }
    {
        SvgPlot plot(mutual_info_mode ? "Antipodal mutual information" : "Half-chain entropy",
                     "h_I", mutual_info_mode ? "I_AB" : "S_{L/2} (nats)");
        for (int L : Ls) {
            SvgSeries s;
            s.label = "L=" + std::to_string(L);
            for (const auto& m : means)
                if (m.L == L) {
                    s.x.push_back(m.h_I);
                    s.y.push_back(m.mean);
                }
            plot.add(std::move(s));
        }
        plot.write(dir / (stem + ".svg"));
        outcome.outputs.push_back(dir / (stem + ".svg"));
    }
}

inline void run_purification(const ExperimentConfig& cfg, RunOutcome& outcome) {
    const auto& Ls = cfg.L_list;
    const auto& hs = cfg.h_I_grid;
    const std::size_t n_points = Ls.size() * hs.size() * cfg.n_samples;

    struct Trace {
        int L;
        double h_I;
        int sample;
        std::uint64_t seed;
        std::vector<double> s_ref;
        std::map<double, double> t_eps;
        bool ok = false;
    };
    std::vector<Trace> traces(n_points);

    auto point = [&](std::size_t idx) {
        const std::size_t per_L = hs.size() * cfg.n_samples;
        const int L = Ls[idx / per_L];
        const double h = hs[(idx % per_L) / cfg.n_samples];
        const int sample = static_cast<int>(idx % cfg.n_samples);
        const std::uint64_t sample_seed = Rng::derive(cfg.seed, idx);
        Trace& tr = traces[idx];
        tr.L = L;
        tr.h_I = h;
        tr.sample = sample;
        tr.seed = sample_seed;

        const SamplePrep prep = prepare_sample(cfg, L, h, sample_seed);
        auto basis = std::make_shared<SectorBasis>(
            build_sector_basis(L, cfg.sector_k, cfg.sector_parity));
        Rng rng(sample_seed);
        auto [a, b] = random_orthogonal_pair(basis, rng);
        const int t_max = cfg.evolve_time(L);
        const PurificationTrace p =
            purify_reference(prep.params, a, b, t_max, cfg.eps_list, false);
        tr.s_ref = p.s_ref;
        tr.t_eps = p.t_eps;
        tr.ok = true;
    };
    const auto errors = parallel_for_errors(n_points, cfg.workers, point);
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty()) outcome.point_errors.emplace_back(i, errors[i]);

    const std::filesystem::path dir = cfg.out_dir;
    auto echo = params_echo(cfg.base);
    echo["seed"] = std::to_string(cfg.seed);
    {
        CsvWriter w(dir / "purification_samples.csv",
                    {"L", "h_I", "sample", "seed", "t", "S_ref"}, echo);
        for (const auto& tr : traces) {
            if (!tr.ok) continue;
            for (std::size_t t = 0; t < tr.s_ref.size(); ++t)
                w.row({cell(tr.L), cell(tr.h_I), cell(tr.sample), cell(tr.seed), cell(t),
                       cell(tr.s_ref[t])});
        }
        outcome.outputs.push_back(dir / "purification_samples.csv");
    }
    {
        CsvWriter w(dir / "purification_mean.csv", {"L", "h_I", "t", "mean_S_ref", "stderr", "n"},
                    echo);
        for (int L : Ls)
            for (double h : hs) {
                std::size_t t_len = 0;
                for (const auto& tr : traces)
                    if (tr.ok && tr.L == L && tr.h_I == h) t_len = std::max(t_len, tr.s_ref.size());
                for (std::size_t t = 0; t < t_len; ++t) {
                    double mean = 0.0, var = 0.0;
                    int n = 0;
                    for (const auto& tr : traces)
                        if (tr.ok && tr.L == L && tr.h_I == h && t < tr.s_ref.size()) {
                            mean += tr.s_ref[t];
                            ++n;
                        }
                    if (n == 0) continue;
                    mean /= n;
                    for (const auto& tr : traces)
                        if (tr.ok && tr.L == L && tr.h_I == h && t < tr.s_ref.size())
                            var += (tr.s_ref[t] - mean) * (tr.s_ref[t] - mean);
                    const double se = n > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
                    w.row({cell(L), cell(h), cell(t), cell(mean), cell(se), cell(n)});
                }
            }
        outcome.outputs.push_back(dir / "purification_mean.csv");
    }
    {
        CsvWriter w(dir / "t_eps.csv",
                    {"L", "h_I", "eps", "mean_t_eps", "stderr", "n_crossed", "n_total"}, echo);
        for (int L : Ls)
            for (double h : hs)
                for (double eps : cfg.eps_list) {
                    std::vector<double> te;
                    int total = 0;
                    for (const auto& tr : traces)
                        if (tr.ok && tr.L == L && tr.h_I == h) {
                            ++total;
                            if (tr.t_eps.count(eps)) te.push_back(tr.t_eps.at(eps));
                        }
                    if (total == 0) continue;
                    double mean = 0.0, var = 0.0;
                    for (double v : te) mean += v;
                    mean = te.empty() ? std::numeric_limits<double>::quiet_NaN() : mean / te.size();
                    for (double v : te) var += (v - mean) * (v - mean);
                    const double se =
                        te.size() > 1 ? std::sqrt(var / (te.size() - 1.0) / te.size()) : 0.0;
                    w.row({cell(L), cell(h), cell(eps), cell(mean), cell(se),
                           cell(static_cast<int>(te.size())), cell(total)});
                }
        outcome.outputs.push_back(dir / "t_eps.csv");
    }
    {
        SvgPlot plot("Reference-qubit purification", "t", "S_ref (nats)");
        for (int L : Ls)
            for (double h : hs) {
                SvgSeries s;
                s.label = "L=" + std::to_string(L) + " h_I=" + format_double(h);
                std::size_t t_len = 0;
                for (const auto& tr : traces)
                    if (tr.ok && tr.L == L && tr.h_I == h) t_len = std::max(t_len, tr.s_ref.size());
                for (std::size_t t = 0; t < t_len; ++t) {
                    double mean = 0.0;
                    int n = 0;
                    for (const auto& tr : traces)
                        if (tr.ok && tr.L == L && tr.h_I == h && t < tr.s_ref.size()) {
                            mean += tr.s_ref[t];
                            ++n;
                        }
                    if (n) {
                        s.x.push_back(double(t));
                        s.y.push_back(mean / n);
                    }
                }
                plot.add(std::move(s));
            }
        plot.write(dir / "purification.svg");
        outcome.outputs.push_back(dir / "purification.svg");
    }
}

inline void run_spectrum_gap(const ExperimentConfig& cfg, RunOutcome& outcome) {
    struct Row {
        int L;
        double h_I;
        std::string sector;
        std::size_t dim;
        double rho0, rho1, gap, gap_multiplet;
        bool iterative;
        std::vector<double> rho, phi;  // full spectrum in dense mode
        bool ok = false;
        std::string error;
    };
    const auto& Ls = cfg.L_list;
    const auto& hs = cfg.h_I_grid;
    std::vector<Row> rows(Ls.size() * hs.size());

    auto point = [&](std::size_t idx) {
        const int L = Ls[idx / hs.size()];
        const double h = hs[idx % hs.size()];
        Row& row = rows[idx];
        row.L = L;
        row.h_I = h;
        ModelParams p = cfg.base;
        p.sites = L;
        p.h_I = h;
        if (cfg.use_sector) {
            const SectorBasis basis = build_sector_basis(L, cfg.sector_k, cfg.sector_parity);
            row.sector = basis.label();
            row.dim = basis.dim();
            if (basis.dim() <= 4096) {
                const SpectrumResult s =
                    eig_full(build_dense_T(p, basis), EigOptions{.vectors = false});
                row.rho0 = s.rho[0];
                row.rho1 = s.rho[1];
                row.gap = spectral_gap(s);
                row.gap_multiplet = spectral_gap_below_multiplet(s);
                row.iterative = false;
                row.rho = s.rho;
                row.phi = s.phi;
            } else {
                auto shared = std::make_shared<SectorBasis>(basis);
                LeadingEigsOptions opt;
                opt.seed = Rng::derive(cfg.seed, idx);
                const LeadingEigsResult r =
                    leading_eigs(make_transfer_op(p, shared), basis.dim(), 4, opt);
                if (!r.converged)
                    throw std::runtime_error("leading_eigs did not converge (flat spectrum?)");
                row.rho0 = std::log(std::abs(r.values[0]));
                row.rho1 = std::log(std::abs(r.values[1]));
                row.gap = row.rho0 - row.rho1;
                SpectrumResult tmp;
                for (const auto& v : r.values) {
                    tmp.rho.push_back(std::log(std::abs(v)));
                    tmp.phi.push_back(std::arg(v));
                }
                row.gap_multiplet = spectral_gap_below_multiplet(tmp);
                row.iterative = true;
            }
        } else {
            row.sector = "full";
            row.dim = std::size_t(1) << L;
            if (row.dim > 4096) throw std::runtime_error("full-space dense spectra guarded at L <= 12");
            const SamplePrep prep = prepare_sample(cfg, L, h, Rng::derive(cfg.seed, idx));
            Mat t;
            if (prep.realization) {
                TransferApplier op(prep.params, *prep.realization);
                t.resize(row.dim, row.dim);
                Vec col(row.dim);
                for (std::size_t j = 0; j < row.dim; ++j) {
                    col.setZero();
                    col[j] = 1.0;
                    op.apply(col);
                    t.col(j) = col;
                }
            } else {
                t = build_dense_T(prep.params);
            }
            const SpectrumResult s = eig_full(t, EigOptions{.vectors = false});
            row.rho0 = s.rho[0];
            row.rho1 = s.rho[1];
            row.gap = spectral_gap(s);
            row.gap_multiplet = spectral_gap_below_multiplet(s);
            row.iterative = false;
            row.rho = s.rho;
            row.phi = s.phi;
        }
        row.ok = true;
    };
    const auto errors = parallel_for_errors(rows.size(), cfg.workers, point);
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty()) {
            rows[i].error = errors[i];
            outcome.point_errors.emplace_back(i, errors[i]);
        }

    const std::filesystem::path dir = cfg.out_dir;
    auto echo = params_echo(cfg.base);
    echo["seed"] = std::to_string(cfg.seed);
    CsvWriter w(dir / "gap.csv",
                {"L", "h_I", "sector", "dim", "rho0", "rho1", "gap", "gap_below_multiplet",
                 "iterative"},
                echo);
    for (const auto& r : rows) {
        if (!r.ok) continue;
        w.row({cell(r.L), cell(r.h_I), r.sector, cell(r.dim), cell(r.rho0), cell(r.rho1),
               cell(r.gap), cell(r.gap_multiplet), r.iterative ? "1" : "0"});
        if (!r.rho.empty()) {
            const std::string tag = "L" + std::to_string(r.L) + "_h" + format_double(r.h_I);
            CsvWriter sw(dir / ("spectrum_" + tag + ".csv"), {"rho", "phi"}, echo);
            for (std::size_t i = 0; i < r.rho.size(); ++i)
                sw.row({cell(r.rho[i]), cell(r.phi[i])});
            outcome.outputs.push_back(dir / ("spectrum_" + tag + ".csv"));
        }
    }
    outcome.outputs.push_back(dir / "gap.csv");

    SvgPlot plot("Spectral gap", "h_I", "gap = rho0 - rho1");
    for (int L : Ls) {
        SvgSeries s;
        s.label = "L=" + std::to_string(L);
        for (const auto& r : rows)
            if (r.ok && r.L == L) {
                s.x.push_back(r.h_I);
                s.y.push_back(r.gap);
            }
        plot.add(std::move(s));
    }
    plot.write(dir / "gap.svg");
    outcome.outputs.push_back(dir / "gap.svg");
}

inline void run_edge_profile(const ExperimentConfig& cfg, RunOutcome& outcome) {
    const std::filesystem::path dir = cfg.out_dir;
    auto echo = params_echo(cfg.base);
    echo["seed"] = std::to_string(cfg.seed);
    echo["disorder_mean"] = format_double(cfg.disorder_mean);
    echo["disorder_sigma"] = format_double(cfg.disorder_sigma);

    CsvWriter fits(dir / "edge_fits.csv",
                   {"L", "h_I", "sector", "space_dim", "n_draws", "rho_e", "w", "fit_residual",
                    "n_beyond", "rho0_minus_rho_e", "fit_ok", "fail_reason"},
                   echo);
    outcome.outputs.push_back(dir / "edge_fits.csv");
    SvgPlot collapse_plot("Radial density edge collapse", "(rho - rho_e)/w", "n / n(rho_e)");
    {
        SvgSeries erfc_ref;
        erfc_ref.label = "erfc";
        for (double x = -4.0; x <= 4.0; x += 0.1) {
            erfc_ref.x.push_back(x);
            erfc_ref.y.push_back(std::erfc(x));
        }
        collapse_plot.add(std::move(erfc_ref));
    }

    std::size_t point_index = 0;
    for (int L : cfg.L_list) {
        std::optional<SectorTransferBuilder> builder;
        std::shared_ptr<SectorBasis> basis;
        if (cfg.use_sector) {
            basis = std::make_shared<SectorBasis>(
                build_sector_basis(L, cfg.sector_k, cfg.sector_parity));
            ModelParams p0 = cfg.base;
            p0.sites = L;
            builder.emplace(p0, *basis);
        }
        for (double h : cfg.h_I_grid) {
            std::vector<SpectrumResult> ensemble(cfg.n_samples);
            auto draw = [&](std::size_t s) {
                const std::uint64_t sample_seed =
                    Rng::derive(cfg.seed, point_index * 100000 + s);
                const SamplePrep prep = prepare_sample(cfg, L, h, sample_seed);
                Mat t;
                if (cfg.use_sector) {
                    t = builder->dense(prep.params.h_R, h);
                } else {
                    const std::size_t dim = std::size_t(1) << L;
                    TransferApplier op = prep.realization
                                             ? TransferApplier(prep.params, *prep.realization)
                                             : TransferApplier(prep.params);
                    t.resize(dim, dim);
                    Vec col(dim);
                    for (std::size_t j = 0; j < dim; ++j) {
                        col.setZero();
                        col[j] = 1.0;
                        op.apply(col);
                        t.col(j) = col;
                    }
                }
                ensemble[s] = eig_full(t, EigOptions{.vectors = false});
            };
            const auto errors = parallel_for_errors(cfg.n_samples, cfg.workers, draw);
            std::vector<SpectrumResult> good;
            for (std::size_t i = 0; i < errors.size(); ++i) {
                if (errors[i].empty()) good.push_back(std::move(ensemble[i]));
                else outcome.point_errors.emplace_back(point_index * 100000 + i, errors[i]);
            }
            if (good.empty()) {
                ++point_index;
                continue;
            }
            EdgeProfile prof = radial_density(good, cfg.bins);
            fit_edge(prof);
            if (prof.fit_ok) edge_metrics(prof, good);

            const std::string tag = "L" + std::to_string(L) + "_h" + format_double(h);
            {
                CsvWriter w(dir / ("edge_hist_" + tag + ".csv"), {"bin_center", "density"}, echo);
                for (std::size_t i = 0; i < prof.bin_centers.size(); ++i)
                    w.row({cell(prof.bin_centers[i]), cell(prof.density[i])});
                outcome.outputs.push_back(dir / ("edge_hist_" + tag + ".csv"));
            }
            fits.row({cell(L), cell(h), cfg.use_sector ? basis->label() : "full",
                      cell(prof.normalization), cell(static_cast<int>(good.size())),
                      cell(prof.rho_e), cell(prof.w), cell(prof.fit_residual),
                      cell(prof.n_beyond), cell(prof.rho0_minus_rho_e),
                      prof.fit_ok ? "1" : "0", prof.fail_reason.empty() ? "-" : prof.fail_reason});
            if (prof.fit_ok) {
                SvgSeries s;
                s.label = "L=" + std::to_string(L) + " h_I=" + format_double(h);
                for (std::size_t i = 0; i < prof.bin_centers.size(); ++i) {
                    s.x.push_back((prof.bin_centers[i] - prof.rho_e) / prof.w);
                    s.y.push_back(prof.density[i] / prof.fit_amplitude);
                }
                collapse_plot.add(std::move(s));
            }
            ++point_index;
        }
    }
    collapse_plot.write(dir / "edge_collapse.svg");
    outcome.outputs.push_back(dir / "edge_collapse.svg");
}

inline void run_meanfield(const ExperimentConfig& cfg, RunOutcome& outcome) {
    const std::filesystem::path dir = cfg.out_dir;
    auto echo = params_echo(cfg.base);
    echo["seed"] = std::to_string(cfg.seed);

    ModelParams base = cfg.base;
    const auto rows = mf_gap_sweep(base, cfg.h_I_grid, cfg.seed);
    {
        CsvWriter w(dir / "meanfield.csv",
                    {"h_I", "gap", "lambda0", "lambda1", "branch", "iterations", "residual",
                     "converged", "note"},
                    echo);
        for (const auto& r : rows)
            w.row({cell(r.h_I), cell(r.gap), cell(std::abs(r.lambda0)), cell(std::abs(r.lambda1)),
                   cell(r.branch), cell(r.iterations), cell(r.residual), r.converged ? "1" : "0",
                   r.note.empty() ? "-" : r.note});
        outcome.outputs.push_back(dir / "meanfield.csv");
    }

    SvgPlot plot("Mean-field vs exact spectral gap", "h_I", "gap");
    {
        SvgSeries s;
        s.label = "mean field";
        for (const auto& r : rows)
            if (r.converged) {
                s.x.push_back(r.h_I);
                s.y.push_back(r.gap);
            }
        plot.add(std::move(s));
    }
    {
        CsvWriter w(dir / "meanfield_exact.csv", {"L", "h_I", "sector", "exact_gap"}, echo);
        for (int L : cfg.L_list) {
            const SectorBasis basis = build_sector_basis(L, cfg.sector_k, cfg.sector_parity);
            if (basis.dim() > 4096) continue;
            SvgSeries s;
            s.label = "exact L=" + std::to_string(L);
            for (double h : cfg.h_I_grid) {
                ModelParams p = cfg.base;
                p.sites = L;
                p.h_I = h;
                const SpectrumResult sp =
                    eig_full(build_dense_T(p, basis), EigOptions{.vectors = false});
                w.row({cell(L), cell(h), basis.label(), cell(spectral_gap(sp))});
                s.x.push_back(h);
                s.y.push_back(spectral_gap(sp));
            }
            plot.add(std::move(s));
        }
        outcome.outputs.push_back(dir / "meanfield_exact.csv");
    }
    plot.write(dir / "meanfield.svg");
    outcome.outputs.push_back(dir / "meanfield.svg");
}

inline void run_imps(const ExperimentConfig& cfg, RunOutcome& outcome) {
    const std::filesystem::path dir = cfg.out_dir;
    auto echo = params_echo(cfg.base);
    echo["seed"] = std::to_string(cfg.seed);
    echo["theta"] = format_double(cfg.imps_theta);
    echo["phi"] = format_double(cfg.imps_phi);

    // points = (h_I, chi) pairs, each a sequential trajectory
    struct PointRows {
        std::vector<ImpsPoint> rows;
    };
    const std::size_t n_points = cfg.h_I_grid.size() * cfg.chi_list.size();
    std::vector<PointRows> results(n_points);
    auto point = [&](std::size_t idx) {
        const double h = cfg.h_I_grid[idx / cfg.chi_list.size()];
        const int chi = cfg.chi_list[idx % cfg.chi_list.size()];
        ModelParams p = cfg.base;
        p.h_I = h;
        const double his[] = {h};
        const int chis[] = {chi};
        BmpsOptions opt;
        opt.seed = Rng::derive(cfg.seed, idx);
        results[idx].rows =
            run_imps_sweep(p, his, chis, cfg.imps_steps, cfg.imps_theta, cfg.imps_phi, opt);
    };
    const auto errors = parallel_for_errors(n_points, cfg.workers, point);
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty()) outcome.point_errors.emplace_back(i, errors[i]);

    CsvWriter w(dir / "imps.csv", {"h_I", "chi", "t", "S_chi", "trunc_err", "env_residual", "ok"},
                echo);
    for (std::size_t i = 0; i < results.size(); ++i)
        for (const auto& r : results[i].rows) {
            w.row({cell(r.h_I), cell(r.chi), cell(r.t), cell(r.s_chi), cell(r.trunc_err),
                   cell(r.env_residual), r.ok ? "1" : "0"});
            if (!r.ok) outcome.point_errors.emplace_back(i, r.error);
        }
    outcome.outputs.push_back(dir / "imps.csv");

    SvgPlot plot("Bond entropy of the evolved infinite MPS", "h_I", "S_chi (nats)");
    for (int chi : cfg.chi_list) {
        SvgSeries s;
        s.label = "chi=" + std::to_string(chi);
        for (const auto& res : results)
            for (const auto& r : res.rows)
                if (r.chi == chi && r.t == cfg.imps_steps && r.ok) {
                    s.x.push_back(r.h_I);
                    s.y.push_back(r.s_chi);
                }
        plot.add(std::move(s));
    }
    plot.write(dir / "imps.svg");
    outcome.outputs.push_back(dir / "imps.svg");
}

inline void run_oracle(const ExperimentConfig& cfg, RunOutcome& outcome) {
    const std::filesystem::path dir = cfg.out_dir;
    auto echo = params_echo(cfg.base);
    echo["seed"] = std::to_string(cfg.seed);
    CsvWriter w(dir / "oracle.csv", {"L", "t", "h_I", "s_i", "s_f", "rel_err"}, echo);
    outcome.outputs.push_back(dir / "oracle.csv");

    double worst = 0.0;
    std::size_t checks = 0;
    Rng pick(cfg.seed);
    for (int L = 2; L <= std::min(16, cfg.oracle_max_bits); ++L) {
        for (int t = 1; std::int64_t(L) * (t - 1) <= cfg.oracle_max_bits; ++t) {
            for (double h : {0.0, 0.3}) {
                ModelParams p = cfg.base;
                p.sites = L;
                p.h_I = h;
                for (int rep = 0; rep < 3; ++rep) {
                    const std::uint32_t si = pick.next_u64() & ((1u << L) - 1u);
                    const std::uint32_t sf = pick.next_u64() & ((1u << L) - 1u);
                    const cplx oracle = spin_sum_oracle(p, si, sf, t);
                    RowState a = full_space_state(L, Vec::Zero(std::int64_t(1) << L));
                    RowState b = full_space_state(L, Vec::Zero(std::int64_t(1) << L));
                    a.amplitudes[si] = 1.0;
                    b.amplitudes[sf] = 1.0;
                    const OverlapResult ov = overlap_via_powers(p, a, b, t);
                    const double scale = std::max(std::abs(oracle), 1e-300);
                    const double rel = std::abs(ov.value() - oracle) / scale;
                    w.row({cell(L), cell(t), cell(h), cell(si), cell(sf), cell(rel)});
                    worst = std::max(worst, rel);
                    ++checks;
                }
            }
        }
    }
    outcome.summary = "checks=" + std::to_string(checks) + " worst_rel_err=" + format_double(worst);
    if (worst >= 1e-9)
        outcome.point_errors.emplace_back(0, "oracle mismatch: worst relative error " +
                                                 format_double(worst));
}

inline void run_collapse(const ExperimentConfig& cfg, RunOutcome& outcome) {
    const std::filesystem::path dir = cfg.out_dir;
    const CsvTable mean_table = read_csv(cfg.input_csv);
    const int cl = mean_table.column_index("L");
    const int ch = mean_table.column_index("h_I");
    int cs = mean_table.column_index("mean_S_half");
    if (cs < 0) cs = mean_table.column_index("S_half");
    if (cl < 0 || ch < 0 || cs < 0)
        throw ConfigError("collapse input must have columns L, h_I and mean_S_half");

    std::map<int, CollapseSeries> by_L;
    for (const auto& row : mean_table.rows) {
        const int L = static_cast<int>(std::lround(row[cl]));
        by_L[L].L = L;
        by_L[L].h.push_back(row[ch]);
        by_L[L].s.push_back(row[cs]);
    }
    std::vector<CollapseSeries> series;
    for (auto& [L, s] : by_L) {
        std::vector<std::size_t> idx(s.h.size());
        std::iota(idx.begin(), idx.end(), std::size_t(0));
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.h[a] < s.h[b]; });
        CollapseSeries sorted;
        sorted.L = L;
        for (auto i : idx) {
            sorted.h.push_back(s.h[i]);
            sorted.s.push_back(s.s[i]);
        }
        series.push_back(std::move(sorted));
    }

    CollapseFit fit = scaling_collapse(series, cfg.hc_min, cfg.hc_max, cfg.nu_min, cfg.nu_max);
    if (!fit.ok) throw std::runtime_error("collapse failed: " + fit.message);

    // bootstrap over per-sample rows when the companion samples file exists
    const std::filesystem::path samples_path =
        std::filesystem::path(cfg.input_csv).parent_path() /
        (std::filesystem::path(cfg.input_csv).stem().string().find("mutual") == std::string::npos
             ? "entropy_samples.csv"
             : "mutual_info_samples.csv");
    std::vector<double> boot_hc, boot_nu;
    if (std::filesystem::exists(samples_path) && cfg.bootstrap > 0) {
        const CsvTable samples = read_csv(samples_path);
        const int sl = samples.column_index("L");
        const int sh = samples.column_index("h_I");
        const int sv = samples.column_index("S_half");
        if (sl >= 0 && sh >= 0 && sv >= 0) {
            std::map<std::pair<int, double>, std::vector<double>> cells;
            for (const auto& row : samples.rows)
                cells[{static_cast<int>(std::lround(row[sl])), row[sh]}].push_back(row[sv]);
            Rng rng(cfg.seed ^ 0xB007);
            for (int b = 0; b < cfg.bootstrap; ++b) {
                std::vector<CollapseSeries> resampled;
                for (const auto& s : series) {
                    CollapseSeries rs;
                    rs.L = s.L;
                    for (std::size_t i = 0; i < s.h.size(); ++i) {
                        const auto it = cells.find({s.L, s.h[i]});
                        if (it == cells.end() || it->second.empty()) break;
                        const auto& vals = it->second;
                        double mean = 0.0;
                        for (std::size_t k = 0; k < vals.size(); ++k)
                            mean += vals[rng.next_u64() % vals.size()] / vals.size();
                        rs.h.push_back(s.h[i]);
                        rs.s.push_back(mean);
                    }
                    if (rs.h.size() == s.h.size()) resampled.push_back(std::move(rs));
                }
                if (resampled.size() != series.size()) continue;
                const CollapseFit bf =
                    scaling_collapse(resampled, cfg.hc_min, cfg.hc_max, cfg.nu_min, cfg.nu_max);
                if (bf.ok) {
                    boot_hc.push_back(bf.h_c);
                    boot_nu.push_back(bf.nu);
                }
            }
        }
    }
    auto stddev = [](const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        double m = 0.0;
        for (double x : v) m += x / v.size();
        double var = 0.0;
        for (double x : v) var += (x - m) * (x - m) / (v.size() - 1.0);
        return std::sqrt(var);
    };
    fit.h_c_err = stddev(boot_hc);
    fit.nu_err = stddev(boot_nu);

    auto echo = params_echo(cfg.base);
    echo["seed"] = std::to_string(cfg.seed);
    echo["input_csv"] = cfg.input_csv;
    {
        CsvWriter w(dir / "collapse.csv",
                    {"h_Ic", "nu", "cost", "h_Ic_err", "nu_err", "n_bootstrap"}, echo);
        w.row({cell(fit.h_c), cell(fit.nu), cell(fit.cost), cell(fit.h_c_err), cell(fit.nu_err),
               cell(static_cast<int>(boot_hc.size()))});
        outcome.outputs.push_back(dir / "collapse.csv");
    }
    {
        CsvWriter w(dir / "collapse_points.csv", {"L", "x", "y"}, echo);
        SvgPlot plot("Scaling collapse", "(h_I - h_Ic) L^{1/nu}", "|S - S(h_Ic)|");
        for (const auto& s : series) {
            const double s_c = detail_collapse::interp(s.h, s.s, fit.h_c);
            SvgSeries sv;
            sv.label = "L=" + std::to_string(s.L);
            for (std::size_t i = 0; i < s.h.size(); ++i) {
                const double x = (s.h[i] - fit.h_c) * std::pow(double(s.L), 1.0 / fit.nu);
                const double y = std::abs(s.s[i] - s_c);
                w.row({cell(s.L), cell(x), cell(y)});
                sv.x.push_back(x);
                sv.y.push_back(y);
            }
            plot.add(std::move(sv));
        }
        plot.write(dir / "collapse.svg");
        outcome.outputs.push_back(dir / "collapse_points.csv");
        outcome.outputs.push_back(dir / "collapse.svg");
    }
    outcome.summary = "h_Ic=" + format_double(fit.h_c) + " nu=" + format_double(fit.nu) +
                      " cost=" + format_double(fit.cost);
}

}  // namespace detail_run

inline RunOutcome run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    const auto t0 = std::chrono::steady_clock::now();

    RunOutcome outcome;
    switch (cfg.kind) {
        case ExperimentKind::entropy_sweep:
            detail_run::run_entropy_like(cfg, false, outcome);
            break;
        case ExperimentKind::mutual_info:
            detail_run::run_entropy_like(cfg, true, outcome);
            break;
        case ExperimentKind::purification:
            detail_run::run_purification(cfg, outcome);
            break;
        case ExperimentKind::spectrum_gap:
            detail_run::run_spectrum_gap(cfg, outcome);
            break;
        case ExperimentKind::edge_profile:
            detail_run::run_edge_profile(cfg, outcome);
            break;
        case ExperimentKind::meanfield_compare:
            detail_run::run_meanfield(cfg, outcome);
            break;
        case ExperimentKind::imps_sweep:
            detail_run::run_imps(cfg, outcome);
            break;
        case ExperimentKind::collapse:
            detail_run::run_collapse(cfg, outcome);
            break;
        case ExperimentKind::oracle_check:
            detail_run::run_oracle(cfg, outcome);
            break;
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    nlohmann::json manifest;
    manifest["code_version"] = TMLAB_VERSION;
    manifest["kind"] = kind_name(cfg.kind);
    manifest["seed"] = cfg.seed;
    manifest["workers"] = cfg.workers;
    manifest["resolved_config"] = dump_resolved_config(cfg);
    manifest["elapsed_seconds"] = elapsed;
    manifest["summary"] = outcome.summary;
    manifest["outputs"] = nlohmann::json::array();
    for (const auto& f : outcome.outputs) manifest["outputs"].push_back(f.string());
    manifest["point_errors"] = nlohmann::json::array();
    for (const auto& [idx, msg] : outcome.point_errors)
        manifest["point_errors"].push_back({{"point", idx}, {"error", msg}});

    outcome.manifest = std::filesystem::path(cfg.out_dir) / "manifest.json";
    std::ofstream mf(outcome.manifest);
    mf << manifest.dump(2) << "\n";

    outcome.exit_code = outcome.point_errors.empty() ? 0 : 2;
    return outcome;
}

}  // namespace tmlab
