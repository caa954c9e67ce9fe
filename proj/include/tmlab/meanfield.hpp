#pragma once

// Self-consistent single-site mean-field theory for the leading eigenstates
// of the transfer matrix. With neighbor expectations u = <l|U_0|r> and
// v = <l|U_0 Z|r> (normalized <l|r> = 1) the effective 2x2 operator is
//
//   T_m = e^{-iJ}/2 U_0 +- [e^{2iJ} u U_0 - 2i sin(2J) v U_0 Z]
//                          / (2 sqrt(e^{2iJ} u^2 - 2i sin(2J) v^2)),
//
// the +- branch picked to maximize the leading eigenvalue modulus. The same
// object is also built along an independent route, as tr(M P) with P the
// dominant eigenprojector of the contracted MPO tensor <M>, evaluated as the
// limit of normalized matrix powers.

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "tmlab/rng.hpp"
#include "tmlab/transfer.hpp"

namespace tmlab {

struct BranchPointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MeanFieldState {
    Eigen::Vector2cd r;
    Eigen::RowVector2cd l;  // scaled so l * r = 1
    cplx exp_u0 = 0.0;      // <l|U_0|r>
    cplx exp_u0z = 0.0;     // <l|U_0 Z|r>
    int branch_sign = +1;
};

namespace detail {

inline Eigen::Matrix2cd z_pauli() {
    Eigen::Matrix2cd z = Eigen::Matrix2cd::Zero();
    z(0, 0) = 1.0;
    z(1, 1) = -1.0;
    return z;
}

// eigenvalues of a 2x2 matrix, |e0| >= |e1|
inline void eig2(const Eigen::Matrix2cd& a, cplx& e0, cplx& e1) {
    const cplx tr = a.trace();
    const cplx det = a.determinant();
    const cplx disc = std::sqrt(tr * tr - 4.0 * det);
    cplx p = (tr + disc) / 2.0;
    cplx q = (tr - disc) / 2.0;
    if (std::abs(p) < std::abs(q)) std::swap(p, q);
    e0 = p;
    e1 = q;
}

inline Eigen::Vector2cd right_eigvec(const Eigen::Matrix2cd& a, cplx lambda) {
    const Eigen::Matrix2cd m = a - lambda * Eigen::Matrix2cd::Identity();
    // pick the larger row of the adjugate-like null vector
    Eigen::Vector2cd v1(-m(0, 1), m(0, 0));
    Eigen::Vector2cd v2(-m(1, 1), m(1, 0));
    Eigen::Vector2cd v = v1.norm() >= v2.norm() ? v1 : v2;
    if (v.norm() < 1e-300) v = Eigen::Vector2cd(1.0, 0.0);
    return v.normalized();
}

}  // namespace detail

inline Eigen::Matrix2cd build_Tm(const ModelParams& p, cplx u0, cplx u0z, int branch) {
    if (branch != 1 && branch != -1) throw std::invalid_argument("build_Tm: branch must be +-1");
    const Eigen::Matrix2cd U0 = u0_matrix(p.g, p.h());
    const cplx e2j = std::exp(cplx(0.0, 2.0 * p.J));
    const cplx s2j(0.0, -2.0 * std::sin(2.0 * p.J));  // -2i sin(2J)
    const cplx radicand = e2j * u0 * u0 + s2j * u0z * u0z;
    if (std::abs(radicand) < 1e-300)
        throw BranchPointError("build_Tm: branch point, square-root argument vanishes");
    const cplx root = std::sqrt(radicand);  // principal branch
    const Eigen::Matrix2cd num = e2j * u0 * U0 + s2j * u0z * U0 * detail::z_pauli();
    return std::exp(cplx(0.0, -p.J)) / 2.0 * U0 + double(branch) * num / (2.0 * root);
}

// End Matter route: T_m = tr(M [lambda_m^{-1} <M>]^{L-1}) in the L -> infty
// limit, the bracket evaluated by repeated squaring until it converges to the
// dominant eigenprojector of <M>.
inline Eigen::Matrix2cd build_Tm_limit(const ModelParams& p, cplx u0, cplx u0z,
                                       int max_squarings = 64) {
    const double cj = std::cos(p.J);
    const cplx msj(0.0, -std::sin(p.J));
    Eigen::Matrix2cd mexp;  // <M>: entries are the contracted MPO operators
    mexp << cj * u0, cj * u0z, msj * u0z, msj * u0;

    cplx e0, e1;
    detail::eig2(mexp, e0, e1);
    if (!(std::abs(e0) > std::abs(e1) * (1.0 + 1e-13)))
        throw BranchPointError("build_Tm_limit: <M> has no dominant eigenvalue");
    // repeated squaring with per-step renormalization of the leading
    // eigenvalue; without it the 2^k-th power decays through roundoff
    Eigen::Matrix2cd b = mexp / e0;
    bool settled = false;
    for (int i = 0; i < max_squarings && !settled; ++i) {
        Eigen::Matrix2cd b2 = b * b;
        cplx f0, f1;
        detail::eig2(b2, f0, f1);
        if (!(std::abs(f0) > 0.0) || !std::isfinite(std::abs(f0)))
            throw BranchPointError("build_Tm_limit: power iteration degenerated");
        b2 /= f0;
        settled = (b2 - b).cwiseAbs().maxCoeff() < 1e-14 * std::max(1.0, b.cwiseAbs().maxCoeff());
        b = b2;
    }
    if ((b * b - b).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, b.cwiseAbs().maxCoeff()))
        throw BranchPointError("build_Tm_limit: matrix powers did not settle on a projector");

    const MpoTensor mpo = build_mpo_tensor(p);
    Eigen::Matrix2cd tm = Eigen::Matrix2cd::Zero();
    for (int a = 0; a < 2; ++a)
        for (int c = 0; c < 2; ++c) tm += mpo.op[a][c] * b(c, a);
    return tm;
}

struct FixedPointResult {
    bool converged = false;
    MeanFieldState state;
    Eigen::Matrix2cd tm;
    cplx lambda0 = 0.0, lambda1 = 0.0;
    double gap = 0.0;  // ln|lambda0| - ln|lambda1|
    int iterations = 0;
    double residual = 0.0;  // max-norm change of (u, v) at the last update
    bool damped = false;
};

namespace detail {

struct IterStep {
    cplx u, v;
    Eigen::Matrix2cd tm;
    MeanFieldState state;
};

// one full iteration: expectations -> T_m (max-|lambda| branch) -> leading
// (r, l) of T_m -> new expectations
inline IterStep mf_iterate(const ModelParams& p, cplx u0, cplx u0z) {
    Eigen::Matrix2cd tm_plus = build_Tm(p, u0, u0z, +1);
    Eigen::Matrix2cd tm_minus = build_Tm(p, u0, u0z, -1);
    cplx p0, p1, m0, m1;
    eig2(tm_plus, p0, p1);
    eig2(tm_minus, m0, m1);
    const int branch = std::abs(p0) >= std::abs(m0) ? +1 : -1;
    const Eigen::Matrix2cd tm = branch > 0 ? tm_plus : tm_minus;
    const cplx lead = branch > 0 ? p0 : m0;

    IterStep out;
    out.tm = tm;
    out.state.branch_sign = branch;
    out.state.r = right_eigvec(tm, lead);
    Eigen::RowVector2cd l = right_eigvec(tm.transpose(), lead).transpose();
    const cplx lr = l * out.state.r;
    if (std::abs(lr) < 1e-14)
        throw BranchPointError("mean-field iteration: defective T_m, <l|r> ~ 0");
    out.state.l = l / lr;

    const Eigen::Matrix2cd U0 = u0_matrix(p.g, p.h());
    out.u = out.state.l * U0 * out.state.r;
    out.v = out.state.l * (U0 * z_pauli()) * out.state.r;
    out.state.exp_u0 = out.u;
    out.state.exp_u0z = out.v;
    return out;
}

}  // namespace detail

// Fixed-point iteration on the expectation pair, with a damped retry when a
// period-2 cycle is detected.
inline FixedPointResult solve_fixed_point(const ModelParams& p, std::uint64_t seed,
                                          int max_iter = 500, double tol = 1e-10) {
    if (!(tol > 0.0)) throw std::invalid_argument("solve_fixed_point: tol must be positive");
    Rng rng(seed);

    // expectations of a random normalized (r, l) pair with <l|r> = 1
    Eigen::Vector2cd r(rng.normal_complex(), rng.normal_complex());
    r.normalize();
    Eigen::RowVector2cd l(rng.normal_complex(), rng.normal_complex());
    const cplx lr = l * r;
    l /= lr;
    const Eigen::Matrix2cd U0 = u0_matrix(p.g, p.h());
    cplx u = l * U0 * r;
    cplx v = l * (U0 * detail::z_pauli()) * r;

    FixedPointResult res;
    double damping = 0.0;
    cplx prev_u = u, prev_v = v;
    cplx prev2_u = u, prev2_v = v;

    for (int it = 0; it < max_iter; ++it) {
        res.iterations = it + 1;
        detail::IterStep step;
        try {
            step = detail::mf_iterate(p, u, v);
        } catch (const BranchPointError&) {
            // nudge off the singular point and continue
            u += 1e-8 * rng.normal_complex();
            v += 1e-8 * rng.normal_complex();
            continue;
        }
        cplx nu = step.u, nv = step.v;
        if (damping > 0.0) {
            nu = (1.0 - damping) * nu + damping * u;
            nv = (1.0 - damping) * nv + damping * v;
        }
        res.residual = std::max(std::abs(nu - u), std::abs(nv - v));
        res.state = step.state;
        res.tm = step.tm;

        if (res.residual < tol) {
            res.converged = true;
            res.state.exp_u0 = nu;
            res.state.exp_u0z = nv;
            break;
        }
        // period-2 detection: the new point returns to the one before last
        if (it >= 2 && damping == 0.0 && std::abs(nu - prev2_u) < 1e-3 * std::abs(nu - prev_u) &&
            std::abs(nv - prev2_v) < 1e-3 * std::abs(nv - prev_v)) {
            damping = 0.5;
            res.damped = true;
        }
        prev2_u = prev_u;
        prev2_v = prev_v;
        prev_u = u;
        prev_v = v;
        u = nu;
        v = nv;
    }

    detail::eig2(res.tm, res.lambda0, res.lambda1);
    res.gap = std::log(std::abs(res.lambda0)) - std::log(std::abs(res.lambda1));
    return res;
}

inline FixedPointResult solve_fixed_point_restarts(const ModelParams& p, std::uint64_t seed,
                                                   int restarts = 8, int max_iter = 500,
                                                   double tol = 1e-10) {
    FixedPointResult best;
    bool have = false;
    for (int k = 0; k < restarts; ++k) {
        FixedPointResult r = solve_fixed_point(p, Rng::derive(seed, k), max_iter, tol);
        if (!r.converged) continue;
        // multiple fixed points: keep the one with the largest leading modulus
        if (!have || std::abs(r.lambda0) > std::abs(best.lambda0)) {
            best = r;
            have = true;
        }
    }
    if (!have) {
        best = solve_fixed_point(p, Rng::derive(seed, 0), max_iter, tol);
    }
    return best;
}

struct MfSweepRow {
    double h_I = 0.0;
    bool converged = false;
    double gap = 0.0;
    cplx lambda0 = 0.0, lambda1 = 0.0;
    int branch = 0;
    int iterations = 0;
    double residual = 0.0;
    std::string note;
};

inline std::vector<MfSweepRow> mf_gap_sweep(ModelParams base, std::span<const double> h_I_values,
                                            std::uint64_t seed, int restarts = 8) {
    std::vector<MfSweepRow> rows;
    for (std::size_t i = 0; i < h_I_values.size(); ++i) {
        base.h_I = h_I_values[i];
        MfSweepRow row;
        row.h_I = base.h_I;
        try {
            FixedPointResult r =
                solve_fixed_point_restarts(base, Rng::derive(seed, 1000 + i), restarts);
            row.converged = r.converged;
            row.gap = r.gap;
            row.lambda0 = r.lambda0;
            row.lambda1 = r.lambda1;
            row.branch = r.state.branch_sign;
            row.iterations = r.iterations;
            row.residual = r.residual;
        } catch (const std::exception& e) {
            row.converged = false;
            row.note = e.what();
        }
        if (base.h_I == 0.0)
            row.note = "unitary limit: mean-field gap not predictive of the transition";
        // flag square-root branch crossings between adjacent converged points,
        // where gap continuity along the sweep is not expected
        if (!rows.empty() && rows.back().converged && row.converged &&
            rows.back().branch != row.branch)
            row.note += (row.note.empty() ? "" : "; ") + std::string("branch switch");
        rows.push_back(row);
    }
    return rows;
}

}  // namespace tmlab
