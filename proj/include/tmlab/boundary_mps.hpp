#pragma once

// Infinite-MPS contraction of the transfer-matrix MPO: apply the bond-2 MPO
// to a uniform MPS, restore canonical form through the environment fixed
// points of the (non-unitary) MPS transfer operator, truncate to chi, and
// read off the bond entropy S_chi.
//
// Storage convention: the uniform site tensor is kept as B^s = Gamma^s lambda
// (bond matrix absorbed to the right), so canonical form means
//     sum_s B^s B^{s dagger} = 1            (right fixed point)
//     sum_s B^{s dagger} diag(lambda^2) B^s = diag(lambda^2)  (left fixed point)
// Environments are found with the same restarted-Arnoldi engine used for the
// transfer-matrix spectra; no mixed-canonical shortcut from unitary TEBD is
// assumed anywhere.

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tmlab/spectral.hpp"
#include "tmlab/transfer.hpp"

namespace tmlab {

struct UniformMps {
    std::array<Mat, 2> site;       // B^s, chi x chi
    Eigen::VectorXd schmidt;       // descending, sum of squares = 1
    bool canonical = false;

    int chi() const { return static_cast<int>(site[0].rows()); }
};

inline UniformMps product_mps(double theta, double phi) {
    UniformMps m;
    m.site[0] = Mat::Constant(1, 1, std::cos(theta / 2.0));
    m.site[1] = Mat::Constant(1, 1, std::polar(std::sin(theta / 2.0), phi));
    m.schmidt = Eigen::VectorXd::Constant(1, 1.0);
    m.canonical = true;
    return m;
}

struct BmpsOptions {
    double env_tol = 1e-10;
    int env_max_restarts = 400;
    int env_krylov = 16;
    double schmidt_floor = 1e-14;      // relative to the largest Schmidt value
    double canonical_defect_tol = 1e-8;
    std::uint64_t seed = 4242;
};

struct StepInfo {
    bool ok = false;
    std::string error;
    double truncation_error = 0.0;   // discarded Schmidt weight this step
    double env_residual = 0.0;       // worst Arnoldi residual of the env solves
    double canonical_defect = 0.0;   // max deviation from the fixed-point conditions
    double log_eta = 0.0;            // per-site log of the divided-out norm
    int env_iterations = 0;
};

namespace detail {

// dominant eigenpair of M -> sum_s A^{s dagger} M A^s (left=true) or
// M -> sum_s A^s M A^{s dagger} (left=false), returned as a PSD matrix.
struct EnvResult {
    Mat env;
    double eta = 0.0;
    double residual = 0.0;
    int iterations = 0;
    bool ok = false;
    std::string error;
};

inline EnvResult dominant_environment(const std::array<Mat, 2>& a, bool left, const Mat* warm,
                                      const BmpsOptions& opt) {
    const int chi = static_cast<int>(a[0].rows());
    const std::int64_t dim = std::int64_t(chi) * chi;
    EnvResult res;

    LinearOp map = [&a, left, chi](const Vec& in, Vec& out) {
        const Eigen::Map<const Mat> m(in.data(), chi, chi);
        Mat acc = Mat::Zero(chi, chi);
        for (int s = 0; s < 2; ++s)
            acc += left ? Mat(a[s].adjoint() * m * a[s]) : Mat(a[s] * m * a[s].adjoint());
        out = Eigen::Map<const Vec>(acc.data(), chi * std::int64_t(chi));
    };

    if (dim == 1) {
        Vec one = Vec::Ones(1), img(1);
        map(one, img);
        res.env = Mat::Constant(1, 1, 1.0);
        res.eta = img[0].real();
        res.residual = std::abs(img[0].imag());
        res.iterations = 1;
        res.ok = res.eta > 0.0;
        if (!res.ok) res.error = "scalar environment with non-positive weight";
        return res;
    }

    LeadingEigsOptions lopt;
    lopt.mode = IterMode::subspace;
    lopt.tol = opt.env_tol;
    lopt.max_iter = opt.env_max_restarts;
    lopt.krylov = std::min<int>(opt.env_krylov, static_cast<int>(dim) - 1);
    lopt.seed = opt.seed + (left ? 1 : 2);
    Vec warm_vec;
    const Vec* warm_ptr = nullptr;
    if (warm && warm->rows() == chi) {
        warm_vec = Eigen::Map<const Vec>(warm->data(), dim);
        if (warm_vec.norm() > 1e-14) {
            warm_vec.normalize();
            warm_ptr = &warm_vec;
        }
    }
    LeadingEigsResult eig = leading_eigs(map, dim, 1, lopt, warm_ptr);
    res.iterations = eig.iterations;
    res.residual = eig.residuals[0];
    if (!eig.converged) {
        res.error = "environment fixed point did not converge (residual " +
                    std::to_string(eig.residuals[0]) + ")";
        return res;
    }

    Mat env = Eigen::Map<const Mat>(eig.vectors.col(0).data(), chi, chi);
    const cplx tr = env.trace();
    if (std::abs(tr) < 1e-10 * env.norm()) {
        res.error = "environment fixed point has vanishing trace";
        return res;
    }
    env *= std::conj(tr) / std::abs(tr);  // rotate the free phase away
    env = 0.5 * (env + env.adjoint()).eval();
    env /= env.trace().real();

    res.env = env;
    res.eta = eig.values[0].real();
    if (std::abs(eig.values[0].imag()) > 1e-8 * std::max(1.0, std::abs(res.eta))) {
        res.error = "environment eigenvalue is not real";
        return res;
    }
    res.ok = res.eta > 0.0;
    if (!res.ok) res.error = "non-positive environment eigenvalue";
    return res;
}

inline double canonical_defect(const UniformMps& m) {
    const int chi = m.chi();
    Mat right = Mat::Zero(chi, chi);
    for (int s = 0; s < 2; ++s) right += m.site[s] * m.site[s].adjoint();
    double d = (right - Mat::Identity(chi, chi)).cwiseAbs().maxCoeff();
    const Eigen::VectorXd lam2 = m.schmidt.array().square();
    Mat left = Mat::Zero(chi, chi);
    for (int s = 0; s < 2; ++s)
        left += m.site[s].adjoint() * lam2.asDiagonal().toDenseMatrix().cast<cplx>() * m.site[s];
    d = std::max(d, (left - Mat(lam2.asDiagonal().toDenseMatrix().cast<cplx>())).cwiseAbs().maxCoeff());
    return d;
}

}  // namespace detail

// One canonicalization pass: environment fixed points, Schmidt decomposition
// of the bond, gauge rotation onto the Schmidt bases and truncation to
// chi_max. warm_left / warm_right seed the environment solves when available.
inline StepInfo canonicalize(UniformMps& m, int chi_max, const BmpsOptions& opt = {},
                             const Mat* warm_left = nullptr, const Mat* warm_right = nullptr) {
    StepInfo info;
    const int chi = m.chi();

    detail::EnvResult lres = detail::dominant_environment(m.site, true, warm_left, opt);
    detail::EnvResult rres = detail::dominant_environment(m.site, false, warm_right, opt);
    info.env_iterations = lres.iterations + rres.iterations;
    info.env_residual = std::max(lres.residual, rres.residual);
    if (!lres.ok || !rres.ok) {
        info.error = !lres.ok ? lres.error : rres.error;
        return info;
    }
    const double eta = 0.5 * (lres.eta + rres.eta);
    info.log_eta = 0.5 * std::log(eta);  // per site tensor (one bond each)
    const double scale = std::sqrt(eta);
    for (int s = 0; s < 2; ++s) m.site[s] /= scale;

    // l = X^dagger X, r^T = U_rho D_rho U_rho^dagger; Schmidt matrix X W^T
    Eigen::SelfAdjointEigenSolver<Mat> el(lres.env);
    Eigen::SelfAdjointEigenSolver<Mat> er(rres.env);
    Eigen::VectorXd dl = el.eigenvalues().cwiseMax(0.0);
    Eigen::VectorXd dr = er.eigenvalues().cwiseMax(0.0);
    const Mat x = dl.cwiseSqrt().asDiagonal().toDenseMatrix().cast<cplx>() * el.eigenvectors().adjoint();
    const Mat wt = er.eigenvectors() * dr.cwiseSqrt().asDiagonal().toDenseMatrix().cast<cplx>();

    Eigen::BDCSVD<Mat> svd(x * wt, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd sigma = svd.singularValues();
    const double total = sigma.squaredNorm();
    if (!(total > 0.0)) {
        info.error = "vanishing Schmidt spectrum";
        return info;
    }

    int keep = 0;
    while (keep < sigma.size() && keep < chi_max && sigma[keep] > opt.schmidt_floor * sigma[0])
        ++keep;
    keep = std::max(keep, 1);
    double kept = sigma.head(keep).squaredNorm();
    info.truncation_error = 1.0 - kept / total;

    // pseudo-inverse of W^T with flooring of the tiny environment directions
    Eigen::VectorXd dr_inv(dr.size());
    for (std::int64_t i = 0; i < dr.size(); ++i)
        dr_inv[i] = dr[i] > 1e-28 ? 1.0 / std::sqrt(dr[i]) : 0.0;
    const Mat wt_inv = dr_inv.asDiagonal().toDenseMatrix().cast<cplx>() * er.eigenvectors().adjoint();

    const Mat gauge = wt * svd.matrixV().leftCols(keep);            // chi x keep
    const Mat gauge_inv = svd.matrixV().leftCols(keep).adjoint() * wt_inv;  // keep x chi

    std::array<Mat, 2> b_new;
    for (int s = 0; s < 2; ++s) b_new[s] = gauge_inv * m.site[s] * gauge;
    m.site = b_new;
    m.schmidt = sigma.head(keep) / std::sqrt(kept);
    m.canonical = true;

    info.canonical_defect = detail::canonical_defect(m);
    info.ok = true;
    return info;
}

// Contract the MPO into the site tensor (bond dimension doubles), then
// restore canonical form and truncate. A second, truncation-free pass cleans
// up when the first one leaves a defect above tolerance.
inline StepInfo apply_mpo_step(UniformMps& m, const MpoTensor& mpo, int chi_max,
                               const BmpsOptions& opt = {}) {
    if (!m.canonical) throw std::invalid_argument("apply_mpo_step: canonical input required");
    const int chi = m.chi();
    const int chi2 = 2 * chi;

    std::array<Mat, 2> grown;
    for (int s = 0; s < 2; ++s) grown[s] = Mat::Zero(chi2, chi2);
    for (int sp = 0; sp < 2; ++sp)
        for (int s = 0; s < 2; ++s)
            for (int w = 0; w < 2; ++w)
                for (int wp = 0; wp < 2; ++wp) {
                    const cplx c = mpo.op[w][wp](sp, s);
                    if (c == cplx(0.0)) continue;
                    grown[sp].block(w * chi, wp * chi, chi, chi) += c * m.site[s];
                }

    // warm environments: MPO bond identity times the previous fixed points
    Mat warm_left = Mat::Zero(chi2, chi2);
    Mat warm_right = Mat::Zero(chi2, chi2);
    const Mat lam2 = m.schmidt.array().square().matrix().asDiagonal().toDenseMatrix().cast<cplx>();
    for (int w = 0; w < 2; ++w) {
        warm_left.block(w * chi, w * chi, chi, chi) = lam2;
        warm_right.block(w * chi, w * chi, chi, chi) = Mat::Identity(chi, chi);
    }

    m.site = grown;
    m.schmidt = Eigen::VectorXd::Constant(chi2, 1.0 / std::sqrt(double(chi2)));
    m.canonical = false;

    StepInfo info = canonicalize(m, chi_max, opt, &warm_left, &warm_right);
    if (!info.ok) return info;

    if (info.canonical_defect > opt.canonical_defect_tol) {
        const Mat wl = m.schmidt.array().square().matrix().asDiagonal().toDenseMatrix().cast<cplx>();
        const Mat wr = Mat::Identity(m.chi(), m.chi());
        StepInfo second = canonicalize(m, chi_max, opt, &wl, &wr);
        if (!second.ok) return second;
        second.truncation_error += info.truncation_error;
        second.log_eta += info.log_eta;
        second.env_iterations += info.env_iterations;
        info = second;
    }
    return info;
}

inline double entropy_of_bond(const UniformMps& m) {
    if (!m.canonical) throw std::invalid_argument("entropy_of_bond: canonical form required");
    double s = 0.0;
    for (std::int64_t i = 0; i < m.schmidt.size(); ++i) {
        const double p = m.schmidt[i] * m.schmidt[i];
        if (p > 1e-300) s -= p * std::log(p);
    }
    return s;
}

// <O> on any site; uses the canonical-form environments (diag(lambda^2) left,
// identity right).
inline cplx local_expectation(const UniformMps& m, const Eigen::Matrix2cd& op) {
    if (!m.canonical) throw std::invalid_argument("local_expectation: canonical form required");
    const Eigen::VectorXd lam2 = m.schmidt.array().square();
    cplx acc = 0.0;
    for (int sp = 0; sp < 2; ++sp)
        for (int s = 0; s < 2; ++s) {
            if (op(sp, s) == cplx(0.0)) continue;
            acc += op(sp, s) * (lam2.asDiagonal().toDenseMatrix().cast<cplx>() * m.site[s] *
                                m.site[sp].adjoint())
                                   .trace();
        }
    return acc;
}

// gauge test helper: an arbitrary bond-space rotation of the uniform tensor
inline void apply_gauge(UniformMps& m, const Mat& g) {
    const Mat ginv = g.inverse();
    for (int s = 0; s < 2; ++s) m.site[s] = ginv * m.site[s] * g;
    m.canonical = false;
}

struct ImpsPoint {
    double h_I = 0.0;
    int chi = 0;
    int t = 0;
    double s_chi = 0.0;
    double trunc_err = 0.0;
    double env_residual = 0.0;
    bool ok = true;
    std::string error;
};

// Evolve a uniform product MPS for t_steps under the transfer MPO for every
// (h_I, chi) pair; one audit row per step.
inline std::vector<ImpsPoint> run_imps_sweep(ModelParams base, std::span<const double> h_I_values,
                                             std::span<const int> chi_values, int t_steps,
                                             double theta, double phi,
                                             const BmpsOptions& opt = {}) {
    std::vector<ImpsPoint> rows;
    for (double hi : h_I_values) {
        base.h_I = hi;
        const MpoTensor mpo = build_mpo_tensor(base);
        for (int chi : chi_values) {
            UniformMps m = product_mps(theta, phi);
            for (int t = 1; t <= t_steps; ++t) {
                ImpsPoint row;
                row.h_I = hi;
                row.chi = chi;
                row.t = t;
                StepInfo info = apply_mpo_step(m, mpo, chi, opt);
                if (!info.ok) {
                    row.ok = false;
                    row.error = info.error;
                    rows.push_back(row);
                    break;
                }
                row.s_chi = entropy_of_bond(m);
                row.trunc_err = info.truncation_error;
                row.env_residual = info.env_residual;
                rows.push_back(row);
            }
        }
    }
    return rows;
}

}  // namespace tmlab
