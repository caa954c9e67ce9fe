#pragma once

// Non-Hermitian spectral analysis of the transfer matrix: full biorthogonal
// eigendecomposition, matrix-free leading eigenvalues, spectral gaps and the
// eigenvalue pairing symmetry at J = n pi/4.
//
// Eigenvalues are reported as (rho, phi) with lambda = e^{rho + i phi},
// sorted rho_0 >= rho_1 >= ... . Right eigenvectors satisfy <r|r> = 1; left
// eigenvectors are stored as the rows of a matrix with left * right = I.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <lapacke.h>

#include "tmlab/hilbert.hpp"
#include "tmlab/rng.hpp"
#include "tmlab/transfer.hpp"

namespace tmlab {

struct SpectrumResult {
    std::vector<double> rho;  // log magnitudes, descending
    std::vector<double> phi;  // phases, same order
    Mat right;                // columns r_alpha (empty in values-only mode)
    Mat left;                 // rows l_alpha with left * right = I
    std::vector<char> degenerate;  // 1 where |lambda_a - lambda_b| < tol for some b
    bool left_from_adjoint = false;
    std::string sector_label = "full";
    ModelParams params;

    std::size_t size() const { return rho.size(); }
    cplx eigenvalue(std::size_t i) const { return std::polar(std::exp(rho[i]), phi[i]); }
};

struct EigOptions {
    bool vectors = true;
    double cond_limit = 1e8;       // switch to the adjoint route above this
    double degeneracy_tol = 1e-9;  // |lambda_a - lambda_b| flagging threshold
};

namespace detail {

inline void lapack_eig(Mat a, std::vector<cplx>& w, Mat* vl, Mat* vr) {
    const int n = static_cast<int>(a.rows());
    w.resize(n);
    if (vl) vl->resize(n, n);
    if (vr) vr->resize(n, n);
    const int info = LAPACKE_zgeev(
        LAPACK_COL_MAJOR, vl ? 'V' : 'N', vr ? 'V' : 'N', n,
        reinterpret_cast<lapack_complex_double*>(a.data()), n,
        reinterpret_cast<lapack_complex_double*>(w.data()),
        vl ? reinterpret_cast<lapack_complex_double*>(vl->data()) : nullptr, n,
        vr ? reinterpret_cast<lapack_complex_double*>(vr->data()) : nullptr, n);
    if (info != 0)
        throw std::runtime_error("zgeev failed to converge (info=" + std::to_string(info) + ")");
}

inline std::vector<std::size_t> sort_by_rho_desc(const std::vector<cplx>& w) {
    std::vector<std::size_t> idx(w.size());
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double ra = std::abs(w[a]), rb = std::abs(w[b]);
        if (ra != rb) return ra > rb;
        return std::arg(w[a]) < std::arg(w[b]);
    });
    return idx;
}

}  // namespace detail

inline SpectrumResult eig_full(const Mat& t, const EigOptions& opt = {}) {
    if (t.rows() != t.cols()) throw std::invalid_argument("eig_full: matrix must be square");
    const std::int64_t n = t.rows();

    SpectrumResult res;
    std::vector<cplx> w;
    Mat vr, vl;
    detail::lapack_eig(t, w, opt.vectors ? &vl : nullptr, opt.vectors ? &vr : nullptr);

    const auto order = detail::sort_by_rho_desc(w);
    res.rho.resize(n);
    res.phi.resize(n);
    std::vector<cplx> lam(n);
    for (std::int64_t i = 0; i < n; ++i) {
        lam[i] = w[order[i]];
        res.rho[i] = std::log(std::abs(lam[i]));
        res.phi[i] = std::arg(lam[i]);
    }

    res.degenerate.assign(n, 0);
    for (std::int64_t i = 0; i + 1 < n; ++i) {
        // neighbours in modulus are the only candidates after sorting
        for (std::int64_t j = i + 1; j < n && std::abs(std::abs(lam[j]) - std::abs(lam[i])) < opt.degeneracy_tol; ++j) {
            if (std::abs(lam[i] - lam[j]) < opt.degeneracy_tol) {
                res.degenerate[i] = res.degenerate[j] = 1;
            }
        }
    }

    if (opt.vectors) {
        res.right.resize(n, n);
        for (std::int64_t i = 0; i < n; ++i) {
            res.right.col(i) = vr.col(order[i]);
            res.right.col(i).normalize();
        }
        // Left eigenvectors from inversion of the right matrix when it is well
        // conditioned; this gives <l_a|r_b> = delta exactly. Otherwise fall
        // back to zgeev's adjoint-problem vectors, rescaled pairwise.
        Eigen::PartialPivLU<Mat> lu(res.right);
        const Mat rinv = lu.solve(Mat::Identity(n, n));
        const double cond =
            res.right.cwiseAbs().colwise().sum().maxCoeff() * rinv.cwiseAbs().colwise().sum().maxCoeff();
        if (cond < opt.cond_limit) {
            res.left = rinv;
        } else {
            res.left_from_adjoint = true;
            res.left.resize(n, n);
            for (std::int64_t i = 0; i < n; ++i) {
                Eigen::RowVectorXcd row = vl.col(order[i]).adjoint();
                const cplx lr = row * res.right.col(i);
                if (std::abs(lr) < 1e-300)
                    throw std::runtime_error("eig_full: defective pair, cannot biorthonormalize");
                res.left.row(i) = row / lr;
            }
        }
    }
    return res;
}

// Convenience wrappers carrying the params echo and sector label.
inline SpectrumResult spectrum_of(const ModelParams& p, const EigOptions& opt = {}) {
    SpectrumResult r = eig_full(build_dense_T(p), opt);
    r.params = p;
    r.sector_label = "full";
    return r;
}

inline SpectrumResult spectrum_of(const ModelParams& p, const SectorBasis& basis,
                                  const EigOptions& opt = {}) {
    SpectrumResult r = eig_full(build_dense_T(p, basis), opt);
    r.params = p;
    r.sector_label = basis.label();
    return r;
}

// ---------------------------------------------------------------------------
// Iterative leading eigenvalues on a matrix-free operator.

using LinearOp = std::function<void(const Vec&, Vec&)>;

enum class IterMode { power, subspace };

struct LeadingEigsOptions {
    IterMode mode = IterMode::subspace;
    int max_iter = 400;          // Arnoldi restarts (or power steps / 10)
    int krylov = 0;              // 0 = automatic
    double tol = 1e-10;          // relative Ritz residual target
    std::uint64_t seed = 77;
};

struct LeadingEigsResult {
    std::vector<cplx> values;       // sorted by modulus, descending
    Mat vectors;                    // columns, unit norm
    std::vector<double> residuals;  // ||T r - lambda r|| per pair
    bool converged = false;
    int iterations = 0;
};

namespace detail {

inline void ritz_from_krylov(const Mat& v, const Mat& h, int k, int m,
                             std::vector<cplx>& values, Mat& vectors,
                             std::vector<double>& rayleigh_residuals) {
    // eigen-decompose the k x k Hessenberg block
    std::vector<cplx> w;
    Mat hy;
    lapack_eig(h.topLeftCorner(k, k), w, nullptr, &hy);
    const auto order = sort_by_rho_desc(w);
    const int take = std::min(m, k);
    values.resize(take);
    vectors.resize(v.rows(), take);
    rayleigh_residuals.resize(take);
    const double beta = std::abs(h(k, k - 1));
    for (int i = 0; i < take; ++i) {
        const auto oi = order[i];
        values[i] = w[oi];
        vectors.col(i) = v.leftCols(k) * hy.col(oi);
        vectors.col(i).normalize();
        // classical Arnoldi residual estimate |beta * last component|
        rayleigh_residuals[i] = beta * std::abs(hy(k - 1, oi));
    }
}

}  // namespace detail

// Restarted Arnoldi (mode subspace) or plain power iteration (mode power).
// Residual norms are always verified explicitly before reporting success;
// flat-|lambda| spectra (h_I = 0) leave residuals O(1) and are reported as
// non-converged best estimates, which callers must check.
inline LeadingEigsResult leading_eigs(const LinearOp& op, std::int64_t dim, int count,
                                      const LeadingEigsOptions& opt = {},
                                      const Vec* warm_start = nullptr) {
    if (count < 1) throw std::invalid_argument("leading_eigs: count must be >= 1");
    if (opt.mode == IterMode::power && count != 1)
        throw std::invalid_argument("leading_eigs: power mode computes a single eigenvalue");
    if (count >= dim) throw std::invalid_argument("leading_eigs: count must be << dim");

    LeadingEigsResult res;
    Rng rng(opt.seed);
    Vec v0(dim);
    if (warm_start && warm_start->size() == dim) {
        v0 = *warm_start;
    } else {
        for (std::int64_t i = 0; i < dim; ++i) v0[i] = rng.normal_complex();
    }
    v0.normalize();

    Vec tmp(dim);

    if (opt.mode == IterMode::power) {
        cplx theta = 0.0;
        for (int it = 0; it < opt.max_iter * 10; ++it) {
            op(v0, tmp);
            theta = v0.dot(tmp);  // Rayleigh quotient
            const double rnorm = (tmp - theta * v0).norm();
            res.iterations = it + 1;
            const double scale = std::max(1.0, std::abs(theta));
            if (rnorm < opt.tol * scale) {
                res.converged = true;
                v0 = tmp.normalized();
                break;
            }
            v0 = tmp.normalized();
        }
        op(v0, tmp);
        theta = v0.dot(tmp);
        res.values = {theta};
        res.vectors = v0;
        res.residuals = {(tmp - theta * v0).norm()};
        res.converged = res.residuals[0] < 1e-8;
        return res;
    }

    const int k_dim = opt.krylov > 0
                          ? opt.krylov
                          : static_cast<int>(std::min<std::int64_t>(dim - 1, 4 * count + 12));
    Mat v(dim, k_dim + 1);
    Mat h = Mat::Zero(k_dim + 1, k_dim);

    for (int restart = 0; restart < opt.max_iter; ++restart) {
        res.iterations = restart + 1;
        v.col(0) = v0;
        int k = k_dim;
        for (int j = 0; j < k_dim; ++j) {
            op(v.col(j), tmp);
            for (int i = 0; i <= j; ++i) {
                h(i, j) = v.col(i).dot(tmp);
                tmp -= h(i, j) * v.col(i);
            }
            // one re-orthogonalization pass keeps the basis clean
            for (int i = 0; i <= j; ++i) {
                const cplx c = v.col(i).dot(tmp);
                h(i, j) += c;
                tmp -= c * v.col(i);
            }
            h(j + 1, j) = tmp.norm();
            if (std::abs(h(j + 1, j)) < 1e-14) {
                k = j + 1;  // invariant subspace found
                break;
            }
            v.col(j + 1) = tmp / h(j + 1, j);
        }

        std::vector<double> est;
        detail::ritz_from_krylov(v, h, k, count, res.values, res.vectors, est);
        const double scale = std::max(1.0, std::abs(res.values[0]));
        const double target = std::min(opt.tol * scale, 5e-9);
        const double worst = *std::max_element(est.begin(), est.begin() + res.values.size());
        if (worst < target || k < k_dim) break;

        // restart from the span of the wanted Ritz vectors
        v0 = res.vectors.col(0);
        for (int i = 1; i < static_cast<int>(res.values.size()); ++i)
            v0 += res.vectors.col(i) * (0.5 / (i + 1.0));
        v0.normalize();
    }

    res.residuals.resize(res.values.size());
    bool ok = true;
    for (std::size_t i = 0; i < res.values.size(); ++i) {
        op(res.vectors.col(i), tmp);
        res.residuals[i] = (tmp - res.values[i] * res.vectors.col(i)).norm();
        if (res.residuals[i] >= 1e-8) ok = false;  // success contract: ||T r - lambda r|| < 1e-8
    }
    res.converged = ok;
    return res;
}

// Matrix-free operator for T restricted to a sector (lift/apply/project) or
// the full space.
inline LinearOp make_transfer_op(const ModelParams& p,
                                 std::shared_ptr<const SectorBasis> basis = nullptr) {
    auto applier = std::make_shared<TransferApplier>(p);
    if (!basis) {
        return [applier](const Vec& in, Vec& out) {
            out = in;
            applier->apply(out);
        };
    }
    if (p.boundary != Boundary::periodic)
        throw std::invalid_argument("make_transfer_op: sectors require periodic boundaries");
    return [applier, basis](const Vec& in, Vec& out) {
        RowState s;
        s.sites = basis->sites;
        s.basis = basis;
        s.amplitudes = in;
        RowState full = lift(s);
        applier->apply(full.amplitudes);
        out = project(full, basis).amplitudes;
    };
}

// ---------------------------------------------------------------------------
// Gaps and pairing symmetry.

inline double spectral_gap(const SpectrumResult& s) {
    if (s.size() < 2) throw std::invalid_argument("spectral_gap: need at least two eigenvalues");
    return s.rho[0] - s.rho[1];
}

// Gap below the leading multiplet: eigenvalues with |lambda| within deg_tol of
// the largest are grouped first, as needed when reflection pairs +-k leading
// states are exactly degenerate.
inline double spectral_gap_below_multiplet(const SpectrumResult& s, double deg_tol = 1e-9) {
    if (s.size() < 2) throw std::invalid_argument("spectral_gap: need at least two eigenvalues");
    const double top = std::exp(s.rho[0]);
    std::size_t i = 1;
    while (i < s.size() && top - std::exp(s.rho[i]) < deg_tol) ++i;
    if (i == s.size()) return 0.0;
    return s.rho[0] - s.rho[i];
}

struct PairingCheck {
    bool applicable = false;
    double rho_deviation = 0.0;    // sorted multiset distance {rho} vs {-rho}
    double phase_deviation = 0.0;  // max |arg(lambda_a lambda_b) + n L pi/2| over matched pairs
};

// At J = n pi/4 the spectrum satisfies lambda_a lambda_b = i^{-nL} in pairs,
// hence {rho} = {-rho} as multisets.
inline PairingCheck pairing_check(const SpectrumResult& s, double J, int L) {
    PairingCheck out;
    const double ratio = J / (M_PI / 4.0);
    const double n_real = std::round(ratio);
    if (std::abs(ratio - n_real) > 1e-12) return out;  // not applicable
    out.applicable = true;
    const int n = static_cast<int>(n_real);

    std::vector<double> asc(s.rho.rbegin(), s.rho.rend());
    double dev = 0.0;
    for (std::size_t i = 0; i < asc.size(); ++i)
        dev = std::max(dev, std::abs(asc[i] + asc[asc.size() - 1 - i]));
    out.rho_deviation = dev;

    // greedy pair matching in the complex plane against the target product
    const cplx target = std::exp(cplx(0.0, -0.5 * M_PI * n * L));
    const std::size_t m = s.size();
    std::vector<char> used(m, 0);
    double phase_dev = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
        if (used[a]) continue;
        const cplx la = s.eigenvalue(a);
        std::size_t best = m;
        double best_d = 1e300;
        for (std::size_t b = a; b < m; ++b) {
            if (used[b]) continue;
            if (std::abs(s.rho[a] + s.rho[b]) > 10.0 * (out.rho_deviation + 1e-12) + 1e-6) continue;
            const double d = std::abs(la * s.eigenvalue(b) - target);
            if (d < best_d) {
                best_d = d;
                best = b;
            }
        }
        if (best == m) {  // fall back to an unrestricted scan
            for (std::size_t b = a; b < m; ++b) {
                if (used[b]) continue;
                const double d = std::abs(la * s.eigenvalue(b) - target);
                if (d < best_d) {
                    best_d = d;
                    best = b;
                }
            }
        }
        used[a] = used[best] = 1;
        const cplx prod = la * s.eigenvalue(best);
        phase_dev = std::max(phase_dev, std::abs(std::arg(prod * std::conj(target))));
    }
    out.phase_deviation = phase_dev;
    return out;
}

}  // namespace tmlab
