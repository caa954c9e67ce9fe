#pragma once

// The kicked-Ising transfer matrix
//
//   T = exp(-i g sum_j X_j) * exp(-i J sum_j Z_j Z_{j+1} - i h sum_j Z_j),
//
// h = h_R + i h_I, built in dense, matrix-free and MPO form, plus the
// brute-force partition-function oracle for <s'|T^t|s>. The Z_L = Z_0 wrap
// bond is present under periodic boundaries and absent under open ones;
// open boundaries keep all on-site field terms.
//
// Spin convention: s = +1 for |0>, s = -1 for |1>, so the signs in the
// diagonal factor match the Z eigenvalues directly.

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "tmlab/hilbert.hpp"
#include "tmlab/rng.hpp"

namespace tmlab {

enum class Boundary { periodic, open };

inline std::string boundary_name(Boundary b) {
    return b == Boundary::periodic ? "pbc" : "obc";
}

struct ModelParams {
    int sites = 0;
    double J = M_PI / 4.0;   // cluster-state couplings J = -g = pi/4
    double g = -M_PI / 4.0;
    double h_R = 0.0;
    double h_I = 0.0;
    Boundary boundary = Boundary::periodic;

    cplx h() const { return {h_R, h_I}; }
};

// Bloch angles of the contracted product state fix the complex field:
// h_R = -phi/2, h_I = -log(tan(theta/2))/2. Poles are excluded (h_I diverges).
inline cplx field_from_bloch(double theta, double phi) {
    if (!(theta > 0.0 && theta < M_PI))
        throw std::invalid_argument("field_from_bloch: theta must lie strictly between the poles");
    return {-phi / 2.0, -0.5 * std::log(std::tan(theta / 2.0))};
}

inline Eigen::Matrix2cd kick_matrix(double g) {
    Eigen::Matrix2cd k;
    const cplx mis(0.0, -std::sin(g));
    k << std::cos(g), mis, mis, std::cos(g);
    return k;
}

// U_0 = e^{-i g X} e^{-i h Z}
inline Eigen::Matrix2cd u0_matrix(double g, cplx h) {
    Eigen::Matrix2cd d = Eigen::Matrix2cd::Zero();
    d(0, 0) = std::exp(cplx(0.0, -1.0) * h);
    d(1, 1) = std::exp(cplx(0.0, 1.0) * h);
    return kick_matrix(g) * d;
}

// Local MPO tensor M with T = tr(M^L) over the 2-dimensional virtual index:
//   M_ab = c_a * U_0 * Z^{(a+b) mod 2},  c_0 = cos(J), c_1 = -i sin(J).
struct MpoTensor {
    Eigen::Matrix2cd op[2][2];
};

inline MpoTensor build_mpo_tensor(const ModelParams& p) {
    const Eigen::Matrix2cd u0 = u0_matrix(p.g, p.h());
    Eigen::Matrix2cd z = Eigen::Matrix2cd::Zero();
    z(0, 0) = 1.0;
    z(1, 1) = -1.0;
    const cplx c[2] = {cplx(std::cos(p.J), 0.0), cplx(0.0, -std::sin(p.J))};
    MpoTensor m;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            m.op[a][b] = ((a + b) % 2) ? Eigen::Matrix2cd(c[a] * u0 * z)
                                       : Eigen::Matrix2cd(c[a] * u0);
    return m;
}

struct DisorderRealization {
    std::vector<double> h_R_site;
    double h_I = 0.0;
    std::uint64_t seed = 0;
};

// h_{R,j} i.i.d. Normal(mean, sigma); the generating seed is kept with the
// realization so every derived number can be traced back to it.
inline DisorderRealization sample_disorder(int L, double mean, double sigma, double h_I,
                                           std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("sample_disorder: sigma must be >= 0");
    DisorderRealization d;
    d.h_I = h_I;
    d.seed = seed;
    Rng rng(seed);
    d.h_R_site.resize(L);
    for (int j = 0; j < L; ++j) d.h_R_site[j] = mean + sigma * rng.normal();
    return d;
}

// Matrix-free application of T to full-space vectors: one diagonal phase pass
// (ZZ and field terms, O(2^L)) followed by L single-site kick rotations.
class TransferApplier {
  public:
    explicit TransferApplier(const ModelParams& p) : params_(p) {
        std::vector<cplx> site_fields(p.sites, p.h());
        build_diag(site_fields);
    }

    TransferApplier(const ModelParams& p, const DisorderRealization& d) : params_(p) {
        if (static_cast<int>(d.h_R_site.size()) != p.sites)
            throw std::invalid_argument("TransferApplier: disorder length != L");
        std::vector<cplx> site_fields(p.sites);
        for (int j = 0; j < p.sites; ++j) site_fields[j] = cplx(d.h_R_site[j], d.h_I);
        build_diag(site_fields);
    }

    int sites() const { return params_.sites; }

    void apply(Vec& state) const {
        const int L = params_.sites;
        if (state.size() != diag_.size())
            throw std::invalid_argument("TransferApplier::apply: dimension mismatch");
        state.array() *= diag_.array();
        const cplx c = std::cos(params_.g);
        const cplx mis(0.0, -std::sin(params_.g));
        cplx* a = state.data();
        for (int j = 0; j < L; ++j) {
            const std::int64_t bit = std::int64_t(1) << j;
            for (std::int64_t base = 0; base < state.size(); ++base) {
                if (base & bit) continue;
                const cplx a0 = a[base];
                const cplx a1 = a[base | bit];
                a[base] = c * a0 + mis * a1;
                a[base | bit] = mis * a0 + c * a1;
            }
        }
    }

    Vec applied(const Vec& in) const {
        Vec out = in;
        apply(out);
        return out;
    }

  private:
    void build_diag(const std::vector<cplx>& site_fields) {
        const int L = params_.sites;
        if (L < 1 || L > 24) throw std::invalid_argument("TransferApplier: L out of range");
        const std::int64_t dim = std::int64_t(1) << L;
        const std::uint32_t mask = (L == 32) ? ~0u : ((1u << L) - 1u);
        diag_.resize(dim);

        bool uniform = true;
        for (const cplx& h : site_fields)
            if (h != site_fields[0]) uniform = false;

        for (std::int64_t n = 0; n < dim; ++n) {
            const std::uint32_t x = static_cast<std::uint32_t>(n);
            int bond_sum;
            if (params_.boundary == Boundary::periodic) {
                const std::uint32_t mism = x ^ translate_bits(x, L);
                bond_sum = L - 2 * __builtin_popcount(mism);
            } else {
                const std::uint32_t mism = (x ^ (x >> 1)) & (mask >> 1);
                bond_sum = (L - 1) - 2 * __builtin_popcount(mism);
            }
            cplx field_term;
            if (uniform) {
                const int mag = L - 2 * __builtin_popcount(x);
                field_term = site_fields[0] * double(mag);
            } else {
                field_term = 0.0;
                for (int j = 0; j < L; ++j)
                    field_term += site_fields[j] * ((x >> j) & 1u ? -1.0 : 1.0);
            }
            diag_[n] = std::exp(cplx(0.0, -1.0) * (params_.J * double(bond_sum) + field_term));
        }
    }

    ModelParams params_;
    Vec diag_;
};

// Apply T once; sector states go through lift -> apply -> project, which is
// exact under periodic boundaries where T commutes with the sector projector.
inline void apply_T(const ModelParams& p, RowState& state) {
    TransferApplier op(p);
    if (!state.in_sector()) {
        op.apply(state.amplitudes);
        return;
    }
    if (p.boundary != Boundary::periodic)
        throw std::invalid_argument("apply_T: symmetry sectors require periodic boundaries");
    auto basis = state.basis;
    RowState full = lift(state);
    op.apply(full.amplitudes);
    state = project(full, basis);
}

namespace detail {
inline void check_dense_guard(std::size_t dim, std::size_t guard) {
    if (dim > guard)
        throw std::invalid_argument("build_dense_T: dimension " + std::to_string(dim) +
                                    " exceeds resource guard " + std::to_string(guard));
}
}  // namespace detail

// Dense T on the full space (guarded at 2^14 by default).
inline Mat build_dense_T(const ModelParams& p, std::size_t dim_guard = std::size_t(1) << 14) {
    const std::int64_t dim = std::int64_t(1) << p.sites;
    detail::check_dense_guard(static_cast<std::size_t>(dim), dim_guard);
    TransferApplier op(p);
    Mat t(dim, dim);
    Vec col = Vec::Zero(dim);
    for (std::int64_t j = 0; j < dim; ++j) {
        col.setZero();
        col[j] = 1.0;
        op.apply(col);
        t.col(j) = col;
    }
    return t;
}

// Dense T restricted to one symmetry sector (guarded at 2^15 by default).
// Meaningful only under periodic boundaries, where the sector is invariant.
inline Mat build_dense_T(const ModelParams& p, const SectorBasis& basis,
                         std::size_t dim_guard = std::size_t(1) << 15) {
    if (p.boundary != Boundary::periodic)
        throw std::invalid_argument("build_dense_T: sector blocks require periodic boundaries");
    if (basis.sites != p.sites) throw std::invalid_argument("build_dense_T: L mismatch");
    detail::check_dense_guard(basis.dim(), dim_guard);

    auto shared = std::make_shared<SectorBasis>(basis);
    TransferApplier op(p);
    const std::size_t d = basis.dim();
    Mat t(d, d);
    RowState e;
    e.sites = basis.sites;
    e.basis = shared;
    e.amplitudes = Vec::Zero(d);
    for (std::size_t j = 0; j < d; ++j) {
        e.amplitudes.setZero();
        e.amplitudes[j] = 1.0;
        RowState full = lift(e);
        op.apply(full.amplitudes);
        t.col(j) = project(full, shared).amplitudes;
    }
    return t;
}

// Caches the h-independent kick block of a sector so that ensembles sweeping
// the field only pay a diagonal rescaling plus the eigensolve per draw.
class SectorTransferBuilder {
  public:
    SectorTransferBuilder(const ModelParams& p, const SectorBasis& basis)
        : J_(p.J), basis_(std::make_shared<SectorBasis>(basis)) {
        if (p.boundary != Boundary::periodic)
            throw std::invalid_argument("SectorTransferBuilder: periodic boundaries only");
        const int L = basis.sites;
        const std::size_t d = basis.dim();
        ModelParams kick_only = p;
        kick_only.J = 0.0;
        kick_only.h_R = 0.0;
        kick_only.h_I = 0.0;
        TransferApplier op(kick_only);
        kick_block_.resize(d, d);
        RowState e;
        e.sites = L;
        e.basis = basis_;
        e.amplitudes = Vec::Zero(d);
        for (std::size_t j = 0; j < d; ++j) {
            e.amplitudes.setZero();
            e.amplitudes[j] = 1.0;
            RowState full = lift(e);
            op.apply(full.amplitudes);
            kick_block_.col(j) = project(full, basis_).amplitudes;
        }
        bond_sum_.resize(d);
        magnetization_.resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            const std::uint32_t x = basis.representatives[j];
            bond_sum_[j] = L - 2 * __builtin_popcount(x ^ translate_bits(x, L));
            magnetization_[j] = L - 2 * __builtin_popcount(x);
        }
    }

    const SectorBasis& basis() const { return *basis_; }

    Mat dense(double h_R, double h_I) const {
        const cplx h(h_R, h_I);
        Mat t = kick_block_;
        for (std::size_t j = 0; j < bond_sum_.size(); ++j) {
            const cplx phase =
                std::exp(cplx(0.0, -1.0) * (J_ * double(bond_sum_[j]) + h * double(magnetization_[j])));
            t.col(j) *= phase;
        }
        return t;
    }

  private:
    double J_;
    std::shared_ptr<const SectorBasis> basis_;
    Mat kick_block_;
    std::vector<int> bond_sum_;
    std::vector<int> magnetization_;
};

// <psi_f|T^t|psi_i> as (mantissa, accumulated log magnitude); the product
// mantissa * exp(log_magnitude) recovers the overlap without ever forming
// numbers of order e^{rho_0 t}.
struct OverlapResult {
    cplx mantissa = 0.0;
    double log_magnitude = 0.0;
    bool annihilated = false;

    cplx value() const { return annihilated ? cplx(0.0) : mantissa * std::exp(log_magnitude); }
};

inline OverlapResult overlap_via_powers(const ModelParams& p, const RowState& psi_i,
                                        const RowState& psi_f, int t) {
    if (t < 0) throw std::invalid_argument("overlap_via_powers: t must be >= 0");
    Vec state = psi_i.in_sector() ? lift(psi_i).amplitudes : psi_i.amplitudes;
    const Vec final_state = psi_f.in_sector() ? lift(psi_f).amplitudes : psi_f.amplitudes;

    OverlapResult res;
    TransferApplier op(p);
    for (int step = 0; step < t; ++step) {
        op.apply(state);
        const double n = state.norm();
        if (!(n > 0.0)) {
            res.annihilated = true;
            return res;
        }
        if (!std::isfinite(n)) throw std::runtime_error("overlap_via_powers: amplitude overflow");
        state /= n;
        res.log_magnitude += std::log(n);
    }
    res.mantissa = final_state.dot(state);
    return res;
}

// Single-step matrix element <s'|T|s> = prod_j <s'_j|e^{-i g X}|s_j>
//                                       * exp(-i J sum s_j s_{j+1} - i h sum s_j).
inline cplx transfer_element(const ModelParams& p, std::uint32_t s_out, std::uint32_t s_in) {
    const int L = p.sites;
    const std::uint32_t mask = (L == 32) ? ~0u : ((1u << L) - 1u);
    const int flips = __builtin_popcount((s_out ^ s_in) & mask);
    const cplx kick = std::pow(cplx(std::cos(p.g), 0.0), L - flips) *
                      std::pow(cplx(0.0, -std::sin(p.g)), flips);
    int bond_sum;
    if (p.boundary == Boundary::periodic) {
        bond_sum = L - 2 * __builtin_popcount(s_in ^ translate_bits(s_in, L));
    } else {
        bond_sum = (L - 1) - 2 * __builtin_popcount((s_in ^ (s_in >> 1)) & (mask >> 1));
    }
    const int mag = L - 2 * __builtin_popcount(s_in);
    return kick * std::exp(cplx(0.0, -1.0) * (p.J * double(bond_sum) + p.h() * double(mag)));
}

// <s_f|T^t|s_i> by explicit summation over all intermediate row
// configurations. Exponential in L*(t-1); guarded accordingly.
inline cplx spin_sum_oracle(const ModelParams& p, std::uint32_t s_i, std::uint32_t s_f, int t) {
    if (t < 0) throw std::invalid_argument("spin_sum_oracle: t must be >= 0");
    if (t == 0) return s_i == s_f ? 1.0 : 0.0;
    const int L = p.sites;
    const int inner_rows = t - 1;
    if (std::int64_t(L) * inner_rows > 24)
        throw std::invalid_argument("spin_sum_oracle: L*(t-1) exceeds the 24-bit guard");
    if (inner_rows == 0) return transfer_element(p, s_f, s_i);

    const std::int64_t total = std::int64_t(1) << (L * inner_rows);
    const std::uint32_t row_mask = (1u << L) - 1u;
    cplx sum = 0.0;
    for (std::int64_t cfg = 0; cfg < total; ++cfg) {
        cplx term = 1.0;
        std::uint32_t prev = s_i;
        for (int m = 0; m < inner_rows; ++m) {
            const std::uint32_t row = static_cast<std::uint32_t>(cfg >> (m * L)) & row_mask;
            term *= transfer_element(p, row, prev);
            prev = row;
        }
        sum += term * transfer_element(p, s_f, prev);
    }
    return sum;
}

}  // namespace tmlab
