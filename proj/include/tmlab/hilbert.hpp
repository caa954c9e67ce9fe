#pragma once

// Row Hilbert-space bookkeeping: computational basis over L ring sites,
// translation/reflection symmetry sectors, row-state constructors and
// bipartition maps for entanglement cuts.
//
// Conventions used throughout the project:
//   * bit j of a basis index is the spin at site j; bit 0 <-> |0>, spin s=+1.
//   * translation tau moves site j to j+1 (mod L), i.e. rotates the bit
//     pattern upward; reflection sigma maps site j to L-1-j (bit reversal),
//     the mirror axis passing through the bond between sites L-1 and 0.
//   * a symmetry sector is labelled by momentum k in [0,L) and a reflection
//     parity; parity is meaningful only for k=0 and k=L/2, where the
//     dihedral group has one-dimensional characters.

#include <complex>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tmlab/rng.hpp"

namespace tmlab {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;

enum class Parity { even, odd, none };

inline std::string parity_name(Parity p) {
    switch (p) {
        case Parity::even: return "even";
        case Parity::odd: return "odd";
        default: return "none";
    }
}

inline std::uint32_t translate_bits(std::uint32_t x, int L) {
    const std::uint32_t mask = (L == 32) ? ~0u : ((1u << L) - 1u);
    return ((x << 1) | (x >> (L - 1))) & mask;
}

inline std::uint32_t reflect_bits(std::uint32_t x, int L) {
    std::uint32_t r = 0;
    for (int j = 0; j < L; ++j)
        if (x & (1u << j)) r |= 1u << (L - 1 - j);
    return r;
}

// g = (r, f): reflect first when f=1, then translate r times.
inline std::uint32_t apply_group_element(std::uint32_t x, int L, int r, int f) {
    std::uint32_t y = f ? reflect_bits(x, L) : x;
    for (int i = 0; i < r; ++i) y = translate_bits(y, L);
    return y;
}

// Orthonormal basis of one (momentum, parity) block of the 2^L row space.
// Only orbit representatives and their norms are stored; sector vectors are
// materialized on demand by lift().
struct SectorBasis {
    int sites = 0;
    int momentum_k = 0;
    Parity parity = Parity::none;
    std::vector<std::uint32_t> representatives;
    std::vector<double> norms;  // norm of P|rep>, P the sector projector

    std::size_t dim() const { return representatives.size(); }

    int group_order() const { return parity == Parity::none ? sites : 2 * sites; }

    // character chi(r, f) = exp(i 2 pi k r / L) * p^f
    cplx character(int r, int f) const {
        const double ang = 2.0 * M_PI * momentum_k * r / sites;
        cplx c = std::polar(1.0, ang);
        if (f && parity == Parity::odd) c = -c;
        return c;
    }

    std::string label() const {
        if (momentum_k == 0 && parity == Parity::even) return "0+";
        if (momentum_k == 0 && parity == Parity::odd) return "0-";
        std::string s = "k" + std::to_string(momentum_k);
        if (parity == Parity::even) s += "+";
        if (parity == Parity::odd) s += "-";
        return s;
    }
};

inline SectorBasis build_sector_basis(int L, int k, Parity parity) {
    if (L < 2 || L > 24) throw std::invalid_argument("build_sector_basis: L must be in [2, 24]");
    if (k < 0 || k >= L) throw std::invalid_argument("build_sector_basis: k must be in [0, L)");
    if (parity != Parity::none && !(k == 0 || 2 * k == L))
        throw std::invalid_argument(
            "build_sector_basis: reflection parity only applies to k=0 and k=L/2");

    SectorBasis basis;
    basis.sites = L;
    basis.momentum_k = k;
    basis.parity = parity;

    const int nf = parity == Parity::none ? 1 : 2;
    const int order = nf * L;
    const std::uint32_t nstates = 1u << L;

    for (std::uint32_t a = 0; a < nstates; ++a) {
        // lexicographically smallest orbit member is the representative
        bool is_rep = true;
        cplx stab_sum = 0.0;
        for (int f = 0; f < nf && is_rep; ++f) {
            std::uint32_t y = f ? reflect_bits(a, L) : a;
            for (int r = 0; r < L; ++r) {
                if (y < a) {
                    is_rep = false;
                    break;
                }
                if (y == a) stab_sum += std::conj(basis.character(r, f));
                y = translate_bits(y, L);
            }
        }
        if (!is_rep) continue;
        // the symmetrized state survives iff the character is trivial on the
        // stabilizer, in which case <a|P|a> = |Stab| / |G|
        if (std::abs(stab_sum) < 0.5) continue;
        basis.representatives.push_back(a);
        basis.norms.push_back(std::sqrt(stab_sum.real() / order));
    }
    return basis;
}

// Canonical complete list of sectors: (0,+-), (L/2,+-) and plain momentum
// sectors elsewhere. Dims over this list sum to 2^L.
inline std::vector<std::pair<int, Parity>> sector_enumeration(int L) {
    std::vector<std::pair<int, Parity>> out;
    for (int k = 0; k < L; ++k) {
        if (k == 0 || 2 * k == L) {
            out.emplace_back(k, Parity::even);
            out.emplace_back(k, Parity::odd);
        } else {
            out.emplace_back(k, Parity::none);
        }
    }
    return out;
}

// Complex amplitude vector over a sector or the full row space. log_norm
// accumulates the logs of norms divided out during non-unitary evolution.
struct RowState {
    Vec amplitudes;
    std::shared_ptr<const SectorBasis> basis;  // null => full 2^L space
    int sites = 0;
    double log_norm = 0.0;

    bool in_sector() const { return basis != nullptr; }

    double norm() const { return amplitudes.norm(); }

    void normalize() {
        const double n = amplitudes.norm();
        if (!(n > 0.0) || !std::isfinite(n))
            throw std::runtime_error("RowState::normalize: zero or non-finite norm");
        amplitudes /= n;
        log_norm += std::log(n);
        if (!std::isfinite(log_norm))
            throw std::runtime_error("RowState::normalize: log-norm accumulator overflow");
    }
};

inline RowState full_space_state(int L, Vec amplitudes) {
    RowState s;
    s.sites = L;
    s.amplitudes = std::move(amplitudes);
    return s;
}

inline RowState lift(const RowState& state) {
    if (!state.in_sector()) throw std::invalid_argument("lift: state is already in full space");
    const SectorBasis& b = *state.basis;
    const int L = b.sites;
    const int nf = b.parity == Parity::none ? 1 : 2;
    const int order = b.group_order();

    RowState out;
    out.sites = L;
    out.log_norm = state.log_norm;
    out.amplitudes = Vec::Zero(std::int64_t(1) << L);
    for (std::size_t i = 0; i < b.dim(); ++i) {
        const cplx c = state.amplitudes[i] / (double(order) * b.norms[i]);
        for (int f = 0; f < nf; ++f) {
            std::uint32_t y = f ? reflect_bits(b.representatives[i], L) : b.representatives[i];
            for (int r = 0; r < L; ++r) {
                out.amplitudes[y] += c * std::conj(b.character(r, f));
                y = translate_bits(y, L);
            }
        }
    }
    return out;
}

// Component of a full-space state inside the sector. The returned norm may be
// ~0 (state orthogonal to the sector); callers decide what a negligible
// projection means for them.
inline RowState project(const RowState& state, std::shared_ptr<const SectorBasis> basis) {
    if (state.in_sector()) throw std::invalid_argument("project: input must be a full-space state");
    const SectorBasis& b = *basis;
    if (state.sites != b.sites) throw std::invalid_argument("project: site-count mismatch");
    const int L = b.sites;
    const int nf = b.parity == Parity::none ? 1 : 2;
    const int order = b.group_order();

    RowState out;
    out.sites = L;
    out.basis = std::move(basis);
    out.log_norm = state.log_norm;
    out.amplitudes = Vec::Zero(b.dim());
    for (std::size_t i = 0; i < b.dim(); ++i) {
        cplx acc = 0.0;
        for (int f = 0; f < nf; ++f) {
            std::uint32_t y = f ? reflect_bits(b.representatives[i], L) : b.representatives[i];
            for (int r = 0; r < L; ++r) {
                acc += b.character(r, f) * state.amplitudes[y];
                y = translate_bits(y, L);
            }
        }
        out.amplitudes[i] = acc / (double(order) * b.norms[i]);
    }
    return out;
}

// [cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>]^{otimes L}
inline RowState ti_product_state(int L, double theta, double phi) {
    const double a = std::cos(theta / 2.0);
    const cplx b = std::polar(std::sin(theta / 2.0), phi);
    RowState out;
    out.sites = L;
    out.amplitudes = Vec(std::int64_t(1) << L);
    for (std::int64_t n = 0; n < out.amplitudes.size(); ++n) {
        const int ones = __builtin_popcountll(static_cast<unsigned long long>(n));
        out.amplitudes[n] = std::pow(a, L - ones) * std::pow(b, ones);
    }
    return out;
}

// Bloch angles drawn Haar-uniformly: cos(theta) uniform on [-1,1], phi
// uniform on [0, 2 pi). Angles are reported back for output manifests.
inline RowState random_ti_product_state(int L, Rng& rng, double* theta_out = nullptr,
                                        double* phi_out = nullptr) {
    const double theta = std::acos(rng.uniform(-1.0, 1.0));
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    if (theta_out) *theta_out = theta;
    if (phi_out) *phi_out = phi;
    return ti_product_state(L, theta, phi);
}

inline RowState random_sector_state(std::shared_ptr<const SectorBasis> basis, Rng& rng) {
    RowState out;
    out.sites = basis->sites;
    out.amplitudes = Vec(basis->dim());
    out.basis = std::move(basis);
    for (std::int64_t i = 0; i < out.amplitudes.size(); ++i)
        out.amplitudes[i] = rng.normal_complex();
    out.amplitudes.normalize();
    return out;
}

// Two Gaussian draws, Gram-Schmidt orthogonalized: <psi1|psi2> = 0 exactly.
inline std::pair<RowState, RowState> random_orthogonal_pair(
    std::shared_ptr<const SectorBasis> basis, Rng& rng) {
    if (basis->dim() < 2)
        throw std::invalid_argument("random_orthogonal_pair: sector dimension < 2");
    RowState s1 = random_sector_state(basis, rng);
    RowState s2 = random_sector_state(std::move(basis), rng);
    s2.amplitudes -= s1.amplitudes.dot(s2.amplitudes) * s1.amplitudes;
    s2.amplitudes.normalize();
    return {std::move(s1), std::move(s2)};
}

// Reshape a full-space state into a 2^|R| x 2^{L-|R|} matrix whose row index
// enumerates the bits of the given sites. Rows of the result carry the region,
// columns its complement; singular values of this matrix are the Schmidt
// coefficients of the bipartition.
inline Mat region_matrix(const RowState& state, std::span<const int> region_sites) {
    if (state.in_sector()) throw std::invalid_argument("region_matrix: lift the state first");
    const int L = state.sites;
    std::uint32_t region_mask = 0;
    for (int s : region_sites) {
        if (s < 0 || s >= L) throw std::invalid_argument("region_matrix: site out of range");
        if (region_mask & (1u << s)) throw std::invalid_argument("region_matrix: repeated site");
        region_mask |= 1u << s;
    }
    const int nr = static_cast<int>(region_sites.size());
    std::vector<int> rest;
    for (int s = 0; s < L; ++s)
        if (!(region_mask & (1u << s))) rest.push_back(s);

    Mat m(std::int64_t(1) << nr, std::int64_t(1) << (L - nr));
    for (std::int64_t n = 0; n < state.amplitudes.size(); ++n) {
        std::int64_t ir = 0, ic = 0;
        for (int b = 0; b < nr; ++b)
            if (n & (std::int64_t(1) << region_sites[b])) ir |= std::int64_t(1) << b;
        for (std::size_t b = 0; b < rest.size(); ++b)
            if (n & (std::int64_t(1) << rest[b])) ic |= std::int64_t(1) << b;
        m(ir, ic) = state.amplitudes[n];
    }
    return m;
}

inline std::vector<int> contiguous_region(int first, int count, int L) {
    std::vector<int> sites(count);
    for (int i = 0; i < count; ++i) sites[i] = (first + i) % L;
    return sites;
}

}  // namespace tmlab
