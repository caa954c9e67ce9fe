#pragma once

// Non-unitary row-state evolution and the entanglement / purification
// observables: half-chain von Neumann and Renyi entropies, antipodal mutual
// information, and the reference-qubit purification protocol.
//
// Entropies are in nats. Evolution observables are computed on full-space
// states; sector states are lifted first, because entanglement cuts do not
// respect symmetry sectors.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "tmlab/hilbert.hpp"
#include "tmlab/spectral.hpp"
#include "tmlab/transfer.hpp"

namespace tmlab {

// T^m |psi>, renormalized every step with the log norm accumulated on the
// state. The callback sees the normalized state after each step (and at t=0).
inline void evolve_callback(const TransferApplier& op, RowState& state, int steps,
                            const std::function<void(int, const RowState&)>& cb) {
    if (state.in_sector()) throw std::invalid_argument("evolve: lift the state first");
    if (cb) cb(0, state);
    for (int m = 1; m <= steps; ++m) {
        op.apply(state.amplitudes);
        const double n = state.amplitudes.norm();
        if (!(n > 0.0))
            throw std::runtime_error("evolve: state annihilated at step " + std::to_string(m));
        if (!std::isfinite(n))
            throw std::runtime_error("evolve: amplitude overflow at step " + std::to_string(m));
        state.amplitudes /= n;
        state.log_norm += std::log(n);
        if (cb) cb(m, state);
    }
}

struct EvolveRecord {
    int t = 0;
    double log_norm = 0.0;
    RowState state;
};

inline std::vector<EvolveRecord> evolve(const ModelParams& p, RowState state, int steps,
                                        int record_every = 1) {
    if (steps < 0) throw std::invalid_argument("evolve: steps must be >= 0");
    if (record_every < 1) record_every = 1;
    if (state.in_sector()) state = lift(state);
    TransferApplier op(p);
    std::vector<EvolveRecord> out;
    evolve_callback(op, state, steps, [&](int t, const RowState& s) {
        if (t % record_every == 0 || t == steps)
            out.push_back({t, s.log_norm, s});
    });
    return out;
}

namespace detail {

// Schmidt weights of a bipartition from the eigenvalues of the smaller-side
// Gram matrix. Weights below 1e-14 are dropped (log-of-zero guard well below
// reported precision).
inline std::vector<double> schmidt_weights(const RowState& state, std::span<const int> region) {
    if (std::abs(state.amplitudes.norm() - 1.0) > 1e-8)
        throw std::invalid_argument("entropy: state must be normalized");
    std::vector<int> sites(region.begin(), region.end());
    const int L = state.sites;
    if (static_cast<int>(sites.size()) * 2 > L) {
        // complement is smaller; S_A = S_Abar for pure states
        std::vector<int> comp;
        std::uint32_t mask = 0;
        for (int s : sites) mask |= 1u << s;
        for (int s = 0; s < L; ++s)
            if (!(mask & (1u << s))) comp.push_back(s);
        sites.swap(comp);
    }
    const Mat m = region_matrix(state, sites);
    const Mat gram = m * m.adjoint();
    Eigen::SelfAdjointEigenSolver<Mat> es(gram, Eigen::EigenvaluesOnly);
    std::vector<double> weights;
    for (std::int64_t i = 0; i < es.eigenvalues().size(); ++i) {
        const double p = es.eigenvalues()[i];
        if (p > 1e-14) weights.push_back(p);
    }
    return weights;
}

}  // namespace detail

inline double entropy_vn(const RowState& state, std::span<const int> region) {
    double s = 0.0;
    for (double p : detail::schmidt_weights(state, region)) s -= p * std::log(p);
    return s;
}

inline double entropy_renyi(const RowState& state, std::span<const int> region, double n) {
    if (!(n > 0.0)) throw std::invalid_argument("entropy_renyi: index must be positive");
    if (n == 1.0) throw std::invalid_argument("entropy_renyi: use entropy_vn for n = 1");
    double acc = 0.0;
    for (double p : detail::schmidt_weights(state, region)) acc += std::pow(p, n);
    return std::log(acc) / (1.0 - n);
}

inline double half_chain_entropy(const RowState& state) {
    auto region = contiguous_region(0, state.sites / 2, state.sites);
    return entropy_vn(state, region);
}

// I_AB = S_A + S_B - S_{A u B} for disjoint regions.
inline double mutual_information(const RowState& state, std::span<const int> a,
                                 std::span<const int> b) {
    std::uint32_t mask = 0;
    for (int s : a) mask |= 1u << s;
    for (int s : b) {
        if (mask & (1u << s)) throw std::invalid_argument("mutual_information: regions overlap");
        mask |= 1u << s;
    }
    std::vector<int> joint(a.begin(), a.end());
    joint.insert(joint.end(), b.begin(), b.end());
    return entropy_vn(state, a) + entropy_vn(state, b) - entropy_vn(state, joint);
}

// Default antipodal geometry: |A| = |B| = L/6, separation L/2 (requires 6|L).
struct AntipodalRegions {
    std::vector<int> a, b;
};

inline AntipodalRegions antipodal_regions(int L) {
    if (L % 6 != 0)
        throw std::invalid_argument("antipodal_regions: default geometry requires 6 | L");
    AntipodalRegions r;
    r.a = contiguous_region(0, L / 6, L);
    r.b = contiguous_region(L / 2, L / 6, L);
    return r;
}

inline double antipodal_mutual_information(const RowState& state) {
    const auto r = antipodal_regions(state.sites);
    return mutual_information(state, r.a, r.b);
}

// ---------------------------------------------------------------------------
// Reference-qubit purification.

struct PurificationTrace {
    std::vector<int> times;
    std::vector<Eigen::Matrix2cd> rho_ref;
    std::vector<double> s_ref;
    std::map<double, double> t_eps;  // first crossings of 1 - S/ln2 = eps
    bool annihilated = false;
};

namespace detail {

inline double entropy_2x2(const Eigen::Matrix2cd& rho) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(rho, Eigen::EigenvaluesOnly);
    double s = 0.0;
    for (int i = 0; i < 2; ++i) {
        const double p = es.eigenvalues()[i];
        if (p > 1e-14) s -= p * std::log(p);
    }
    return s;
}

}  // namespace detail

// Evolve the orthonormal pair jointly; the reference-qubit density matrix is
// the trace-normalized Gram matrix of (T^t psi_1, T^t psi_2). Relative decay
// between the branches is tracked through the per-state log norms, so the
// Gram matrix stays representable at any t.
inline PurificationTrace purify_reference(const ModelParams& p, const RowState& psi1_in,
                                          const RowState& psi2_in, int t_max,
                                          std::span<const double> eps_list,
                                          bool stop_after_all_eps = false) {
    RowState psi1 = psi1_in.in_sector() ? lift(psi1_in) : psi1_in;
    RowState psi2 = psi2_in.in_sector() ? lift(psi2_in) : psi2_in;
    if (std::abs(psi1.amplitudes.dot(psi2.amplitudes)) > 1e-10)
        throw std::invalid_argument("purify_reference: input states must be orthogonal");
    psi1.log_norm = 0.0;
    psi2.log_norm = 0.0;

    TransferApplier op(p);
    PurificationTrace out;
    std::vector<double> pending(eps_list.begin(), eps_list.end());
    std::sort(pending.begin(), pending.end());

    double prev_deficit = 0.0;
    for (int t = 0; t <= t_max; ++t) {
        if (t > 0) {
            op.apply(psi1.amplitudes);
            op.apply(psi2.amplitudes);
            const double n1 = psi1.amplitudes.norm();
            const double n2 = psi2.amplitudes.norm();
            if (!(n1 > 0.0) && !(n2 > 0.0)) {
                out.annihilated = true;
                break;
            }
            if (n1 > 0.0) {
                psi1.amplitudes /= n1;
                psi1.log_norm += std::log(n1);
            }
            if (n2 > 0.0) {
                psi2.amplitudes /= n2;
                psi2.log_norm += std::log(n2);
            }
        }
        // weights relative to the dominant branch keep everything finite
        const double lmax = std::max(psi1.log_norm, psi2.log_norm);
        const double w1 = std::exp(psi1.log_norm - lmax);
        const double w2 = std::exp(psi2.log_norm - lmax);
        Eigen::Matrix2cd gram;
        gram(0, 0) = w1 * w1;
        gram(1, 1) = w2 * w2;
        gram(0, 1) = w1 * w2 * psi1.amplitudes.dot(psi2.amplitudes);
        gram(1, 0) = std::conj(gram(0, 1));
        gram /= gram.trace();

        const double s = detail::entropy_2x2(gram);
        out.times.push_back(t);
        out.rho_ref.push_back(gram);
        out.s_ref.push_back(s);

        const double deficit = 1.0 - s / std::log(2.0);
        while (!pending.empty() && deficit >= pending.front()) {
            const double eps = pending.front();
            pending.erase(pending.begin());
            double t_cross = double(t);
            if (t > 0 && deficit > prev_deficit)  // linear interpolation between steps
                t_cross = double(t - 1) + (eps - prev_deficit) / (deficit - prev_deficit);
            out.t_eps[eps] = std::max(0.0, t_cross);
        }
        prev_deficit = deficit;
        if (stop_after_all_eps && pending.empty()) break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Observables of the leading eigenstates.

struct EntanglementReport {
    int multiplet_index = 0;
    bool degenerate = false;
    double s_half = 0.0;
    double i_ab = 0.0;  // NaN when the geometry does not apply
};

// Entanglement of the leading right eigenvector(s). For a degenerate leading
// multiplet a report is produced for every member, flagged as such.
inline std::vector<EntanglementReport> leading_state_observables(
    const SpectrumResult& spec, std::shared_ptr<const SectorBasis> basis, int L,
    double deg_tol = 1e-9) {
    if (spec.right.size() == 0)
        throw std::invalid_argument("leading_state_observables: right eigenvectors required");
    std::size_t multiplet = 1;
    while (multiplet < spec.size() &&
           std::exp(spec.rho[0]) - std::exp(spec.rho[multiplet]) < deg_tol)
        ++multiplet;

    std::vector<EntanglementReport> out;
    for (std::size_t i = 0; i < multiplet; ++i) {
        RowState r;
        r.sites = L;
        if (basis) {
            r.basis = basis;
            r.amplitudes = spec.right.col(i);
            r = lift(r);
        } else {
            r.amplitudes = spec.right.col(i);
        }
        r.amplitudes.normalize();
        EntanglementReport rep;
        rep.multiplet_index = static_cast<int>(i);
        rep.degenerate = multiplet > 1;
        rep.s_half = half_chain_entropy(r);
        rep.i_ab = (L % 6 == 0) ? antipodal_mutual_information(r)
                                : std::numeric_limits<double>::quiet_NaN();
        out.push_back(rep);
    }
    return out;
}

}  // namespace tmlab
