#include <catch2/catch.hpp>

#include <cmath>
#include <memory>
#include <numeric>

#include "tmlab/diagnostics.hpp"
#include "test_util.hpp"

using namespace tmlab;
using testutil::Mat;
using testutil::Vec;

namespace {

ModelParams params(int L, double h_R, double h_I) {
    ModelParams p;
    p.sites = L;
    p.h_R = h_R;
    p.h_I = h_I;
    return p;
}

RowState bell_pair_state() {
    // (|00> + |11>)/sqrt(2) on sites {0,1}, |0> elsewhere: entangles any cut
    // separating site 0 from site 1
    Vec amp = Vec::Zero(16);
    amp[0b0000] = 1.0 / std::sqrt(2.0);
    amp[0b0011] = 1.0 / std::sqrt(2.0);
    return full_space_state(4, amp);
}

RowState ghz_state(int L) {
    Vec amp = Vec::Zero(std::int64_t(1) << L);
    amp[0] = 1.0 / std::sqrt(2.0);
    amp[(std::int64_t(1) << L) - 1] = 1.0 / std::sqrt(2.0);
    return full_space_state(L, amp);
}

}  // namespace

TEST_CASE("evolution bookkeeping") {
    SECTION("unitary parameters leave the log norm untouched") {
        ModelParams p = params(8, M_PI / 6.0, 0.0);
        Rng rng(3);
        RowState psi = random_ti_product_state(8, rng);
        const auto traj = evolve(p, psi, 6);
        for (const auto& rec : traj) CHECK(std::abs(rec.log_norm) < 1e-11);
    }
    SECTION("zero steps returns the input unchanged") {
        ModelParams p = params(6, M_PI / 6.0, 0.3);
        Rng rng(4);
        RowState psi = random_ti_product_state(6, rng);
        const auto traj = evolve(p, psi, 0);
        REQUIRE(traj.size() == 1);
        CHECK((traj[0].state.amplitudes - psi.amplitudes).norm() < 1e-14);
    }
    SECTION("five steps match the dense matrix power") {
        ModelParams p = params(8, M_PI / 6.0, 0.25);
        Rng rng(5);
        RowState psi = random_ti_product_state(8, rng);
        const Mat t = build_dense_T(p);
        Vec ref = psi.amplitudes;
        for (int i = 0; i < 5; ++i) ref = t * ref;
        ref.normalize();
        const auto traj = evolve(p, psi, 5, 5);
        const cplx fid = ref.dot(traj.back().state.amplitudes);
        CHECK(std::abs(fid) > 1.0 - 1e-10);
    }
    SECTION("amplitude overflow aborts with the step index") {
        ModelParams p = params(4, 0.0, 500.0);  // exp(500 * 4) overflows a double
        Rng rng(6);
        RowState psi = random_ti_product_state(4, rng);
        CHECK_THROWS_AS(evolve(p, psi, 3), std::runtime_error);
    }
}

TEST_CASE("von Neumann entropy") {
    SECTION("product states carry no entanglement") {
        const RowState psi = ti_product_state(6, 1.1, 0.4);
        const auto region = contiguous_region(0, 3, 6);
        CHECK(entropy_vn(psi, region) < 1e-12);
    }
    SECTION("a Bell pair across the cut gives ln 2") {
        const RowState psi = bell_pair_state();
        const std::vector<int> region = {0};
        CHECK(entropy_vn(psi, region) == Approx(std::log(2.0)).margin(1e-12));
    }
    SECTION("Haar-random states reach the Page value") {
        const int L = 10;
        const double page = [] {
            double s = 0.0;
            for (int k = 33; k <= 1024; ++k) s += 1.0 / k;  // harmonic tail for m = n = 32
            return s - 31.0 / 64.0;
        }();
        Rng rng(7);
        double mean = 0.0;
        const int draws = 100;
        const auto region = contiguous_region(0, 5, L);
        for (int i = 0; i < draws; ++i) {
            RowState psi = full_space_state(L, testutil::random_state(1 << L, rng));
            mean += entropy_vn(psi, region) / draws;
        }
        CHECK(mean == Approx(page).epsilon(0.02));
    }
    SECTION("entropy is symmetric under complementation") {
        Rng rng(8);
        RowState psi = full_space_state(8, testutil::random_state(256, rng));
        const auto a = contiguous_region(1, 3, 8);
        const auto abar = contiguous_region(4, 5, 8);
        CHECK(entropy_vn(psi, a) == Approx(entropy_vn(psi, abar)).margin(1e-10));
    }
    SECTION("unnormalized input is rejected") {
        RowState psi = full_space_state(4, Vec::Constant(16, cplx(0.3, 0.0)));
        const auto region = contiguous_region(0, 2, 4);
        CHECK_THROWS_AS(entropy_vn(psi, region), std::invalid_argument);
    }
}

TEST_CASE("Renyi entropies") {
    const auto region2 = contiguous_region(0, 2, 4);
    SECTION("product state at n = 1/2") {
        const RowState psi = ti_product_state(4, 0.9, 0.2);
        CHECK(std::abs(entropy_renyi(psi, region2, 0.5)) < 1e-12);
    }
    SECTION("flat two-value Schmidt spectrum gives ln 2 for every n") {
        const RowState psi = bell_pair_state();
        const std::vector<int> region = {0};
        for (double n : {0.5, 2.0, 3.0})
            CHECK(entropy_renyi(psi, region, n) == Approx(std::log(2.0)).margin(1e-10));
    }
    SECTION("n -> 1 brackets the von Neumann entropy") {
        Rng rng(9);
        RowState psi = full_space_state(8, testutil::random_state(256, rng));
        const auto region = contiguous_region(0, 4, 8);
        const double s1 = entropy_vn(psi, region);
        const double lo = entropy_renyi(psi, region, 1.0 + 1e-4);
        const double hi = entropy_renyi(psi, region, 1.0 - 1e-4);
        CHECK(lo <= s1 + 1e-3);
        CHECK(hi >= s1 - 1e-3);
        CHECK(std::abs(lo - s1) < 1e-3);
        CHECK(std::abs(hi - s1) < 1e-3);
    }
    SECTION("n = 1 is rejected") {
        const RowState psi = bell_pair_state();
        CHECK_THROWS_AS(entropy_renyi(psi, region2, 1.0), std::invalid_argument);
    }
}

TEST_CASE("mutual information") {
    SECTION("product state") {
        const RowState psi = ti_product_state(12, 0.8, 0.1);
        CHECK(std::abs(antipodal_mutual_information(psi)) < 1e-10);
    }
    SECTION("GHZ state carries ln 2 of classical correlation") {
        const RowState psi = ghz_state(8);
        const std::vector<int> a = {0, 1};
        const std::vector<int> b = {4, 5};
        CHECK(mutual_information(psi, a, b) == Approx(std::log(2.0)).margin(1e-10));
    }
    SECTION("overlapping regions are rejected") {
        const RowState psi = ghz_state(6);
        const std::vector<int> a = {0, 1};
        const std::vector<int> b = {1, 2};
        CHECK_THROWS_AS(mutual_information(psi, a, b), std::invalid_argument);
    }
    SECTION("default geometry requires 6 | L") {
        CHECK_THROWS_AS(antipodal_regions(8), std::invalid_argument);
        const auto r = antipodal_regions(12);
        CHECK(r.a == std::vector<int>{0, 1});
        CHECK(r.b == std::vector<int>{6, 7});
    }
}

TEST_CASE("reference qubit purification") {
    auto basis = std::make_shared<SectorBasis>(build_sector_basis(10, 0, Parity::even));
    Rng rng(11);
    auto [psi1, psi2] = random_orthogonal_pair(basis, rng);

    SECTION("t = 0 is maximally mixed") {
        ModelParams p = params(10, M_PI / 6.0, 0.2);
        const double eps[] = {1e-3};
        const PurificationTrace tr = purify_reference(p, psi1, psi2, 0, eps);
        REQUIRE(tr.s_ref.size() == 1);
        CHECK(tr.s_ref[0] == Approx(std::log(2.0)).margin(1e-12));
        CHECK((tr.rho_ref[0] - 0.5 * Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("entropy stays within [0, ln 2] and crossings interpolate") {
        ModelParams p = params(10, M_PI / 6.0, 0.35);
        const double eps[] = {1e-3, 1e-1};
        const PurificationTrace tr = purify_reference(p, psi1, psi2, 12, eps);
        for (double s : tr.s_ref) {
            CHECK(s >= -1e-12);
            CHECK(s <= std::log(2.0) + 1e-10);
        }
        REQUIRE(tr.t_eps.count(1e-3) == 1);
        REQUIRE(tr.t_eps.count(1e-1) == 1);
        CHECK(tr.t_eps.at(1e-3) <= tr.t_eps.at(1e-1));
    }
    SECTION("non-orthogonal inputs are rejected") {
        ModelParams p = params(10, M_PI / 6.0, 0.2);
        const double eps[] = {1e-3};
        CHECK_THROWS_AS(purify_reference(p, psi1, psi1, 2, eps), std::invalid_argument);
    }
}

TEST_CASE("renormalization gauge invariance") {
    // multiplying T by a scalar must change no entanglement observable
    ModelParams p = params(8, M_PI / 6.0, 0.3);
    Rng rng(13);
    RowState psi = random_ti_product_state(8, rng);
    RowState scaled = psi;

    TransferApplier op(p);
    const auto half = contiguous_region(0, 4, 8);
    const cplx prefactor = std::polar(3.7, 0.9);
    for (int step = 0; step < 4; ++step) {
        op.apply(psi.amplitudes);
        psi.normalize();
        op.apply(scaled.amplitudes);
        scaled.amplitudes *= prefactor;
        scaled.normalize();
    }
    CHECK(entropy_vn(psi, half) == Approx(entropy_vn(scaled, half)).margin(1e-10));
}

TEST_CASE("maximal scrambling at the unitary point") {
    const int L = 12;
    ModelParams p = params(L, M_PI / 6.0, 0.0);
    Rng rng(17);
    double mean = 0.0;
    const int draws = 4;
    for (int i = 0; i < draws; ++i) {
        RowState psi = random_ti_product_state(L, rng);
        const auto traj = evolve(p, psi, 4 * L, 4 * L);
        mean += half_chain_entropy(traj.back().state) / draws;
    }
    CHECK(mean > 0.9 * (L / 2.0 * std::log(2.0) - 0.5));
}

TEST_CASE("leading-state observables") {
    SECTION("J=0 leading eigenstate is a product state") {
        ModelParams p = params(6, 0.4, 0.3);
        p.J = 0.0;
        const SpectrumResult s = spectrum_of(p);
        const auto reports = leading_state_observables(s, nullptr, 6);
        REQUIRE_FALSE(reports.empty());
        CHECK(reports[0].s_half < 1e-8);
    }
    SECTION("strong field leading state is area law") {
        ModelParams p = params(12, M_PI / 6.0, 0.4);
        const SectorBasis basis = build_sector_basis(12, 0, Parity::even);
        auto shared = std::make_shared<SectorBasis>(basis);
        const SpectrumResult s = eig_full(build_dense_T(p, basis));
        const auto reports = leading_state_observables(s, shared, 12);
        REQUIRE_FALSE(reports.empty());
        CHECK(reports[0].s_half < 2.0);
    }
    SECTION("evolved-state I_AB converges to the leading-state value") {
        const int L = 12;
        ModelParams p = params(L, M_PI / 6.0, 0.3);
        const SectorBasis basis = build_sector_basis(L, 0, Parity::even);
        auto shared = std::make_shared<SectorBasis>(basis);
        const SpectrumResult s = eig_full(build_dense_T(p, basis));
        const double i_lead = leading_state_observables(s, shared, L)[0].i_ab;

        TransferApplier op(p);
        Rng rng(23);
        RowState psi = random_ti_product_state(L, rng);
        double i_4l = 0.0, i_8l = 0.0;
        for (int t = 1; t <= 8 * L; ++t) {
            op.apply(psi.amplitudes);
            psi.normalize();
            if (t == 4 * L) i_4l = antipodal_mutual_information(psi);
            if (t == 8 * L) i_8l = antipodal_mutual_information(psi);
        }
        CHECK(std::abs(i_8l - i_lead) <= std::abs(i_4l - i_lead) + 1e-10);
    }
}
