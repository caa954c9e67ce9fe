#include <catch2/catch.hpp>

#include <cmath>
#include <complex>

#include "tmlab/boundary_mps.hpp"
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

Eigen::Matrix2cd pauli_z() {
    Eigen::Matrix2cd z = Eigen::Matrix2cd::Zero();
    z(0, 0) = 1.0;
    z(1, 1) = -1.0;
    return z;
}

}  // namespace

TEST_CASE("bond entropy basics") {
    SECTION("chi = 1 carries no entanglement") {
        const UniformMps m = product_mps(0.7, 0.2);
        CHECK(entropy_of_bond(m) == Approx(0.0).margin(1e-14));
    }
    SECTION("a flat Schmidt spectrum gives ln d") {
        UniformMps m = product_mps(0.7, 0.2);
        m.schmidt = Eigen::VectorXd::Constant(4, 0.5);
        CHECK(entropy_of_bond(m) == Approx(std::log(4.0)).margin(1e-12));
    }
    SECTION("non-canonical input is rejected") {
        UniformMps m = product_mps(0.7, 0.2);
        m.canonical = false;
        CHECK_THROWS_AS(entropy_of_bond(m), std::invalid_argument);
    }
}

TEST_CASE("J=0 MPO application keeps a product MPS at chi = 1") {
    ModelParams p = params(0, 0.4, 0.3);
    p.J = 0.0;
    const MpoTensor mpo = build_mpo_tensor(p);
    const double theta = 0.9, phi = 0.3;
    UniformMps m = product_mps(theta, phi);
    const StepInfo info = apply_mpo_step(m, mpo, 8);
    REQUIRE(info.ok);
    CHECK(m.chi() == 1);
    CHECK(info.truncation_error < 1e-20);

    // the surviving tensor is U_0 applied to the physical leg, up to phase
    const Eigen::Matrix2cd u0 = u0_matrix(p.g, p.h());
    Eigen::Vector2cd before(std::cos(theta / 2.0), std::polar(std::sin(theta / 2.0), phi));
    Eigen::Vector2cd expected = (u0 * before).normalized();
    Eigen::Vector2cd got(m.site[0](0, 0), m.site[1](0, 0));
    got.normalize();
    CHECK(std::abs(std::abs(expected.dot(got)) - 1.0) < 1e-12);
}

TEST_CASE("canonical form is restored after every step") {
    ModelParams p = params(0, M_PI / 6.0, 0.3);
    const MpoTensor mpo = build_mpo_tensor(p);
    UniformMps m = product_mps(1.1, 0.5);
    for (int t = 0; t < 6; ++t) {
        const StepInfo info = apply_mpo_step(m, mpo, 16);
        REQUIRE(info.ok);
        CHECK(info.canonical_defect < 1e-8);
        CHECK(std::abs(m.schmidt.squaredNorm() - 1.0) < 1e-10);
        // descending order
        for (int i = 1; i < m.schmidt.size(); ++i) CHECK(m.schmidt[i] <= m.schmidt[i - 1] + 1e-14);
    }
}

TEST_CASE("truncation error shrinks with bond dimension") {
    ModelParams p = params(0, M_PI / 6.0, 0.2);
    const MpoTensor mpo = build_mpo_tensor(p);
    UniformMps a = product_mps(1.1, 0.5);
    UniformMps b = product_mps(1.1, 0.5);
    double worst32 = 0.0, worst64 = 0.0;
    for (int t = 0; t < 8; ++t) {
        const StepInfo ia = apply_mpo_step(a, mpo, 32);
        const StepInfo ib = apply_mpo_step(b, mpo, 64);
        REQUIRE(ia.ok);
        REQUIRE(ib.ok);
        worst32 = std::max(worst32, ia.truncation_error);
        worst64 = std::max(worst64, ib.truncation_error);
    }
    CHECK(worst64 <= worst32 + 1e-15);
}

TEST_CASE("local expectations are gauge invariant") {
    ModelParams p = params(0, M_PI / 6.0, 0.25);
    const MpoTensor mpo = build_mpo_tensor(p);
    UniformMps m = product_mps(0.8, 0.4);
    for (int t = 0; t < 4; ++t) REQUIRE(apply_mpo_step(m, mpo, 8).ok);
    const cplx z_ref = local_expectation(m, pauli_z());

    Rng rng(3);
    Mat g(m.chi(), m.chi());
    for (int j = 0; j < m.chi(); ++j)
        for (int i = 0; i < m.chi(); ++i) g(i, j) = rng.normal_complex();
    g += 3.0 * Mat::Identity(m.chi(), m.chi());  // keep it comfortably invertible
    apply_gauge(m, g);
    const StepInfo info = canonicalize(m, m.chi());
    REQUIRE(info.ok);
    CHECK(std::abs(local_expectation(m, pauli_z()) - z_ref) < 1e-10);
}

TEST_CASE("iMPS local observables match exact finite-size evolution") {
    // Periodic ring evolved exactly, against the infinite chain at chi=64.
    // The ring must be large enough that the residual finite-size effect of
    // the global norm sits below the tolerance; L=14 leaves ~8e-4 at t=5.
    const int L = 14, steps = 5;
    ModelParams p = params(L, M_PI / 6.0, 0.3);
    const double theta = 1.0, phi = 0.7;

    RowState psi = ti_product_state(L, theta, phi);
    TransferApplier op(p);
    for (int t = 0; t < steps; ++t) {
        op.apply(psi.amplitudes);
        psi.normalize();
    }
    // <Z_0> of the exact state
    cplx z_exact = 0.0;
    for (std::int64_t n = 0; n < psi.amplitudes.size(); ++n)
        z_exact += ((n & 1) ? -1.0 : 1.0) * std::norm(psi.amplitudes[n]);

    const MpoTensor mpo = build_mpo_tensor(p);
    UniformMps m32 = product_mps(theta, phi);
    UniformMps m = product_mps(theta, phi);
    for (int t = 0; t < steps; ++t) {
        REQUIRE(apply_mpo_step(m32, mpo, 32).ok);
        REQUIRE(apply_mpo_step(m, mpo, 64).ok);
    }
    const cplx z_imps = local_expectation(m, pauli_z());

    CHECK(std::abs(z_imps - z_exact) < 1e-3);
    // at t=5 the state fits in chi=32 exactly, so chi must not matter
    CHECK(std::abs(local_expectation(m32, pauli_z()) - z_imps) < 1e-10);
}

TEST_CASE("area-law regime is chi-convergent over long evolutions") {
    ModelParams p = params(0, M_PI / 6.0, 0.3);
    const MpoTensor mpo = build_mpo_tensor(p);
    UniformMps m = product_mps(1.0, 0.7);
    double trunc_last = 0.0;
    for (int t = 0; t < 100; ++t) {
        const StepInfo info = apply_mpo_step(m, mpo, 64);
        REQUIRE(info.ok);
        trunc_last = info.truncation_error;
    }
    CHECK(trunc_last < 1e-8);  // Schmidt spectrum already fits well inside chi=64
    CHECK(entropy_of_bond(m) < 2.0);
}

TEST_CASE("sweep driver records one audit row per step") {
    ModelParams p = params(0, M_PI / 6.0, 0.0);
    const double his[] = {0.3};
    const int chis[] = {8};
    const auto rows = run_imps_sweep(p, his, chis, 4, 1.0, 0.7);
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) {
        CHECK(r.ok);
        CHECK(r.h_I == 0.3);
        CHECK(r.chi == 8);
    }
    CHECK(rows.front().t == 1);
    CHECK(rows.back().t == 4);
    // t = 0 from a product start means S = 0 before any step is taken
    UniformMps m = product_mps(1.0, 0.7);
    CHECK(entropy_of_bond(m) == Approx(0.0).margin(1e-14));
}
