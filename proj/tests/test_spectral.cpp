#include <catch2/catch.hpp>

#include <algorithm>
#include <complex>
#include <memory>
#include <numeric>

#include "tmlab/edge.hpp"
#include "tmlab/spectral.hpp"
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

std::pair<cplx, cplx> u0_eigs(const ModelParams& p) {
    const Eigen::Matrix2cd u0 = u0_matrix(p.g, p.h());
    Eigen::ComplexEigenSolver<Eigen::Matrix2cd> es(u0);
    cplx a = es.eigenvalues()[0], b = es.eigenvalues()[1];
    if (std::abs(a) < std::abs(b)) std::swap(a, b);
    return {a, b};
}

}  // namespace

TEST_CASE("unitary limit puts every eigenvalue on the unit circle") {
    ModelParams p = params(6, M_PI / 6.0, 0.0);
    const SpectrumResult s = spectrum_of(p, EigOptions{.vectors = false});
    for (double r : s.rho) CHECK(std::abs(r) < 1e-10);
    CHECK(spectral_gap(s) < 1e-10);
}

TEST_CASE("J=0 spectrum is the combinatorial product of single-site eigenvalues") {
    ModelParams p = params(4, 0.4, 0.3);
    p.J = 0.0;
    auto [a, b] = u0_eigs(p);

    std::vector<double> expected;
    for (int n = 0; n < 16; ++n) {
        const int ones = __builtin_popcount(unsigned(n));
        expected.push_back((4 - ones) * std::log(std::abs(a)) + ones * std::log(std::abs(b)));
    }
    std::sort(expected.rbegin(), expected.rend());

    const SpectrumResult s = spectrum_of(p, EigOptions{.vectors = false});
    REQUIRE(s.size() == 16);
    for (int i = 0; i < 16; ++i) CHECK(s.rho[i] == Approx(expected[i]).margin(1e-10));
}

TEST_CASE("biorthogonality and reconstruction in the 0+ sector") {
    ModelParams p = params(10, M_PI / 6.0, 0.3);
    const SectorBasis basis = build_sector_basis(10, 0, Parity::even);
    const Mat t = build_dense_T(p, basis);
    const SpectrumResult s = eig_full(t);
    const std::int64_t n = t.rows();

    SECTION("right vectors are unit normalized") {
        for (std::int64_t i = 0; i < n; ++i)
            CHECK(std::abs(s.right.col(i).norm() - 1.0) < 1e-10);
    }
    SECTION("left-right overlaps form the identity") {
        const Mat overlap = s.left * s.right;
        double off = 0.0;
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < n; ++j) {
                if (s.degenerate[i] || s.degenerate[j]) continue;
                off = std::max(off, std::abs(overlap(i, j) - (i == j ? 1.0 : 0.0)));
            }
        CHECK(off < 1e-8);
    }
    SECTION("sum of lambda |r><l| reconstructs T") {
        Mat rebuilt = Mat::Zero(n, n);
        for (std::int64_t i = 0; i < n; ++i)
            rebuilt += s.eigenvalue(i) * s.right.col(i) * s.left.row(i);
        CHECK((rebuilt - t).norm() / t.norm() < 1e-7);
    }
    SECTION("adjoint-route left vectors satisfy the same contracts") {
        const SpectrumResult s2 = eig_full(t, EigOptions{.cond_limit = 0.0});
        REQUIRE(s2.left_from_adjoint);
        const Mat overlap = s2.left * s2.right;
        double off = 0.0;
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < n; ++j) {
                if (s2.degenerate[i] || s2.degenerate[j]) continue;
                off = std::max(off, std::abs(overlap(i, j) - (i == j ? 1.0 : 0.0)));
            }
        CHECK(off < 1e-8);
    }
}

TEST_CASE("biorthogonality survives randomized parameter smoke tests") {
    Rng rng(77);
    for (int draw = 0; draw < 20; ++draw) {
        ModelParams p = params(6, rng.uniform(0.05, 1.2), rng.uniform(0.02, 0.6));
        p.J = rng.uniform(0.2, 1.2);
        p.g = -rng.uniform(0.2, 1.2);
        const Mat t = build_dense_T(p);
        const SpectrumResult s = eig_full(t);
        const std::int64_t n = t.rows();
        const Mat overlap = s.left * s.right;
        double off = 0.0;
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < n; ++j) {
                if (s.degenerate[i] || s.degenerate[j]) continue;
                off = std::max(off, std::abs(overlap(i, j) - (i == j ? 1.0 : 0.0)));
            }
        Mat rebuilt = Mat::Zero(n, n);
        for (std::int64_t i = 0; i < n; ++i)
            rebuilt += s.eigenvalue(i) * s.right.col(i) * s.left.row(i);
        INFO("draw " << draw << " J=" << p.J << " h=(" << p.h_R << "," << p.h_I << ")");
        CHECK(off < 1e-8);
        CHECK((rebuilt - t).norm() / t.norm() < 1e-7);
    }
}

TEST_CASE("determinant equals the exponentiated trace of rho") {
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        ModelParams p = params(6, rng.uniform(0.1, 1.0), rng.uniform(0.05, 0.5));
        const Mat t = build_dense_T(p);
        const SpectrumResult s = eig_full(t, EigOptions{.vectors = false});
        const double log_det =
            Eigen::PartialPivLU<Mat>(t).matrixLU().diagonal().array().abs().log().sum();
        const double rho_sum = std::accumulate(s.rho.begin(), s.rho.end(), 0.0);
        CHECK(std::abs(log_det - rho_sum) < 1e-6 * std::max(1.0, std::abs(log_det)));
    }
}

TEST_CASE("iterative leading eigenvalues") {
    SECTION("agrees with the dense solver in the gapped regime") {
        ModelParams p = params(12, M_PI / 6.0, 0.4);
        auto basis = std::make_shared<SectorBasis>(build_sector_basis(12, 0, Parity::even));
        const SpectrumResult dense =
            eig_full(build_dense_T(p, *basis), EigOptions{.vectors = false});
        const LeadingEigsResult it = leading_eigs(make_transfer_op(p, basis), basis->dim(), 2);
        REQUIRE(it.converged);
        for (int i = 0; i < 2; ++i) {
            CHECK(std::abs(std::log(std::abs(it.values[i])) - dense.rho[i]) < 1e-6);
            CHECK(it.residuals[i] < 1e-8);
        }
    }
    SECTION("flat unitary spectrum is residual-flagged") {
        ModelParams p = params(8, M_PI / 6.0, 0.0);
        LeadingEigsOptions opt;
        opt.max_iter = 8;
        const LeadingEigsResult it = leading_eigs(make_transfer_op(p), 256, 2, opt);
        CHECK_FALSE(it.converged);
        CHECK(it.residuals[0] > 1e-8);
    }
    SECTION("power mode at J=0 finds rho_0 = L ln max|eig(U_0)|") {
        ModelParams p = params(10, 0.35, 0.3);
        p.J = 0.0;
        auto [a, b] = u0_eigs(p);
        LeadingEigsOptions opt;
        opt.mode = IterMode::power;
        opt.max_iter = 600;
        const LeadingEigsResult it = leading_eigs(make_transfer_op(p), 1 << 10, 1, opt);
        REQUIRE(it.converged);
        CHECK(std::log(std::abs(it.values[0])) ==
              Approx(10.0 * std::log(std::abs(a))).margin(1e-7));
    }
}

TEST_CASE("spectral gaps") {
    SECTION("J=0 gap is the single-site splitting") {
        ModelParams p = params(5, 0.45, 0.2);
        p.J = 0.0;
        auto [a, b] = u0_eigs(p);
        const SpectrumResult s = spectrum_of(p, EigOptions{.vectors = false});
        CHECK(spectral_gap(s) ==
              Approx(std::log(std::abs(a)) - std::log(std::abs(b))).margin(1e-10));
    }
    SECTION("multiplet grouping skips exact degeneracies") {
        SpectrumResult s;
        s.rho = {0.5, 0.5, 0.1};
        s.phi = {0.0, 1.0, 2.0};
        CHECK(spectral_gap(s) == Approx(0.0).margin(1e-12));
        CHECK(spectral_gap_below_multiplet(s) == Approx(0.4));
    }
}

TEST_CASE("pairing symmetry at J = n pi/4") {
    SECTION("kicked Ising at J=pi/4 has an inversion-symmetric spectrum") {
        ModelParams p = params(6, M_PI / 6.0, 0.1);
        const SpectrumResult s = spectrum_of(p, EigOptions{.vectors = false});
        const PairingCheck c = pairing_check(s, p.J, 6);
        REQUIRE(c.applicable);
        CHECK(c.rho_deviation < 1e-8);
        CHECK(c.phase_deviation < 1e-6);
    }
    SECTION("unitary point satisfies the check trivially") {
        ModelParams p = params(4, M_PI / 6.0, 0.0);
        const SpectrumResult s = spectrum_of(p, EigOptions{.vectors = false});
        const PairingCheck c = pairing_check(s, p.J, 4);
        REQUIRE(c.applicable);
        CHECK(c.rho_deviation < 1e-10);
    }
    SECTION("generic J is reported as not applicable") {
        ModelParams p = params(4, M_PI / 6.0, 0.1);
        p.J = 0.3;
        const SpectrumResult s = spectrum_of(p, EigOptions{.vectors = false});
        const PairingCheck c = pairing_check(s, p.J, 4);
        CHECK_FALSE(c.applicable);
    }
}

TEST_CASE("radial density histograms") {
    SECTION("a unitary spectrum collapses into one delta-like bin") {
        ModelParams p = params(4, M_PI / 6.0, 0.0);
        const SpectrumResult s = spectrum_of(p, EigOptions{.vectors = false});
        const EdgeProfile prof = radial_density({s});
        double integral = 0.0, at_zero = 0.0;
        for (std::size_t i = 0; i < prof.density.size(); ++i) {
            integral += prof.density[i] * prof.bin_width;
            if (std::abs(prof.bin_centers[i]) <= prof.bin_width)
                at_zero += prof.density[i] * prof.bin_width;
        }
        CHECK(integral == Approx(16.0).epsilon(0.005));
        CHECK(at_zero == Approx(16.0).epsilon(0.005));
    }
    SECTION("ensemble averaging is idempotent on identical spectra") {
        ModelParams p = params(6, M_PI / 6.0, 0.2);
        const SpectrumResult s = spectrum_of(p, EigOptions{.vectors = false});
        const EdgeProfile one = radial_density({s}, 32);
        const EdgeProfile two = radial_density({s, s}, 32);
        REQUIRE(one.density.size() == two.density.size());
        for (std::size_t i = 0; i < one.density.size(); ++i)
            CHECK(one.density[i] == Approx(two.density[i]).margin(1e-12));
    }
    SECTION("deformed-Haar ensemble produces a finite-width ring") {
        const int L = 8, dim = 1 << L;
        const double h_I = 0.05;
        Rng rng(53);
        Vec zeta(dim);
        for (int n = 0; n < dim; ++n)
            zeta[n] = std::exp(h_I * double(L - 2 * __builtin_popcount(unsigned(n))));
        std::vector<SpectrumResult> ens;
        for (int k = 0; k < 8; ++k) {
            const Mat m = zeta.asDiagonal().toDenseMatrix() * testutil::haar_unitary(dim, rng);
            ens.push_back(eig_full(m, EigOptions{.vectors = false}));
        }
        EdgeProfile prof = radial_density(ens);
        fit_edge(prof);
        REQUIRE(prof.fit_ok);
        CHECK(prof.w > 0.0);
        CHECK(prof.rho_e > prof.bin_centers.front());
        CHECK(prof.rho_e < prof.bin_centers.back());
    }
}

TEST_CASE("erfc edge fitting") {
    auto synthetic = [](double rho_e, double w, double c, double x0, double x1, int bins) {
        EdgeProfile p;
        p.bin_width = (x1 - x0) / bins;
        p.normalization = 0.0;
        p.n_spectra = 1;
        for (int i = 0; i < bins; ++i) {
            const double x = x0 + (i + 0.5) * p.bin_width;
            p.bin_centers.push_back(x);
            p.density.push_back(c * std::erfc((x - rho_e) / w));
        }
        return p;
    };

    SECTION("recovers its own model within 1%") {
        EdgeProfile p = synthetic(0.10, 0.02, 50.0, 0.0, 0.2, 100);
        fit_edge(p);
        REQUIRE(p.fit_ok);
        CHECK(std::abs(p.rho_e - 0.10) < 0.001);
        CHECK(std::abs(p.w - 0.02) < 0.0002);
        CHECK(p.fit_residual < 0.01);
    }
    SECTION("shift equivariance") {
        EdgeProfile a = synthetic(0.10, 0.02, 50.0, 0.0, 0.2, 100);
        EdgeProfile b = synthetic(0.80, 0.02, 50.0, 0.7, 0.9, 100);
        fit_edge(a);
        fit_edge(b);
        REQUIRE(a.fit_ok);
        REQUIRE(b.fit_ok);
        CHECK(b.rho_e - a.rho_e == Approx(0.7).margin(1e-6));
        CHECK(b.w == Approx(a.w).margin(1e-9));
    }
    SECTION("structured failure without an inflection") {
        EdgeProfile p;
        p.bin_width = 0.01;
        p.n_spectra = 1;
        for (int i = 0; i < 40; ++i) {
            p.bin_centers.push_back(i * 0.01);
            p.density.push_back(1.0);  // flat box profile
        }
        fit_edge(p);
        CHECK_FALSE(p.fit_ok);
        CHECK_FALSE(p.fail_reason.empty());
        CHECK_THROWS_AS(edge_metrics(p, {}), std::runtime_error);
    }
    SECTION("integrated edge weight matches the closed form") {
        EdgeProfile p = synthetic(0.10, 0.02, 50.0, 0.0, 0.2, 100);
        fit_edge(p);
        REQUIRE(p.fit_ok);
        SpectrumResult fake;
        fake.rho = {0.16};
        fake.phi = {0.0};
        edge_metrics(p, {fake});
        const double analytic = p.fit_amplitude * p.w / std::sqrt(M_PI);
        CHECK(p.n_beyond == Approx(analytic).epsilon(0.02));
        CHECK(p.rho0_minus_rho_e == Approx(0.16 - p.rho_e).margin(1e-9));
    }
}
