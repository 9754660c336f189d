#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "geoloop/kle.hpp"

#include "test_util.hpp"

using namespace geoloop;

namespace {

GridSpec small_grid(int n, double d = 20.0) {
    GridSpec g;
    g.nx = n;
    g.ny = n;
    g.dx = d;
    g.dy = d;
    g.thickness = 30.0;
    return g;
}

// independent covariance assembly; the oracle for everything spectral
Eigen::MatrixXd dense_covariance(const GridSpec& g, double sigma, double ex, double ey) {
    const int n = g.n_cells();
    Eigen::MatrixXd c(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            const double dx = std::abs(g.cell_center_x(a % g.nx) - g.cell_center_x(b % g.nx));
            const double dy = std::abs(g.cell_center_y(a / g.nx) - g.cell_center_y(b / g.nx));
            c(a, b) = sigma * sigma * std::exp(-dx / ex - dy / ey);
        }
    return c;
}

} // namespace

TEST_CASE("basis carries the requested statistics and ordered spectrum") {
    const auto basis = build_kle_basis(small_grid(16), 3.6, 1.0, 305.0, 305.0, 0.95);
    CHECK(basis.mean_lnk == 3.6);
    CHECK(basis.sigma_lnk == 1.0);
    CHECK(basis.n_modes > 0);
    for (int m = 0; m + 1 < basis.n_modes; ++m) CHECK(basis.eigvals(m) >= basis.eigvals(m + 1));
    CHECK(basis.eigvals.minCoeff() >= 0.0);

    // orthonormal columns
    const Eigen::MatrixXd gram = basis.eigvecs.transpose() * basis.eigvecs;
    const double err = (gram - Eigen::MatrixXd::Identity(basis.n_modes, basis.n_modes))
                           .cwiseAbs()
                           .maxCoeff();
    CHECK(err < 1e-8);
}

TEST_CASE("sigma zero collapses to the constant mean field") {
    const auto basis = build_kle_basis(small_grid(8), 3.6, 0.0, 305.0, 305.0, 0.95);
    CHECK(basis.n_modes == 0);
    const PermField f = sample_field(basis, KleCoeffs{Eigen::VectorXd(0)});
    for (double v : f.lnk) CHECK(v == 3.6);
}

TEST_CASE("golden mode count matches the dense eigendecomposition oracle") {
    // 16x16 grid, 20 m cells, correlation length 160 m, 95% energy
    const GridSpec g = small_grid(16);
    const auto basis = build_kle_basis(g, 3.6, 1.0, 160.0, 160.0, 0.95);

    const Eigen::MatrixXd cov = dense_covariance(g, 1.0, 160.0, 160.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const Eigen::VectorXd vals = es.eigenvalues().reverse();
    const double target = 0.95 * cov.trace();
    double cum = 0.0;
    int oracle_modes = 0;
    while (oracle_modes < vals.size() && cum < target) cum += vals(oracle_modes++);

    CHECK(basis.n_modes == oracle_modes);
    CHECK(basis.n_modes == 50); // frozen from the oracle
    CHECK(basis.energy_fraction >= 0.95);
}

TEST_CASE("spectral reconstruction error is bounded by the discarded energy") {
    const GridSpec g = small_grid(12);
    const auto basis = build_kle_basis(g, 3.6, 1.0, 160.0, 160.0, 0.9);
    const Eigen::MatrixXd cov = dense_covariance(g, 1.0, 160.0, 160.0);
    const Eigen::MatrixXd recon =
        basis.eigvecs * basis.eigvals.asDiagonal() * basis.eigvecs.transpose();
    const double rel = (cov - recon).norm() / cov.norm();
    CHECK(rel <= 1.0 - 0.9 + 1e-6);
}

TEST_CASE("sampling identities") {
    const auto basis = build_kle_basis(small_grid(8), 3.6, 1.0, 160.0, 160.0, 0.95);

    SUBCASE("zero coefficients give the mean") {
        KleCoeffs xi{Eigen::VectorXd::Zero(basis.n_modes)};
        const PermField f = sample_field(basis, xi);
        for (double v : f.lnk) CHECK(v == doctest::Approx(3.6).epsilon(1e-14));
    }
    SUBCASE("first unit vector reproduces the leading mode") {
        KleCoeffs xi{Eigen::VectorXd::Zero(basis.n_modes)};
        xi.xi(0) = 1.0;
        const PermField f = sample_field(basis, xi);
        const double s = std::sqrt(basis.eigvals(0));
        for (int c = 0; c < basis.grid.n_cells(); ++c)
            CHECK(f.lnk[static_cast<std::size_t>(c)] - 3.6 ==
                  doctest::Approx(s * basis.eigvecs(c, 0)).epsilon(1e-12));
    }
    SUBCASE("length mismatch is refused") {
        KleCoeffs xi{Eigen::VectorXd::Zero(basis.n_modes + 1)};
        CHECK_THROWS_AS(sample_field(basis, xi), ContractError);
    }
    SUBCASE("determinism, bit identical") {
        Rng rng(7);
        const KleCoeffs xi = draw_coeffs(basis, rng);
        const PermField a = sample_field(basis, xi);
        const PermField b = sample_field(basis, xi);
        CHECK(a.lnk == b.lnk);
    }
}

TEST_CASE("Monte Carlo statistics match the truncated covariance") {
    const auto basis = build_kle_basis(small_grid(8), 3.6, 1.0, 160.0, 160.0, 0.95);
    const int n_cells = basis.grid.n_cells();
    const int n_samples = 10000;
    Rng rng(split_seed(42, "kle_mc"));

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n_cells);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(n_cells);
    for (int s = 0; s < n_samples; ++s) {
        const PermField f = sample_field(basis, draw_coeffs(basis, rng));
        const Eigen::Map<const Eigen::VectorXd> lnk(f.lnk.data(), n_cells);
        mean += lnk;
        sq += lnk.cwiseAbs2();
    }
    mean /= n_samples;
    const Eigen::VectorXd var = sq / n_samples - mean.cwiseAbs2();
    const Eigen::VectorXd truncated = basis.truncated_variance();

    CHECK((mean.array() - 3.6).abs().maxCoeff() < 0.05);
    for (int c = 0; c < n_cells; ++c)
        CHECK(std::abs(var(c) - truncated(c)) < 0.10 * truncated(c));
}

TEST_CASE("projection round trips and residuals match the dense oracle") {
    const auto basis = build_kle_basis(small_grid(8), 3.6, 1.0, 160.0, 160.0, 0.95);
    Rng rng(11);

    SUBCASE("in-span round trip") {
        const KleCoeffs xi = draw_coeffs(basis, rng);
        const KleCoeffs back = coeffs_from_field(basis, sample_field(basis, xi));
        CHECK((back.xi - xi.xi).cwiseAbs().maxCoeff() < 1e-8);
    }
    SUBCASE("constant mean field projects to zero") {
        PermField f;
        f.grid = basis.grid;
        f.lnk.assign(static_cast<std::size_t>(basis.grid.n_cells()), 3.6);
        const KleCoeffs xi = coeffs_from_field(basis, f);
        CHECK(xi.xi.cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("out-of-span residual equals the dense least-squares oracle") {
        PermField f;
        f.grid = basis.grid;
        f.lnk.resize(static_cast<std::size_t>(basis.grid.n_cells()));
        for (auto& v : f.lnk) v = rng.normal(3.6, 1.0);

        const KleCoeffs xi = coeffs_from_field(basis, f);
        const PermField back = sample_field(basis, xi);
        double res_sq = 0.0;
        for (std::size_t c = 0; c < f.lnk.size(); ++c) {
            const double d = f.lnk[c] - back.lnk[c];
            res_sq += d * d;
        }

        // oracle: unconstrained least squares on the scaled mode matrix
        Eigen::MatrixXd modes = basis.eigvecs * basis.eigvals.cwiseSqrt().asDiagonal();
        Eigen::VectorXd centered(basis.grid.n_cells());
        for (int c = 0; c < basis.grid.n_cells(); ++c)
            centered(c) = f.lnk[static_cast<std::size_t>(c)] - 3.6;
        const Eigen::VectorXd sol = modes.colPivHouseholderQr().solve(centered);
        const double oracle_res = (centered - modes * sol).squaredNorm();

        CHECK(std::sqrt(res_sq) == doctest::Approx(std::sqrt(oracle_res)).epsilon(1e-8));
    }
}

TEST_CASE("capacity and precondition errors") {
    CHECK_THROWS_AS(build_kle_basis(small_grid(101), 3.6, 1.0, 305, 305, 0.95), ContractError);
    CHECK_THROWS_AS(build_kle_basis(small_grid(8), 3.6, 1.0, 305, 305, 0.0), ContractError);
    CHECK_THROWS_AS(build_kle_basis(small_grid(8), 3.6, 1.0, 305, 305, 1.5), ContractError);
    CHECK_THROWS_AS(build_kle_basis(small_grid(8), 3.6, 1.0, -1.0, 305, 0.95), ContractError);
}

TEST_CASE("basis and field serialization round trip bit-exactly") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "geoloop_test_kle";
    fs::create_directories(dir);

    const auto basis = build_kle_basis(small_grid(8), 3.6, 1.0, 160.0, 160.0, 0.95);
    save_basis(dir / "basis.f64", basis);
    const KleBasis loaded = load_basis(dir / "basis.f64");
    CHECK(loaded.n_modes == basis.n_modes);
    CHECK(exact_eq(loaded.eigvals, basis.eigvals));
    CHECK(exact_eq(loaded.eigvecs, basis.eigvecs));
    CHECK(loaded.energy_fraction == basis.energy_fraction);

    Rng rng(3);
    const PermField f = sample_field(basis, draw_coeffs(basis, rng));
    save_field(dir / "field.f64", f);
    const PermField g = load_field(dir / "field.f64");
    CHECK(g.lnk == f.lnk);
    CHECK(g.grid == f.grid);

    export_field_csv(dir / "field.csv", f);
    CHECK(fs::exists(dir / "field.csv"));
    fs::remove_all(dir);
}
