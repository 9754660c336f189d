#include "geoloop/kle.hpp"

#include <cmath>

namespace geoloop {

Eigen::VectorXd KleBasis::truncated_variance() const {
    Eigen::VectorXd var = Eigen::VectorXd::Zero(eigvecs.rows());
    for (int m = 0; m < n_modes; ++m)
        var += eigvals(m) * eigvecs.col(m).cwiseAbs2();
    return var;
}

KleBasis build_kle_basis(const GridSpec& grid, double mean, double sigma, double corr_len_x,
                         double corr_len_y, double energy_fraction, int max_modes) {
    grid.validate();
    if (!(energy_fraction > 0.0 && energy_fraction <= 1.0))
        throw ContractError("build_kle_basis: energy_fraction must be in (0, 1]");
    if (corr_len_x <= 0.0 || corr_len_y <= 0.0)
        throw ContractError("build_kle_basis: correlation lengths must be > 0");
    const int n = grid.n_cells();
    if (n > 10000)
        throw ContractError("build_kle_basis: grid exceeds 10,000 cells, dense "
                            "eigendecomposition refused");

    KleBasis basis;
    basis.grid = grid;
    basis.mean_lnk = mean;
    basis.sigma_lnk = sigma;
    basis.corr_len_x = corr_len_x;
    basis.corr_len_y = corr_len_y;

    if (sigma == 0.0) {
        basis.n_modes = 0;
        basis.eigvals.resize(0);
        basis.eigvecs.resize(n, 0);
        basis.energy_fraction = 1.0;
        return basis;
    }

    Eigen::MatrixXd cov(n, n);
    const double s2 = sigma * sigma;
    for (int a = 0; a < n; ++a) {
        const double xa = grid.cell_center_x(a % grid.nx);
        const double ya = grid.cell_center_y(a / grid.nx);
        for (int b = 0; b <= a; ++b) {
            const double xb = grid.cell_center_x(b % grid.nx);
            const double yb = grid.cell_center_y(b / grid.nx);
            const double v = s2 * std::exp(-std::abs(xa - xb) / corr_len_x -
                                           std::abs(ya - yb) / corr_len_y);
            cov(a, b) = v;
            cov(b, a) = v;
        }
    }
    const double trace = cov.trace();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("build_kle_basis: dense eigensolver failed");

    // Eigen returns ascending order; flip to descending and clamp roundoff
    // negatives to zero (tolerate down to -1e-10).
    Eigen::VectorXd vals = solver.eigenvalues().reverse();
    Eigen::MatrixXd vecs = solver.eigenvectors().rowwise().reverse();
    for (int m = 0; m < vals.size(); ++m) {
        if (vals(m) < -1e-10)
            throw std::runtime_error("build_kle_basis: covariance not PSD, eigenvalue " +
                                     std::to_string(vals(m)));
        if (vals(m) < 0.0) vals(m) = 0.0;
    }

    const double target = energy_fraction * trace;
    double cum = 0.0;
    int keep = 0;
    while (keep < vals.size() && cum < target && keep < max_modes) {
        cum += vals(keep);
        ++keep;
    }
    basis.n_modes = keep;
    basis.eigvals = vals.head(keep);
    basis.eigvecs = vecs.leftCols(keep);
    basis.energy_fraction = cum / trace;
    return basis;
}

PermField sample_field(const KleBasis& basis, const KleCoeffs& coeffs) {
    if (coeffs.xi.size() != basis.n_modes)
        throw ContractError("sample_field: coefficient length != n_modes");
    PermField field;
    field.grid = basis.grid;
    Eigen::VectorXd lnk =
        Eigen::VectorXd::Constant(basis.grid.n_cells(), basis.mean_lnk);
    if (basis.n_modes > 0)
        lnk += basis.eigvecs * basis.eigvals.cwiseSqrt().cwiseProduct(coeffs.xi);
    field.lnk.assign(lnk.data(), lnk.data() + lnk.size());
    return field;
}

KleCoeffs coeffs_from_field(const KleBasis& basis, const PermField& field) {
    if (field.grid != basis.grid)
        throw ContractError("coeffs_from_field: field grid != basis grid");
    Eigen::Map<const Eigen::VectorXd> lnk(field.lnk.data(),
                                          static_cast<Eigen::Index>(field.lnk.size()));
    Eigen::VectorXd centered = lnk.array() - basis.mean_lnk;
    KleCoeffs coeffs;
    coeffs.xi = basis.eigvecs.transpose() * centered;
    for (int m = 0; m < basis.n_modes; ++m) {
        const double sq = std::sqrt(basis.eigvals(m));
        coeffs.xi(m) = sq > 0.0 ? coeffs.xi(m) / sq : 0.0;
    }
    return coeffs;
}

KleCoeffs draw_coeffs(const KleBasis& basis, Rng& rng) {
    KleCoeffs coeffs;
    coeffs.xi.resize(basis.n_modes);
    for (int m = 0; m < basis.n_modes; ++m) coeffs.xi(m) = rng.normal();
    return coeffs;
}

void save_basis(const std::filesystem::path& path, const KleBasis& basis) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(basis.n_modes) * (basis.grid.n_cells() + 1));
    for (int m = 0; m < basis.n_modes; ++m) data.push_back(basis.eigvals(m));
    for (int m = 0; m < basis.n_modes; ++m)
        for (int c = 0; c < basis.grid.n_cells(); ++c) data.push_back(basis.eigvecs(c, m));
    json extra{{"grid", basis.grid},
               {"mean_lnk", basis.mean_lnk},
               {"sigma_lnk", basis.sigma_lnk},
               {"corr_len_x", basis.corr_len_x},
               {"corr_len_y", basis.corr_len_y},
               {"n_modes", basis.n_modes},
               {"energy_fraction", basis.energy_fraction}};
    write_f64_blob(path, data, {static_cast<std::int64_t>(data.size())}, std::move(extra));
}

KleBasis load_basis(const std::filesystem::path& path) {
    F64Blob blob = read_f64_blob(path);
    KleBasis basis;
    basis.grid = blob.sidecar.at("grid").get<GridSpec>();
    basis.mean_lnk = blob.sidecar.at("mean_lnk").get<double>();
    basis.sigma_lnk = blob.sidecar.at("sigma_lnk").get<double>();
    basis.corr_len_x = blob.sidecar.at("corr_len_x").get<double>();
    basis.corr_len_y = blob.sidecar.at("corr_len_y").get<double>();
    basis.n_modes = blob.sidecar.at("n_modes").get<int>();
    basis.energy_fraction = blob.sidecar.at("energy_fraction").get<double>();
    const int n = basis.grid.n_cells();
    if (blob.data.size() != static_cast<std::size_t>(basis.n_modes) * (n + 1))
        throw ContractError("load_basis: blob size mismatch: " + path.string());
    basis.eigvals.resize(basis.n_modes);
    basis.eigvecs.resize(n, basis.n_modes);
    std::size_t k = 0;
    for (int m = 0; m < basis.n_modes; ++m) basis.eigvals(m) = blob.data[k++];
    for (int m = 0; m < basis.n_modes; ++m)
        for (int c = 0; c < n; ++c) basis.eigvecs(c, m) = blob.data[k++];
    return basis;
}

} // namespace geoloop
