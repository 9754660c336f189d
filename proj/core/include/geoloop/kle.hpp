#pragma once

#include <Eigen/Dense>

#include "geoloop/grid.hpp"
#include "geoloop/rng.hpp"

namespace geoloop {

// Truncated Karhunen-Loeve basis of a Gaussian log-permeability field with
// separable exponential covariance sigma^2 * exp(-|dx|/eta_x - |dy|/eta_y).
struct KleBasis {
    GridSpec grid;
    double mean_lnk = 3.6;
    double sigma_lnk = 1.0;
    double corr_len_x = 305.0; // m
    double corr_len_y = 305.0; // m
    int n_modes = 0;
    Eigen::VectorXd eigvals;   // descending, >= 0
    Eigen::MatrixXd eigvecs;   // n_cells x n_modes, orthonormal columns
    double energy_fraction = 0.0; // achieved sum(retained)/trace

    // Diagonal of the truncated covariance, sum_m lambda_m v_m(cell)^2.
    Eigen::VectorXd truncated_variance() const;
};

struct KleCoeffs {
    Eigen::VectorXd xi;
};

// Dense symmetric eigendecomposition over all cell centers. Retains the
// smallest mode count whose energy reaches energy_fraction, capped at
// max_modes. Grids above 10,000 cells are refused.
KleBasis build_kle_basis(const GridSpec& grid, double mean, double sigma, double corr_len_x,
                         double corr_len_y, double energy_fraction, int max_modes = 200);

// lnk = mean + sum_m xi_m sqrt(lambda_m) v_m
PermField sample_field(const KleBasis& basis, const KleCoeffs& coeffs);

// Least-squares projection onto the retained modes (orthonormal columns, so
// xi_m = v_m . (lnk - mean) / sqrt(lambda_m); zero-eigenvalue modes map to 0).
KleCoeffs coeffs_from_field(const KleBasis& basis, const PermField& field);

KleCoeffs draw_coeffs(const KleBasis& basis, Rng& rng);

void save_basis(const std::filesystem::path& path, const KleBasis& basis);
KleBasis load_basis(const std::filesystem::path& path);

} // namespace geoloop
