#include "geoloop/ies.hpp"

#include <cmath>
#include <iostream>

namespace geoloop {

void Ensemble::validate() const {
    if (n_members() < 2) throw ContractError("Ensemble: need at least 2 members");
    if (prior.rows() != members.rows() || prior.cols() != members.cols())
        throw ContractError("Ensemble: prior shape != members shape");
}

Ensemble draw_prior_ensemble(int n_params, int n_members, Rng& rng) {
    Ensemble e;
    e.members.resize(n_params, n_members);
    for (int j = 0; j < n_members; ++j)
        for (int p = 0; p < n_params; ++p) e.members(p, j) = rng.normal();
    e.prior = e.members;
    return e;
}

void ObservationSet::validate() const {
    if (values.size() != noise_std.size())
        throw ContractError("ObservationSet: noise_std length != values length");
    if ((noise_std.array() <= 0.0).any())
        throw ContractError("ObservationSet: noise std must be > 0");
    if (static_cast<int>(labels.size()) != n_obs())
        throw ContractError("ObservationSet: labels must cover all entries");
}

void ObservationSet::draw_perturbed(int n_members, Rng& rng) {
    perturbed.resize(values.size(), n_members);
    for (int j = 0; j < n_members; ++j)
        for (Eigen::Index d = 0; d < values.size(); ++d)
            perturbed(d, j) = values(d) + noise_std(d) * rng.normal();
}

void IesConfig::validate() const {
    if (max_iterations < 0) throw ContractError("IesConfig: max_iterations must be >= 0");
    if (!(lambda0 > 0)) throw ContractError("IesConfig: lambda0 must be > 0");
    if (!(lambda_decrease > 1.0) || !(lambda_increase > 1.0))
        throw ContractError("IesConfig: lambda factors must be > 1");
}

void to_json(json& j, const IesConfig& c) {
    j = json{{"max_iterations", c.max_iterations},
             {"lambda0", c.lambda0},
             {"lambda_decrease", c.lambda_decrease},
             {"lambda_increase", c.lambda_increase},
             {"tolerance", c.tolerance},
             {"seed", c.seed}};
}

void from_json(const json& j, IesConfig& c) {
    c.max_iterations = j.at("max_iterations").get<int>();
    c.lambda0 = j.value("lambda0", 10.0);
    c.lambda_decrease = j.value("lambda_decrease", 2.0);
    c.lambda_increase = j.value("lambda_increase", 4.0);
    c.tolerance = j.value("tolerance", 1e-3);
    c.seed = j.value("seed", std::uint64_t{0});
}

namespace {
// solve S X = B for symmetric S, adding diagonal jitter on factorization
// failure
Eigen::MatrixXd solve_spd(Eigen::MatrixXd S, const Eigen::MatrixXd& B, const char* what) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) return ldlt.solve(B);
    const double jitter = 1e-10 * S.trace() / static_cast<double>(S.rows());
    std::cerr << "ies: " << what << " factorization needed jitter " << jitter << "\n";
    S.diagonal().array() += jitter;
    ldlt.compute(S);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error(std::string("ies: singular matrix in ") + what);
    return ldlt.solve(B);
}
} // namespace

Eigen::MatrixXd ies_update(const Ensemble& ensemble, const ObservationSet& obs,
                           const Eigen::MatrixXd& predictions, double lambda) {
    ensemble.validate();
    obs.validate();
    const int ne = ensemble.n_members();
    const int np = ensemble.n_params();
    const int nd = obs.n_obs();
    if (predictions.rows() != nd || predictions.cols() != ne)
        throw ContractError("ies_update: prediction matrix must be n_obs x N_e");
    if (obs.perturbed.rows() != nd || obs.perturbed.cols() != ne)
        throw ContractError("ies_update: perturbed observations not drawn for this ensemble");

    const double denom = static_cast<double>(ne - 1);
    const Eigen::VectorXd m_mean = ensemble.members.rowwise().mean();
    const Eigen::VectorXd d_mean = predictions.rowwise().mean();
    const Eigen::MatrixXd A = ensemble.members.colwise() - m_mean; // np x ne
    const Eigen::MatrixXd B = predictions.colwise() - d_mean;      // nd x ne

    const Eigen::MatrixXd c_md = A * B.transpose() / denom; // np x nd
    Eigen::MatrixXd s = B * B.transpose() / denom;          // C_DlDl
    s.diagonal() += (1.0 + lambda) * obs.noise_std.array().square().matrix();

    // K = C_MlDl ((1+lambda) C_D + C_DlDl)^-1
    const Eigen::MatrixXd k = solve_spd(s, c_md.transpose(), "data covariance").transpose();

    // prior covariance of the ensemble (sample estimate, ridge-stabilized)
    const Eigen::VectorXd pr_mean = ensemble.prior.rowwise().mean();
    const Eigen::MatrixXd apr = ensemble.prior.colwise() - pr_mean;
    Eigen::MatrixXd c_m = apr * apr.transpose() / denom;
    c_m.diagonal().array() += 1e-8 * std::max(c_m.trace() / np, 1e-300);

    // X = C_M^-1 (m_j - m_j^pr) for all members at once
    const Eigen::MatrixXd x =
        solve_spd(c_m, ensemble.members - ensemble.prior, "prior covariance");

    // regularization term: (1/(1+lambda)) [C_Ml - K C_DlMl] X
    const Eigen::MatrixXd c_ml_x = A * (A.transpose() * x) / denom;
    const Eigen::MatrixXd c_dlml_x = B * (A.transpose() * x) / denom;
    const Eigen::MatrixXd reg = (c_ml_x - k * c_dlml_x) / (1.0 + lambda);

    // data-mismatch term: K (g(m_j) - d_j^obs)
    const Eigen::MatrixXd mis = k * (predictions - obs.perturbed);

    return ensemble.members - reg - mis;
}

Eigen::MatrixXd ies_update(const Ensemble& ensemble, const ObservationSet& obs,
                           const ForwardModel& forward, double lambda) {
    return ies_update(ensemble, obs, forward(ensemble.members), lambda);
}

double mean_data_mismatch(const Eigen::MatrixXd& predictions, const ObservationSet& obs) {
    const int ne = static_cast<int>(predictions.cols());
    double total = 0.0;
    for (int j = 0; j < ne; ++j) {
        const Eigen::ArrayXd r =
            (predictions.col(j) - obs.values).array() / obs.noise_std.array();
        total += r.square().mean();
    }
    return total / ne;
}

IesResult assimilate(const Ensemble& initial, const ObservationSet& observations,
                     const ForwardModel& forward, const IesConfig& config) {
    config.validate();
    IesResult result;
    result.ensemble = initial;
    result.ensemble.prior = initial.members;
    result.ensemble.iteration = 0;

    ObservationSet obs = observations;
    Rng rng(split_seed(config.seed, "ies_perturb"));
    obs.draw_perturbed(result.ensemble.n_members(), rng);

    Eigen::MatrixXd predictions = forward(result.ensemble.members);
    double mismatch = mean_data_mismatch(predictions, obs);
    result.history.push_back({0, config.lambda0, mismatch, true});

    double lambda = config.lambda0;
    double prev_improvement = std::numeric_limits<double>::infinity();
    result.status = "max_iterations";
    for (int iter = 1; iter <= config.max_iterations; ++iter) {
        const Eigen::MatrixXd proposal = ies_update(result.ensemble, obs, predictions, lambda);
        const Eigen::MatrixXd prop_pred = forward(proposal);
        const double prop_mismatch = mean_data_mismatch(prop_pred, obs);

        const bool accepted = prop_mismatch < mismatch;
        if (accepted) {
            const double improvement = (mismatch - prop_mismatch) / std::max(mismatch, 1e-300);
            result.ensemble.members = proposal;
            result.ensemble.iteration = iter;
            predictions = prop_pred;
            mismatch = prop_mismatch;
            lambda /= config.lambda_decrease;
            result.history.push_back({iter, lambda, mismatch, true});
            if (improvement < config.tolerance && prev_improvement < config.tolerance) {
                result.status = "converged";
                break;
            }
            prev_improvement = improvement;
        } else {
            lambda *= config.lambda_increase;
            result.history.push_back({iter, lambda, mismatch, false});
            if (lambda > 1e15)
                throw std::runtime_error("ies: stalled, lambda exceeded 1e15 without acceptance");
        }
    }
    return result;
}

EnsembleFieldMetrics ensemble_field_metrics(const Ensemble& ensemble, const KleBasis& basis,
                                            const PermField& reference) {
    if (reference.grid != basis.grid)
        throw ContractError("ensemble_field_metrics: reference grid != basis grid");
    if (ensemble.n_params() != basis.n_modes)
        throw ContractError("ensemble_field_metrics: member length != n_modes");

    const int n_cells = basis.grid.n_cells();
    const int ne = ensemble.n_members();
    // fields = mean + V sqrt(L) xi, evaluated for all members at once
    const Eigen::MatrixXd scaled =
        basis.eigvals.cwiseSqrt().asDiagonal() * ensemble.members; // n_modes x ne
    Eigen::MatrixXd fields = basis.eigvecs * scaled;
    fields.array() += basis.mean_lnk;

    EnsembleFieldMetrics out;
    out.mean_field = fields.rowwise().mean();
    out.variance_field.resize(n_cells);
    for (int c = 0; c < n_cells; ++c) {
        const double mean = out.mean_field(c);
        out.variance_field(c) =
            (fields.row(c).array() - mean).square().sum() / static_cast<double>(ne - 1);
    }
    double sq = 0.0;
    for (int c = 0; c < n_cells; ++c) {
        const double d = reference.lnk[static_cast<std::size_t>(c)] - out.mean_field(c);
        sq += d * d;
    }
    out.rmse = std::sqrt(sq / n_cells);
    out.spread = std::sqrt(out.variance_field.mean());
    return out;
}

void save_ies_history_csv(const std::filesystem::path& path,
                          const std::vector<IesIterationRow>& history) {
    std::vector<std::vector<double>> rows;
    for (const auto& r : history)
        rows.push_back({static_cast<double>(r.iteration), r.lambda, r.mismatch,
                        r.accepted ? 1.0 : 0.0});
    write_csv(path, {"iteration", "lambda", "mean_mismatch", "accepted"}, rows);
}

} // namespace geoloop
