#pragma once

#include <functional>

#include <Eigen/Dense>

#include "geoloop/kle.hpp"

namespace geoloop {

// Ensemble of parameter vectors, one column per member.
struct Ensemble {
    Eigen::MatrixXd members; // n_params x N_e
    Eigen::MatrixXd prior;   // frozen at the start of an assimilation run
    int iteration = 0;

    int n_params() const { return static_cast<int>(members.rows()); }
    int n_members() const { return static_cast<int>(members.cols()); }
    void validate() const;
};

Ensemble draw_prior_ensemble(int n_params, int n_members, Rng& rng);

struct ObservationSet {
    Eigen::VectorXd values;    // d_obs
    Eigen::VectorXd noise_std; // diagonal of C_D^(1/2), all > 0
    std::vector<std::string> labels;
    Eigen::MatrixXd perturbed; // n_obs x N_e, one column per member

    int n_obs() const { return static_cast<int>(values.size()); }
    void validate() const;
    // d_j = d_obs + C_D^(1/2) eps_j, drawn once per assimilation run
    void draw_perturbed(int n_members, Rng& rng);
};

struct IesConfig {
    int max_iterations = 10;
    double lambda0 = 10.0;
    double lambda_decrease = 2.0;
    double lambda_increase = 4.0;
    double tolerance = 1e-3; // relative mismatch improvement, two accepted iterations
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(json& j, const IesConfig& c);
void from_json(const json& j, IesConfig& c);

// Batched forward model: columns of the argument are members, columns of
// the result are the corresponding predicted data vectors.
using ForwardModel = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& members)>;

// One damped update of every member (the paper's LM-regularized scheme).
// Pass predictions to reuse forward evaluations; they must correspond to
// the current members.
Eigen::MatrixXd ies_update(const Ensemble& ensemble, const ObservationSet& obs,
                           const Eigen::MatrixXd& predictions, double lambda);

Eigen::MatrixXd ies_update(const Ensemble& ensemble, const ObservationSet& obs,
                           const ForwardModel& forward, double lambda);

// mean over members of the C_D-normalized squared data mismatch per datum
double mean_data_mismatch(const Eigen::MatrixXd& predictions, const ObservationSet& obs);

struct IesIterationRow {
    int iteration = 0;
    double lambda = 0.0;
    double mismatch = 0.0;
    bool accepted = false;
};

struct IesResult {
    Ensemble ensemble;
    std::vector<IesIterationRow> history;
    std::string status; // converged | max_iterations
};

// LM loop: propose with the current lambda, accept when the mean mismatch
// decreases. Perturbed observations are drawn here from config.seed, so a
// repeated run reproduces the result exactly.
IesResult assimilate(const Ensemble& initial, const ObservationSet& observations,
                     const ForwardModel& forward, const IesConfig& config);

struct EnsembleFieldMetrics {
    double rmse = 0.0;   // vs reference, cellwise ensemble-mean field
    double spread = 0.0; // sqrt(mean cell ensemble variance)
    Eigen::VectorXd mean_field;
    Eigen::VectorXd variance_field;
};

EnsembleFieldMetrics ensemble_field_metrics(const Ensemble& ensemble, const KleBasis& basis,
                                            const PermField& reference);

void save_ies_history_csv(const std::filesystem::path& path,
                          const std::vector<IesIterationRow>& history);

} // namespace geoloop
