#pragma once

#include <functional>

#include <Eigen/Dense>

#include "geoloop/io.hpp"
#include "geoloop/rng.hpp"

namespace geoloop {

enum class DeStrategy { rand1, best1, target1 };
enum class DeConstraintHandling { feasibility_rule, penalty };

DeStrategy de_strategy_from_string(const std::string& s);
DeConstraintHandling de_constraints_from_string(const std::string& s);

struct DeConfig {
    int n_ind = 300;
    int n_dims = 0;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    double scale_f = 0.5;
    double crossover_cr = 0.7;
    DeStrategy strategy = DeStrategy::rand1;
    int g_max = 1000;
    std::uint64_t seed = 0;
    DeConstraintHandling constraints = DeConstraintHandling::feasibility_rule;
    double penalty_coeff = 1e6;
    int threads = 1;

    void validate() const;
};

// Minimization fitness with constraint violation; violation == 0 means
// feasible. NPV maximization wraps value = -NPV.
struct DeFitness {
    double value = 0.0;
    double violation = 0.0;
};
using DeFitnessFn = std::function<DeFitness(const Eigen::VectorXd&)>;

struct Population {
    Eigen::MatrixXd individuals; // n_ind x n_dims
    std::vector<DeFitness> fitnesses;
    int generation = 0;
    Eigen::VectorXd best;
    DeFitness best_fitness;
};

struct MutantInfo {
    Eigen::VectorXd v;
    int r1 = -1, r2 = -1, r3 = -1; // sampled indices, for replay checks
};

struct DeTraceRow {
    int generation = 0;
    double best = 0.0;
    double mean = 0.0;
    double worst = 0.0;
    double feasible_fraction = 0.0;
};

struct DeResult {
    Eigen::VectorXd best;
    DeFitness best_fitness;
    std::vector<DeTraceRow> trace;
    int nan_warnings = 0;
};

// true when a is selected over b under the configured constraint rule;
// ties go to a (the trial side in selection).
bool de_better_or_equal(const DeFitness& a, const DeFitness& b, const DeConfig& config);

Population de_initialize(const DeConfig& config, const DeFitnessFn& fitness, Rng& rng);

MutantInfo de_mutate(const Population& pop, const DeConfig& config, int target, Rng& rng);

Eigen::VectorXd de_crossover(const Eigen::VectorXd& target, const Eigen::VectorXd& mutant,
                             const DeConfig& config, Rng& rng);

DeResult de_run(const DeConfig& config, const DeFitnessFn& fitness);

void save_de_trace_csv(const std::filesystem::path& path, const std::vector<DeTraceRow>& trace);

} // namespace geoloop
