#include "geoloop/de.hpp"

#include <cmath>
#include <iostream>

#include "geoloop/threads.hpp"

namespace geoloop {

DeStrategy de_strategy_from_string(const std::string& s) {
    if (s == "rand1") return DeStrategy::rand1;
    if (s == "best1") return DeStrategy::best1;
    if (s == "target1") return DeStrategy::target1;
    throw ContractError("DE strategy must be rand1, best1, or target1, got " + s);
}

DeConstraintHandling de_constraints_from_string(const std::string& s) {
    if (s == "feasibility-rule") return DeConstraintHandling::feasibility_rule;
    if (s == "penalty") return DeConstraintHandling::penalty;
    throw ContractError("DE constraint handling must be feasibility-rule or penalty, got " + s);
}

void DeConfig::validate() const {
    if (n_ind < 1) throw ContractError("DeConfig: n_ind must be >= 1");
    if (n_dims < 1) throw ContractError("DeConfig: n_dims must be >= 1");
    if (lower.size() != n_dims || upper.size() != n_dims)
        throw ContractError("DeConfig: bounds must have n_dims entries");
    for (int d = 0; d < n_dims; ++d)
        if (lower(d) > upper(d)) throw ContractError("DeConfig: lower > upper in dim " +
                                                     std::to_string(d));
    if (!(crossover_cr > 0.0 && crossover_cr <= 1.0))
        throw ContractError("DeConfig: Cr must be in (0, 1]");
    if (!(scale_f > 0.0)) throw ContractError("DeConfig: F must be > 0");
    if (g_max < 0) throw ContractError("DeConfig: g_max must be >= 0");
}

bool de_better_or_equal(const DeFitness& a, const DeFitness& b, const DeConfig& config) {
    if (config.constraints == DeConstraintHandling::penalty) {
        const double pa = a.value + config.penalty_coeff * a.violation * a.violation;
        const double pb = b.value + config.penalty_coeff * b.violation * b.violation;
        return pa <= pb;
    }
    const bool fa = a.violation == 0.0, fb = b.violation == 0.0;
    if (fa && fb) return a.value <= b.value;
    if (fa != fb) return fa;
    return a.violation <= b.violation;
}

namespace {
DeFitness sanitize(DeFitness f, int& nan_warnings) {
    if (std::isnan(f.value) || std::isnan(f.violation)) {
        ++nan_warnings;
        std::cerr << "de: NaN fitness treated as +inf\n";
        f.value = std::numeric_limits<double>::infinity();
        f.violation = std::numeric_limits<double>::infinity();
    }
    return f;
}

void evaluate_batch(const Eigen::MatrixXd& candidates, const DeFitnessFn& fitness, int threads,
                    std::vector<DeFitness>& out, int& nan_warnings) {
    out.resize(static_cast<std::size_t>(candidates.rows()));
    parallel_for(static_cast<std::size_t>(candidates.rows()), threads, [&](std::size_t i) {
        out[i] = fitness(candidates.row(static_cast<Eigen::Index>(i)).transpose());
    });
    // NaN screening stays on the calling thread so the warning count is
    // deterministic.
    for (auto& f : out) f = sanitize(f, nan_warnings);
}

double reflect_into(double v, double lo, double hi) {
    if (lo == hi) return lo;
    for (int k = 0; k < 16 && (v < lo || v > hi); ++k) {
        if (v < lo) v = 2.0 * lo - v;
        if (v > hi) v = 2.0 * hi - v;
    }
    return std::clamp(v, lo, hi);
}
} // namespace

Population de_initialize(const DeConfig& config, const DeFitnessFn& fitness, Rng& rng) {
    config.validate();
    Population pop;
    pop.individuals.resize(config.n_ind, config.n_dims);
    for (int i = 0; i < config.n_ind; ++i)
        for (int d = 0; d < config.n_dims; ++d)
            pop.individuals(i, d) =
                config.lower(d) + rng.uniform() * (config.upper(d) - config.lower(d));

    int nan_warnings = 0;
    evaluate_batch(pop.individuals, fitness, config.threads, pop.fitnesses, nan_warnings);
    pop.generation = 0;
    int best = 0;
    for (int i = 1; i < config.n_ind; ++i)
        if (de_better_or_equal(pop.fitnesses[static_cast<std::size_t>(i)],
                               pop.fitnesses[static_cast<std::size_t>(best)], config))
            best = i;
    pop.best = pop.individuals.row(best).transpose();
    pop.best_fitness = pop.fitnesses[static_cast<std::size_t>(best)];
    return pop;
}

MutantInfo de_mutate(const Population& pop, const DeConfig& config, int target, Rng& rng) {
    const int n = static_cast<int>(pop.individuals.rows());
    if (n < 4)
        throw ContractError("de_mutate: need at least 4 individuals for three distinct "
                            "non-target indices");

    // distinct indices, all != target
    int idx[3];
    for (int k = 0; k < 3; ++k) {
        int r;
        bool ok;
        do {
            r = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
            ok = r != target;
            for (int p = 0; p < k; ++p) ok = ok && r != idx[p];
        } while (!ok);
        idx[k] = r;
    }

    MutantInfo info;
    info.r1 = idx[0];
    info.r2 = idx[1];
    info.r3 = idx[2];
    Eigen::VectorXd base;
    switch (config.strategy) {
    case DeStrategy::rand1: base = pop.individuals.row(info.r1).transpose(); break;
    case DeStrategy::best1: base = pop.best; break;
    case DeStrategy::target1: base = pop.individuals.row(target).transpose(); break;
    }
    info.v = base + config.scale_f * (pop.individuals.row(info.r2).transpose() -
                                      pop.individuals.row(info.r3).transpose());
    for (int d = 0; d < config.n_dims; ++d)
        info.v(d) = reflect_into(info.v(d), config.lower(d), config.upper(d));
    return info;
}

Eigen::VectorXd de_crossover(const Eigen::VectorXd& target, const Eigen::VectorXd& mutant,
                             const DeConfig& config, Rng& rng) {
    if (target.size() != mutant.size())
        throw ContractError("de_crossover: vector length mismatch");
    const int n = static_cast<int>(target.size());
    const int j_rand = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
    Eigen::VectorXd trial = target;
    for (int d = 0; d < n; ++d)
        if (rng.uniform() <= config.crossover_cr || d == j_rand) trial(d) = mutant(d);
    return trial;
}

DeResult de_run(const DeConfig& config, const DeFitnessFn& fitness) {
    Rng rng(config.seed);
    int nan_warnings = 0;

    Population pop = de_initialize(config, fitness, rng);

    DeResult result;
    auto record = [&](const Population& p) {
        DeTraceRow row;
        row.generation = p.generation;
        row.best = p.best_fitness.value;
        double mean = 0.0, worst = -std::numeric_limits<double>::infinity();
        int feasible = 0;
        for (const auto& f : p.fitnesses) {
            mean += f.value;
            worst = std::max(worst, f.value);
            feasible += f.violation == 0.0;
        }
        row.mean = mean / static_cast<double>(p.fitnesses.size());
        row.worst = worst;
        row.feasible_fraction = static_cast<double>(feasible) /
                                static_cast<double>(p.fitnesses.size());
        result.trace.push_back(row);
    };
    record(pop);

    Eigen::MatrixXd trials(config.n_ind, config.n_dims);
    std::vector<DeFitness> trial_fitness;
    for (int g = 1; g <= config.g_max; ++g) {
        // All random draws happen here, sequentially, so fitness evaluation
        // can be parallel without touching the stream.
        for (int i = 0; i < config.n_ind; ++i) {
            const MutantInfo mutant = de_mutate(pop, config, i, rng);
            trials.row(i) =
                de_crossover(pop.individuals.row(i).transpose(), mutant.v, config, rng)
                    .transpose();
        }
        try {
            evaluate_batch(trials, fitness, config.threads, trial_fitness, nan_warnings);
        } catch (const std::exception& e) {
            throw std::runtime_error("de_run: fitness failure at generation " +
                                     std::to_string(g) + ": " + e.what());
        }

        for (int i = 0; i < config.n_ind; ++i) {
            if (de_better_or_equal(trial_fitness[static_cast<std::size_t>(i)],
                                   pop.fitnesses[static_cast<std::size_t>(i)], config)) {
                pop.individuals.row(i) = trials.row(i);
                pop.fitnesses[static_cast<std::size_t>(i)] =
                    trial_fitness[static_cast<std::size_t>(i)];
                if (de_better_or_equal(pop.fitnesses[static_cast<std::size_t>(i)],
                                       pop.best_fitness, config)) {
                    pop.best = pop.individuals.row(i).transpose();
                    pop.best_fitness = pop.fitnesses[static_cast<std::size_t>(i)];
                }
            }
        }
        pop.generation = g;
        record(pop);
    }

    result.best = pop.best;
    result.best_fitness = pop.best_fitness;
    result.nan_warnings = nan_warnings;
    return result;
}

void save_de_trace_csv(const std::filesystem::path& path, const std::vector<DeTraceRow>& trace) {
    std::vector<std::vector<double>> rows;
    for (const auto& r : trace)
        rows.push_back({static_cast<double>(r.generation), r.best, r.mean, r.worst,
                        r.feasible_fraction});
    write_csv(path, {"generation", "best", "mean", "worst", "feasible_fraction"}, rows);
}

} // namespace geoloop
