#include "geoloop/economics.hpp"

#include <cmath>

#include "geoloop/threads.hpp"

namespace geoloop {

namespace {
constexpr double kJoulePerMwh = 3.6e9;
constexpr double kDaysPerYear = 365.0;
} // namespace

void EconSpec::validate() const {
    if (energy_price < 0 || water_prod_cost < 0 || water_inj_cost < 0)
        throw ContractError("EconSpec: prices must be >= 0");
    if (discount_rate < 0) throw ContractError("EconSpec: discount rate must be >= 0");
    if (fluid_density <= 0 || fluid_heat_capacity <= 0)
        throw ContractError("EconSpec: fluid properties must be > 0");
}

void to_json(json& j, const EconSpec& s) {
    j = json{{"energy_price", s.energy_price},
             {"water_prod_cost", s.water_prod_cost},
             {"water_inj_cost", s.water_inj_cost},
             {"discount_rate", s.discount_rate},
             {"fluid_density", s.fluid_density},
             {"fluid_heat_capacity", s.fluid_heat_capacity},
             {"critical_temperature", s.critical_temperature}};
}

void from_json(const json& j, EconSpec& s) {
    s.energy_price = j.at("energy_price").get<double>();
    s.water_prod_cost = j.at("water_prod_cost").get<double>();
    s.water_inj_cost = j.at("water_inj_cost").get<double>();
    s.discount_rate = j.at("discount_rate").get<double>();
    s.fluid_density = j.value("fluid_density", 1000.0);
    s.fluid_heat_capacity = j.value("fluid_heat_capacity", 4200.0);
    s.critical_temperature = j.at("critical_temperature").get<double>();
}

double thermal_energy(const ProductionSeries& series, const EconSpec& spec, int step,
                      double injection_temperature) {
    if (step < 0 || step >= series.n_steps())
        throw ContractError("thermal_energy: step out of range");
    const double dt_days = step == 0 ? series.times[0]
                                     : series.times[static_cast<std::size_t>(step)] -
                                           series.times[static_cast<std::size_t>(step - 1)];
    double produced = 0.0;
    for (Eigen::Index w = 0; w < series.producer_rates.rows(); ++w) {
        const double q = series.producer_rates(w, step);
        if (q < 0.0) throw ContractError("thermal_energy: negative producer rate");
        produced += q * dt_days * series.producer_temps(w, step);
    }
    double injected = 0.0;
    for (Eigen::Index w = 0; w < series.injector_rates.rows(); ++w) {
        const double q = series.injector_rates(w, step);
        if (q < 0.0) throw ContractError("thermal_energy: negative injector rate");
        injected += q * dt_days * injection_temperature;
    }
    return spec.fluid_density * spec.fluid_heat_capacity * (produced - injected) / kJoulePerMwh;
}

NpvBreakdown npv(const ProductionSeries& series, const EconSpec& spec, double step_days,
                 double injection_temperature) {
    spec.validate();
    const int n_steps = series.n_steps();
    NpvBreakdown b;
    b.constraint_ok.resize(series.producer_temps.rows(), n_steps);
    for (int t = 0; t < n_steps; ++t) {
        const double energy = thermal_energy(series, spec, t, injection_temperature);
        const double q_prod = series.producer_rates.col(t).sum() * step_days;
        const double q_inj = series.injector_rates.col(t).sum() * step_days;
        const double years = series.times[static_cast<std::size_t>(t)] / kDaysPerYear;
        const double discount = std::pow(1.0 + spec.discount_rate, -years);
        const double net = spec.energy_price * energy - spec.water_prod_cost * q_prod -
                           spec.water_inj_cost * q_inj;
        b.energy_revenue.push_back(spec.energy_price * energy);
        b.production_cost.push_back(spec.water_prod_cost * q_prod);
        b.injection_cost.push_back(spec.water_inj_cost * q_inj);
        b.discount_factor.push_back(discount);
        b.discounted_net.push_back(discount * net);
        b.total += discount * net;
        for (Eigen::Index w = 0; w < series.producer_temps.rows(); ++w)
            b.constraint_ok(w, t) = series.producer_temps(w, t) > spec.critical_temperature;
    }
    return b;
}

json NpvBreakdown::to_json_report() const {
    json steps = json::array();
    for (std::size_t t = 0; t < discounted_net.size(); ++t)
        steps.push_back(json{{"energy_revenue", energy_revenue[t]},
                             {"production_cost", production_cost[t]},
                             {"injection_cost", injection_cost[t]},
                             {"discount_factor", discount_factor[t]},
                             {"discounted_net", discounted_net[t]}});
    bool feasible = true;
    for (Eigen::Index w = 0; w < constraint_ok.rows(); ++w)
        for (Eigen::Index t = 0; t < constraint_ok.cols(); ++t) feasible &= constraint_ok(w, t);
    return json{{"total_npv", total}, {"feasible", feasible}, {"steps", std::move(steps)}};
}

double constraint_violation(const ProductionSeries& series, const EconSpec& spec) {
    double total = 0.0;
    for (Eigen::Index w = 0; w < series.producer_temps.rows(); ++w)
        for (int t = 0; t < series.n_steps(); ++t)
            total += std::max(0.0, spec.critical_temperature - series.producer_temps(w, t));
    return total;
}

RobustObjective robust_objective(std::size_t n_members, const MemberForward& forward,
                                 const EconSpec& spec, double step_days,
                                 double injection_temperature, int threads) {
    if (n_members == 0) throw ContractError("robust_objective: empty ensemble");

    struct Entry {
        bool ok = false;
        double npv_value = 0.0;
        double violation = 0.0;
        std::string reason;
    };
    std::vector<Entry> entries(n_members);
    parallel_for(n_members, threads, [&](std::size_t m) {
        try {
            const ProductionSeries series = forward(m);
            entries[m].npv_value = npv(series, spec, step_days, injection_temperature).total;
            entries[m].violation = constraint_violation(series, spec);
            entries[m].ok = true;
        } catch (const std::exception& e) {
            entries[m].reason = e.what();
        }
    });

    RobustObjective out;
    std::size_t feasible = 0;
    for (const auto& e : entries) {
        if (!e.ok) {
            ++out.failed;
            continue;
        }
        out.member_npvs.push_back(e.npv_value);
        out.member_violations.push_back(e.violation);
        out.mean_npv += e.npv_value;
        feasible += e.violation == 0.0;
        ++out.evaluated;
    }
    if (out.evaluated < (n_members * 9 + 9) / 10)
        throw std::runtime_error("robust_objective: more than 10% of member evaluations "
                                 "failed (" + std::to_string(out.failed) + " of " +
                                 std::to_string(n_members) + ")");
    out.mean_npv /= static_cast<double>(out.evaluated);
    out.feasible_fraction = static_cast<double>(feasible) / static_cast<double>(out.evaluated);
    return out;
}

} // namespace geoloop
