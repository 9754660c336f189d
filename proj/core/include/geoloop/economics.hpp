#pragma once

#include <functional>

#include "geoloop/simulator.hpp"

namespace geoloop {

struct EconSpec {
    double energy_price = 40.0;       // currency / MWh
    double water_prod_cost = 0.5;     // currency / m3
    double water_inj_cost = 0.5;      // currency / m3
    double discount_rate = 0.05;      // fraction / year
    double fluid_density = 1000.0;    // kg/m3
    double fluid_heat_capacity = 4200.0; // J/(kg K)
    double critical_temperature = 130.0; // degC

    void validate() const;
};

void to_json(json& j, const EconSpec& s);
void from_json(const json& j, EconSpec& s);

struct NpvBreakdown {
    std::vector<double> energy_revenue;  // currency per step, undiscounted
    std::vector<double> production_cost;
    std::vector<double> injection_cost;
    std::vector<double> discount_factor;
    std::vector<double> discounted_net;
    double total = 0.0;
    // constraint_ok(w, t): producer w meets the critical temperature at step t
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> constraint_ok;

    json to_json_report() const;
};

// Net thermal energy extracted during step t, MWh. Produced streams are
// weighted by their temperature, injected streams by the injection
// temperature.
double thermal_energy(const ProductionSeries& series, const EconSpec& spec, int step,
                      double injection_temperature);

NpvBreakdown npv(const ProductionSeries& series, const EconSpec& spec, double step_days,
                 double injection_temperature);

// Sum over producers and steps of max(0, T_c - T_prod), degC * steps.
double constraint_violation(const ProductionSeries& series, const EconSpec& spec);

struct RobustObjective {
    double mean_npv = 0.0;
    std::vector<double> member_npvs;
    std::vector<double> member_violations;
    double feasible_fraction = 0.0;
    std::size_t evaluated = 0;
    std::size_t failed = 0;
};

// Forward model mapping a member index to its predicted production under
// the candidate schedule. Throwing marks the member failed; the mean is
// taken over survivors only while at least 90% survive.
using MemberForward = std::function<ProductionSeries(std::size_t member)>;

RobustObjective robust_objective(std::size_t n_members, const MemberForward& forward,
                                 const EconSpec& spec, double step_days,
                                 double injection_temperature, int threads = 1);

} // namespace geoloop
