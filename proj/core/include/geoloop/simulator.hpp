#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "geoloop/grid.hpp"
#include "geoloop/rng.hpp"

namespace geoloop {

// Single-phase, slightly compressible, non-isothermal 2D reservoir.
// Pressures in bar and temperatures in degC at the interface, SI inside.
struct ReservoirSpec {
    GridSpec grid;
    double porosity = 0.1;
    double rock_heat_capacity = 2.5e6;       // J/(m3 K), rock volumetric
    double fluid_density = 1000.0;           // kg/m3
    double fluid_heat_capacity = 4200.0;     // J/(kg K)
    double fluid_viscosity = 3.0e-4;         // Pa s, temperature-independent
    double fluid_compressibility = 4.5e-10;  // 1/Pa
    double therm_cond_water = 0.6;           // W/(m K)
    double therm_cond_rock = 2.0;            // W/(m K)
    double init_pressure = 380.0;            // bar
    double init_temperature = 200.0;         // degC
    double injection_temperature = 20.0;     // degC

    void validate() const;
};

void to_json(json& j, const ReservoirSpec& s);
void from_json(const json& j, ReservoirSpec& s);

struct WellSpec {
    enum class Kind { injector, producer };
    std::string name;
    Kind kind = Kind::injector;
    int i = 0;
    int j = 0;
    double radius = 0.1; // m
    double skin = 0.0;
};

void to_json(json& j, const WellSpec& w);
void from_json(const json& j, WellSpec& w);
void validate_wells(const std::vector<WellSpec>& wells, const GridSpec& grid);
int count_injectors(const std::vector<WellSpec>& wells);
int count_producers(const std::vector<WellSpec>& wells);

// Box constraints on the control variables; the paper baseline is
// rates in [1100, 1300] m3/day and BHPs in [230, 250] bar.
struct ScheduleBounds {
    double rate_lo = 1100.0;
    double rate_hi = 1300.0;
    double bhp_lo = 230.0;
    double bhp_hi = 250.0;
};

void to_json(json& j, const ScheduleBounds& b);
void from_json(const json& j, ScheduleBounds& b);

struct ControlSchedule {
    int n_steps = 25;
    double step_days = 150.0;
    Eigen::MatrixXd injector_rates; // n_inj x n_steps, m3/day
    Eigen::MatrixXd producer_bhps;  // n_prod x n_steps, bar

    void validate_shape(int n_inj, int n_prod) const;
    // throws ContractError when any entry is outside the box
    void validate_bounds(const ScheduleBounds& bounds) const;
};

void to_json(json& j, const ControlSchedule& s);
void from_json(const json& j, ControlSchedule& s);

ControlSchedule constant_schedule(int n_inj, int n_prod, int n_steps, double step_days,
                                  double rate, double bhp);
ControlSchedule random_schedule(int n_inj, int n_prod, int n_steps, double step_days,
                                const ScheduleBounds& bounds, Rng& rng);

// Well quantities at every control-step end.
struct ProductionSeries {
    std::vector<double> times;      // days since simulation start, step ends
    Eigen::MatrixXd producer_rates; // n_prod x n_steps, m3/day
    Eigen::MatrixXd producer_temps; // degC
    Eigen::MatrixXd producer_bhps;  // bar
    Eigen::MatrixXd injector_bhps;  // bar
    Eigen::MatrixXd injector_rates; // m3/day

    int n_steps() const { return static_cast<int>(times.size()); }
};

// Fixed column order: time, producer rates, producer temps, producer BHPs,
// injector BHPs, injector rates.
void save_series_csv(const std::filesystem::path& path, const ProductionSeries& series);
ProductionSeries load_series_csv(const std::filesystem::path& path);

struct SimOptions {
    int substeps_per_control_step = 10;
    bool collect_diagnostics = false;
};

// Per-substep conservation bookkeeping, all volumes at reference density.
struct SimDiagnostics {
    struct Substep {
        double dt_days = 0.0;
        double storage_delta = 0.0; // m3
        double injected = 0.0;      // m3
        double produced = 0.0;      // m3
        std::vector<double> producer_cell_pressure; // bar
        std::vector<double> producer_rate;          // m3/day
        std::vector<double> producer_bhp;           // bar
        double temp_min = 0.0;
        double temp_max = 0.0;
    };
    std::vector<Substep> substeps;

    double cumulative_mass_residual() const;
    std::vector<double> per_step_mass_residual() const;
};

struct SimState {
    Eigen::VectorXd pressure;    // Pa
    Eigen::VectorXd temperature; // degC
    double time_days = 0.0;
};

struct StepOutputs {
    Eigen::VectorXd producer_rates;
    Eigen::VectorXd producer_temps;
    Eigen::VectorXd producer_bhps;
    Eigen::VectorXd injector_bhps;
    Eigen::VectorXd injector_rates;
};

// Incremental driver: holds the grid/field-dependent discretization and
// advances a state one control step at a time. A given instance is
// single-threaded; independent instances may run concurrently.
class Simulator {
public:
    Simulator(const ReservoirSpec& spec, std::vector<WellSpec> wells, const PermField& field);

    SimState initial_state() const;

    StepOutputs advance(SimState& state, const Eigen::VectorXd& injector_rates,
                        const Eigen::VectorXd& producer_bhps, double step_days, int substeps,
                        SimDiagnostics* diag = nullptr);

    int n_injectors() const { return static_cast<int>(injector_cells_.size()); }
    int n_producers() const { return static_cast<int>(producer_cells_.size()); }
    const ReservoirSpec& spec() const { return spec_; }

private:
    void solve_pressure(SimState& state, const Eigen::VectorXd& inj_rates_si,
                        const Eigen::VectorXd& prod_bhps_pa, double dt_s);
    void solve_temperature(SimState& state, const Eigen::VectorXd& pressure_new,
                           const Eigen::VectorXd& inj_rates_si, double dt_s);

    ReservoirSpec spec_;
    std::vector<WellSpec> wells_;
    std::vector<int> injector_cells_;
    std::vector<int> producer_cells_;
    std::vector<double> injector_wi_; // Peaceman index, m3
    std::vector<double> producer_wi_;
    // TPFA transmissibilities divided by viscosity, m3/(Pa s)
    std::vector<double> trans_x_; // (nx-1) * ny
    std::vector<double> trans_y_; // nx * (ny-1)
    std::vector<double> cond_x_;  // conduction, W/K
    std::vector<double> cond_y_;
    Eigen::VectorXd cell_storage_; // V phi c, m3/Pa
    Eigen::VectorXd cell_heat_;    // V (phi rho_f c_f + (1-phi) c_rock), J/K
    double rho_cf_ = 0.0;          // rho_f * c_f, J/(m3 K)

    Eigen::SparseMatrix<double> pressure_matrix_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> pressure_solver_;
    double pressure_dt_s_ = -1.0;
    Eigen::SparseMatrix<double> temp_pattern_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> temp_solver_;
    bool temp_analyzed_ = false;
};

// One-shot run over a full schedule.
ProductionSeries simulate(const ReservoirSpec& spec, const std::vector<WellSpec>& wells,
                          const PermField& field, const ControlSchedule& schedule,
                          const SimOptions& options = {}, SimDiagnostics* diag = nullptr);

} // namespace geoloop
