#include "geoloop/simulator.hpp"

#include <cmath>
#include <set>

namespace geoloop {

namespace {
constexpr double kBar = 1.0e5;          // Pa
constexpr double kDay = 86400.0;        // s
constexpr double kMilliDarcy = 9.869233e-16; // m2
} // namespace

void ReservoirSpec::validate() const {
    grid.validate();
    if (!(porosity > 0.0 && porosity < 1.0))
        throw ContractError("ReservoirSpec: porosity must be in (0, 1)");
    const double positives[] = {rock_heat_capacity, fluid_density,   fluid_heat_capacity,
                                fluid_viscosity,    fluid_compressibility, therm_cond_water,
                                therm_cond_rock,    init_pressure};
    for (double v : positives)
        if (!(v > 0.0)) throw ContractError("ReservoirSpec: physical constants must be > 0");
}

void to_json(json& j, const ReservoirSpec& s) {
    j = json{{"grid", s.grid},
             {"porosity", s.porosity},
             {"rock_heat_capacity", s.rock_heat_capacity},
             {"fluid_density", s.fluid_density},
             {"fluid_heat_capacity", s.fluid_heat_capacity},
             {"fluid_viscosity", s.fluid_viscosity},
             {"fluid_compressibility", s.fluid_compressibility},
             {"therm_cond_water", s.therm_cond_water},
             {"therm_cond_rock", s.therm_cond_rock},
             {"init_pressure", s.init_pressure},
             {"init_temperature", s.init_temperature},
             {"injection_temperature", s.injection_temperature}};
}

void from_json(const json& j, ReservoirSpec& s) {
    s.grid = j.at("grid").get<GridSpec>();
    s.porosity = j.at("porosity").get<double>();
    s.rock_heat_capacity = j.at("rock_heat_capacity").get<double>();
    s.fluid_density = j.at("fluid_density").get<double>();
    s.fluid_heat_capacity = j.at("fluid_heat_capacity").get<double>();
    s.fluid_viscosity = j.at("fluid_viscosity").get<double>();
    s.fluid_compressibility = j.at("fluid_compressibility").get<double>();
    s.therm_cond_water = j.at("therm_cond_water").get<double>();
    s.therm_cond_rock = j.at("therm_cond_rock").get<double>();
    s.init_pressure = j.at("init_pressure").get<double>();
    s.init_temperature = j.at("init_temperature").get<double>();
    s.injection_temperature = j.at("injection_temperature").get<double>();
}

void to_json(json& j, const WellSpec& w) {
    j = json{{"name", w.name},
             {"kind", w.kind == WellSpec::Kind::injector ? "injector" : "producer"},
             {"i", w.i},
             {"j", w.j},
             {"radius", w.radius},
             {"skin", w.skin}};
}

void from_json(const json& j, WellSpec& w) {
    w.name = j.at("name").get<std::string>();
    const std::string k = j.at("kind").get<std::string>();
    if (k == "injector")
        w.kind = WellSpec::Kind::injector;
    else if (k == "producer")
        w.kind = WellSpec::Kind::producer;
    else
        throw ContractError("WellSpec: kind must be injector or producer, got " + k);
    w.i = j.at("i").get<int>();
    w.j = j.at("j").get<int>();
    w.radius = j.value("radius", 0.1);
    w.skin = j.value("skin", 0.0);
}

void validate_wells(const std::vector<WellSpec>& wells, const GridSpec& grid) {
    std::set<int> occupied;
    for (const auto& w : wells) {
        if (w.i < 0 || w.i >= grid.nx || w.j < 0 || w.j >= grid.ny)
            throw ContractError("well " + w.name + " outside grid");
        if (w.radius <= 0.0) throw ContractError("well " + w.name + " radius must be > 0");
        if (!occupied.insert(grid.cell_index(w.i, w.j)).second)
            throw ContractError("well " + w.name + " shares a cell with another well");
    }
}

int count_injectors(const std::vector<WellSpec>& wells) {
    int n = 0;
    for (const auto& w : wells) n += w.kind == WellSpec::Kind::injector;
    return n;
}

int count_producers(const std::vector<WellSpec>& wells) {
    int n = 0;
    for (const auto& w : wells) n += w.kind == WellSpec::Kind::producer;
    return n;
}

void to_json(json& j, const ScheduleBounds& b) {
    j = json{{"rate_lo", b.rate_lo}, {"rate_hi", b.rate_hi},
             {"bhp_lo", b.bhp_lo},   {"bhp_hi", b.bhp_hi}};
}

void from_json(const json& j, ScheduleBounds& b) {
    b.rate_lo = j.at("rate_lo").get<double>();
    b.rate_hi = j.at("rate_hi").get<double>();
    b.bhp_lo = j.at("bhp_lo").get<double>();
    b.bhp_hi = j.at("bhp_hi").get<double>();
}

void ControlSchedule::validate_shape(int n_inj, int n_prod) const {
    if (n_steps <= 0 || step_days <= 0.0)
        throw ContractError("ControlSchedule: n_steps and step_days must be > 0");
    if (injector_rates.rows() != n_inj || injector_rates.cols() != n_steps)
        throw ContractError("ControlSchedule: injector_rates must be n_inj x n_steps");
    if (producer_bhps.rows() != n_prod || producer_bhps.cols() != n_steps)
        throw ContractError("ControlSchedule: producer_bhps must be n_prod x n_steps");
}

void ControlSchedule::validate_bounds(const ScheduleBounds& bounds) const {
    if ((injector_rates.array() < bounds.rate_lo).any() ||
        (injector_rates.array() > bounds.rate_hi).any())
        throw ContractError("ControlSchedule: injector rate outside bounds");
    if ((producer_bhps.array() < bounds.bhp_lo).any() ||
        (producer_bhps.array() > bounds.bhp_hi).any())
        throw ContractError("ControlSchedule: producer BHP outside bounds");
}

namespace {
json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = j.size();
    Eigen::MatrixXd m(rows, rows ? j.at(0).size() : 0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < j.at(r).size(); ++c) m(r, c) = j.at(r).at(c).get<double>();
    return m;
}
} // namespace

void to_json(json& j, const ControlSchedule& s) {
    j = json{{"n_steps", s.n_steps},
             {"step_days", s.step_days},
             {"injector_rates", matrix_to_json(s.injector_rates)},
             {"producer_bhps", matrix_to_json(s.producer_bhps)}};
}

void from_json(const json& j, ControlSchedule& s) {
    s.n_steps = j.at("n_steps").get<int>();
    s.step_days = j.at("step_days").get<double>();
    s.injector_rates = matrix_from_json(j.at("injector_rates"));
    s.producer_bhps = matrix_from_json(j.at("producer_bhps"));
}

ControlSchedule constant_schedule(int n_inj, int n_prod, int n_steps, double step_days,
                                  double rate, double bhp) {
    ControlSchedule s;
    s.n_steps = n_steps;
    s.step_days = step_days;
    s.injector_rates = Eigen::MatrixXd::Constant(n_inj, n_steps, rate);
    s.producer_bhps = Eigen::MatrixXd::Constant(n_prod, n_steps, bhp);
    return s;
}

ControlSchedule random_schedule(int n_inj, int n_prod, int n_steps, double step_days,
                                const ScheduleBounds& bounds, Rng& rng) {
    ControlSchedule s;
    s.n_steps = n_steps;
    s.step_days = step_days;
    s.injector_rates.resize(n_inj, n_steps);
    s.producer_bhps.resize(n_prod, n_steps);
    for (int t = 0; t < n_steps; ++t) {
        for (int w = 0; w < n_inj; ++w)
            s.injector_rates(w, t) = rng.uniform(bounds.rate_lo, bounds.rate_hi);
        for (int w = 0; w < n_prod; ++w)
            s.producer_bhps(w, t) = rng.uniform(bounds.bhp_lo, bounds.bhp_hi);
    }
    return s;
}

void save_series_csv(const std::filesystem::path& path, const ProductionSeries& series) {
    const int n_prod = static_cast<int>(series.producer_rates.rows());
    const int n_inj = static_cast<int>(series.injector_rates.rows());
    std::vector<std::string> header{"time_days"};
    for (int w = 0; w < n_prod; ++w) header.push_back("prod_rate_" + std::to_string(w));
    for (int w = 0; w < n_prod; ++w) header.push_back("prod_temp_" + std::to_string(w));
    for (int w = 0; w < n_prod; ++w) header.push_back("prod_bhp_" + std::to_string(w));
    for (int w = 0; w < n_inj; ++w) header.push_back("inj_bhp_" + std::to_string(w));
    for (int w = 0; w < n_inj; ++w) header.push_back("inj_rate_" + std::to_string(w));

    std::vector<std::vector<double>> rows;
    for (int t = 0; t < series.n_steps(); ++t) {
        std::vector<double> row{series.times[static_cast<std::size_t>(t)]};
        for (int w = 0; w < n_prod; ++w) row.push_back(series.producer_rates(w, t));
        for (int w = 0; w < n_prod; ++w) row.push_back(series.producer_temps(w, t));
        for (int w = 0; w < n_prod; ++w) row.push_back(series.producer_bhps(w, t));
        for (int w = 0; w < n_inj; ++w) row.push_back(series.injector_bhps(w, t));
        for (int w = 0; w < n_inj; ++w) row.push_back(series.injector_rates(w, t));
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

ProductionSeries load_series_csv(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    int n_prod = 0, n_inj = 0;
    for (const auto& h : table.header) {
        if (h.rfind("prod_rate_", 0) == 0) ++n_prod;
        if (h.rfind("inj_rate_", 0) == 0) ++n_inj;
    }
    const int n_steps = static_cast<int>(table.rows.size());
    if (static_cast<int>(table.header.size()) != 1 + 3 * n_prod + 2 * n_inj)
        throw ContractError("series CSV has unexpected column count: " + path.string());
    ProductionSeries s;
    s.producer_rates.resize(n_prod, n_steps);
    s.producer_temps.resize(n_prod, n_steps);
    s.producer_bhps.resize(n_prod, n_steps);
    s.injector_bhps.resize(n_inj, n_steps);
    s.injector_rates.resize(n_inj, n_steps);
    for (int t = 0; t < n_steps; ++t) {
        const auto& row = table.rows[static_cast<std::size_t>(t)];
        std::size_t k = 0;
        s.times.push_back(row[k++]);
        for (int w = 0; w < n_prod; ++w) s.producer_rates(w, t) = row[k++];
        for (int w = 0; w < n_prod; ++w) s.producer_temps(w, t) = row[k++];
        for (int w = 0; w < n_prod; ++w) s.producer_bhps(w, t) = row[k++];
        for (int w = 0; w < n_inj; ++w) s.injector_bhps(w, t) = row[k++];
        for (int w = 0; w < n_inj; ++w) s.injector_rates(w, t) = row[k++];
    }
    return s;
}

namespace {
// relative-residual denominator; floored at one cubic meter so the no-flow
// case reads as zero instead of 0/0
double residual_scale(double injected, double produced) {
    return std::max({std::abs(injected), std::abs(produced), 1.0});
}
} // namespace

double SimDiagnostics::cumulative_mass_residual() const {
    double storage = 0.0, injected = 0.0, produced = 0.0;
    for (const auto& s : substeps) {
        storage += s.storage_delta;
        injected += s.injected;
        produced += s.produced;
    }
    return std::abs(storage - (injected - produced)) / residual_scale(injected, produced);
}

std::vector<double> SimDiagnostics::per_step_mass_residual() const {
    std::vector<double> out;
    for (const auto& s : substeps)
        out.push_back(std::abs(s.storage_delta - (s.injected - s.produced)) /
                      residual_scale(s.injected, s.produced));
    return out;
}

Simulator::Simulator(const ReservoirSpec& spec, std::vector<WellSpec> wells,
                     const PermField& field)
    : spec_(spec), wells_(std::move(wells)) {
    spec_.validate();
    validate_wells(wells_, spec_.grid);
    field.validate();
    if (field.grid != spec_.grid)
        throw ContractError("Simulator: field grid != reservoir grid");

    const auto& g = spec_.grid;
    const int nx = g.nx, ny = g.ny;
    const double h = g.thickness;
    const double mu = spec_.fluid_viscosity;

    std::vector<double> perm(static_cast<std::size_t>(g.n_cells()));
    for (int c = 0; c < g.n_cells(); ++c)
        perm[static_cast<std::size_t>(c)] = std::exp(field.lnk[static_cast<std::size_t>(c)]) * kMilliDarcy;

    const double lambda_eff =
        spec_.porosity * spec_.therm_cond_water + (1.0 - spec_.porosity) * spec_.therm_cond_rock;

    trans_x_.assign(static_cast<std::size_t>((nx - 1) * ny), 0.0);
    cond_x_.assign(trans_x_.size(), 0.0);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i) {
            const double ka = perm[static_cast<std::size_t>(g.cell_index(i, j))];
            const double kb = perm[static_cast<std::size_t>(g.cell_index(i + 1, j))];
            const double kh = 2.0 * ka * kb / (ka + kb);
            const double area = g.dy * h;
            trans_x_[static_cast<std::size_t>(j * (nx - 1) + i)] = area * kh / g.dx / mu;
            cond_x_[static_cast<std::size_t>(j * (nx - 1) + i)] = lambda_eff * area / g.dx;
        }
    trans_y_.assign(static_cast<std::size_t>(nx * (ny - 1)), 0.0);
    cond_y_.assign(trans_y_.size(), 0.0);
    for (int j = 0; j + 1 < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double ka = perm[static_cast<std::size_t>(g.cell_index(i, j))];
            const double kb = perm[static_cast<std::size_t>(g.cell_index(i, j + 1))];
            const double kh = 2.0 * ka * kb / (ka + kb);
            const double area = g.dx * h;
            trans_y_[static_cast<std::size_t>(j * nx + i)] = area * kh / g.dy / mu;
            cond_y_[static_cast<std::size_t>(j * nx + i)] = lambda_eff * area / g.dy;
        }

    const double cell_volume = g.dx * g.dy * h;
    cell_storage_ = Eigen::VectorXd::Constant(
        g.n_cells(), cell_volume * spec_.porosity * spec_.fluid_compressibility);
    rho_cf_ = spec_.fluid_density * spec_.fluid_heat_capacity;
    cell_heat_ = Eigen::VectorXd::Constant(
        g.n_cells(), cell_volume * (spec_.porosity * rho_cf_ +
                                    (1.0 - spec_.porosity) * spec_.rock_heat_capacity));

    const double r_eq = 0.14 * std::sqrt(g.dx * g.dx + g.dy * g.dy);
    for (const auto& w : wells_) {
        const int cell = g.cell_index(w.i, w.j);
        const double k = perm[static_cast<std::size_t>(cell)];
        const double wi = 2.0 * M_PI * k * h / (std::log(r_eq / w.radius) + w.skin);
        if (w.kind == WellSpec::Kind::injector) {
            injector_cells_.push_back(cell);
            injector_wi_.push_back(wi);
        } else {
            producer_cells_.push_back(cell);
            producer_wi_.push_back(wi);
        }
    }
}

SimState Simulator::initial_state() const {
    SimState s;
    s.pressure = Eigen::VectorXd::Constant(spec_.grid.n_cells(), spec_.init_pressure * kBar);
    s.temperature = Eigen::VectorXd::Constant(spec_.grid.n_cells(), spec_.init_temperature);
    s.time_days = 0.0;
    return s;
}

void Simulator::solve_pressure(SimState& state, const Eigen::VectorXd& inj_rates_si,
                               const Eigen::VectorXd& prod_bhps_pa, double dt_s) {
    const auto& g = spec_.grid;
    const int n = g.n_cells();
    const double mu = spec_.fluid_viscosity;

    if (dt_s != pressure_dt_s_) {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(5 * n));
        Eigen::VectorXd diag = cell_storage_ / dt_s;
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i + 1 < g.nx; ++i) {
                const double t = trans_x_[static_cast<std::size_t>(j * (g.nx - 1) + i)];
                const int a = g.cell_index(i, j), b = g.cell_index(i + 1, j);
                diag(a) += t;
                diag(b) += t;
                trip.emplace_back(a, b, -t);
                trip.emplace_back(b, a, -t);
            }
        for (int j = 0; j + 1 < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const double t = trans_y_[static_cast<std::size_t>(j * g.nx + i)];
                const int a = g.cell_index(i, j), b = g.cell_index(i, j + 1);
                diag(a) += t;
                diag(b) += t;
                trip.emplace_back(a, b, -t);
                trip.emplace_back(b, a, -t);
            }
        for (std::size_t w = 0; w < producer_cells_.size(); ++w)
            diag(producer_cells_[w]) += producer_wi_[w] / mu;
        for (int c = 0; c < n; ++c) trip.emplace_back(c, c, diag(c));

        pressure_matrix_.resize(n, n);
        pressure_matrix_.setFromTriplets(trip.begin(), trip.end());
        pressure_solver_.compute(pressure_matrix_);
        if (pressure_solver_.info() != Eigen::Success)
            throw std::runtime_error("pressure solve: factorization failed");
        pressure_dt_s_ = dt_s;
    }

    Eigen::VectorXd rhs = cell_storage_.cwiseProduct(state.pressure) / dt_s;
    for (std::size_t w = 0; w < injector_cells_.size(); ++w)
        rhs(injector_cells_[w]) += inj_rates_si(static_cast<Eigen::Index>(w));
    for (std::size_t w = 0; w < producer_cells_.size(); ++w)
        rhs(producer_cells_[w]) += producer_wi_[w] / mu * prod_bhps_pa(static_cast<Eigen::Index>(w));

    Eigen::VectorXd p_new = pressure_solver_.solve(rhs);
    if (pressure_solver_.info() != Eigen::Success)
        throw std::runtime_error("pressure solve: back substitution failed");
    state.pressure = std::move(p_new);
}

void Simulator::solve_temperature(SimState& state, const Eigen::VectorXd& pressure_new,
                                  const Eigen::VectorXd& inj_rates_si, double dt_s) {
    const auto& g = spec_.grid;
    const int n = g.n_cells();

    // Upwind advection plus conduction, implicit. Conduction puts every
    // face in the pattern, so the sparsity stays fixed across substeps.
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(5 * n));
    Eigen::VectorXd diag = cell_heat_ / dt_s;
    Eigen::VectorXd rhs = cell_heat_.cwiseProduct(state.temperature) / dt_s;

    auto add_face = [&](int a, int b, double trans, double cond) {
        const double q = trans * (pressure_new(a) - pressure_new(b)); // a -> b when > 0
        const double adv = rho_cf_ * std::abs(q);
        if (q > 0.0) {
            // b receives fluid at T_a
            diag(b) += adv;
            trip.emplace_back(b, a, -adv - cond);
            trip.emplace_back(a, b, -cond);
        } else {
            diag(a) += adv;
            trip.emplace_back(a, b, -adv - cond);
            trip.emplace_back(b, a, -cond);
        }
        diag(a) += cond;
        diag(b) += cond;
    };

    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i)
            add_face(g.cell_index(i, j), g.cell_index(i + 1, j),
                     trans_x_[static_cast<std::size_t>(j * (g.nx - 1) + i)],
                     cond_x_[static_cast<std::size_t>(j * (g.nx - 1) + i)]);
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            add_face(g.cell_index(i, j), g.cell_index(i, j + 1),
                     trans_y_[static_cast<std::size_t>(j * g.nx + i)],
                     cond_y_[static_cast<std::size_t>(j * g.nx + i)]);

    for (std::size_t w = 0; w < injector_cells_.size(); ++w) {
        const double adv = rho_cf_ * inj_rates_si(static_cast<Eigen::Index>(w));
        diag(injector_cells_[w]) += adv;
        rhs(injector_cells_[w]) += adv * spec_.injection_temperature;
    }
    // Producers withdraw fluid at the cell temperature; in this formulation
    // the production term cancels and does not enter the system.

    for (int c = 0; c < n; ++c) trip.emplace_back(c, c, diag(c));
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());

    if (!temp_analyzed_) {
        temp_solver_.analyzePattern(A);
        temp_analyzed_ = true;
    }
    temp_solver_.factorize(A);
    if (temp_solver_.info() != Eigen::Success)
        throw std::runtime_error("temperature solve: factorization failed");
    Eigen::VectorXd t_new = temp_solver_.solve(rhs);
    if (temp_solver_.info() != Eigen::Success)
        throw std::runtime_error("temperature solve: back substitution failed");
    state.temperature = std::move(t_new);
}

StepOutputs Simulator::advance(SimState& state, const Eigen::VectorXd& injector_rates,
                               const Eigen::VectorXd& producer_bhps, double step_days,
                               int substeps, SimDiagnostics* diag) {
    if (injector_rates.size() != n_injectors() || producer_bhps.size() != n_producers())
        throw ContractError("advance: control vector sizes do not match well counts");
    if (substeps < 1) throw ContractError("advance: substeps must be >= 1");
    const double mu = spec_.fluid_viscosity;

    const Eigen::VectorXd inj_si = injector_rates / kDay;
    const Eigen::VectorXd bhp_pa = producer_bhps * kBar;
    const double dt_s = step_days * kDay / substeps;

    for (int s = 0; s < substeps; ++s) {
        const Eigen::VectorXd p_old = state.pressure;
        solve_pressure(state, inj_si, bhp_pa, dt_s);
        solve_temperature(state, state.pressure, inj_si, dt_s);

        if (diag) {
            SimDiagnostics::Substep rec;
            rec.dt_days = dt_s / kDay;
            rec.storage_delta = cell_storage_.dot(state.pressure - p_old);
            rec.injected = inj_si.sum() * dt_s;
            double produced = 0.0;
            for (std::size_t w = 0; w < producer_cells_.size(); ++w) {
                const double q =
                    producer_wi_[w] / mu *
                    (state.pressure(producer_cells_[w]) - bhp_pa(static_cast<Eigen::Index>(w)));
                produced += q * dt_s;
                rec.producer_cell_pressure.push_back(state.pressure(producer_cells_[w]) / kBar);
                rec.producer_rate.push_back(q * kDay);
                rec.producer_bhp.push_back(producer_bhps(static_cast<Eigen::Index>(w)));
            }
            rec.produced = produced;
            rec.temp_min = state.temperature.minCoeff();
            rec.temp_max = state.temperature.maxCoeff();
            diag->substeps.push_back(std::move(rec));
        }
    }
    state.time_days += step_days;

    StepOutputs out;
    out.producer_rates.resize(n_producers());
    out.producer_temps.resize(n_producers());
    out.producer_bhps = producer_bhps;
    out.injector_rates = injector_rates;
    out.injector_bhps.resize(n_injectors());
    for (std::size_t w = 0; w < producer_cells_.size(); ++w) {
        const double q = producer_wi_[w] / mu *
                         (state.pressure(producer_cells_[w]) - bhp_pa(static_cast<Eigen::Index>(w)));
        out.producer_rates(static_cast<Eigen::Index>(w)) = q * kDay;
        out.producer_temps(static_cast<Eigen::Index>(w)) = state.temperature(producer_cells_[w]);
    }
    for (std::size_t w = 0; w < injector_cells_.size(); ++w)
        out.injector_bhps(static_cast<Eigen::Index>(w)) =
            (state.pressure(injector_cells_[w]) +
             inj_si(static_cast<Eigen::Index>(w)) * mu / injector_wi_[w]) /
            kBar;
    return out;
}

ProductionSeries simulate(const ReservoirSpec& spec, const std::vector<WellSpec>& wells,
                          const PermField& field, const ControlSchedule& schedule,
                          const SimOptions& options, SimDiagnostics* diag) {
    Simulator sim(spec, wells, field);
    schedule.validate_shape(sim.n_injectors(), sim.n_producers());

    SimState state = sim.initial_state();
    ProductionSeries series;
    series.producer_rates.resize(sim.n_producers(), schedule.n_steps);
    series.producer_temps.resize(sim.n_producers(), schedule.n_steps);
    series.producer_bhps.resize(sim.n_producers(), schedule.n_steps);
    series.injector_bhps.resize(sim.n_injectors(), schedule.n_steps);
    series.injector_rates.resize(sim.n_injectors(), schedule.n_steps);

    for (int t = 0; t < schedule.n_steps; ++t) {
        const StepOutputs out =
            sim.advance(state, schedule.injector_rates.col(t), schedule.producer_bhps.col(t),
                        schedule.step_days, options.substeps_per_control_step, diag);
        series.times.push_back(state.time_days);
        series.producer_rates.col(t) = out.producer_rates;
        series.producer_temps.col(t) = out.producer_temps;
        series.producer_bhps.col(t) = out.producer_bhps;
        series.injector_bhps.col(t) = out.injector_bhps;
        series.injector_rates.col(t) = out.injector_rates;
    }
    return series;
}

} // namespace geoloop
