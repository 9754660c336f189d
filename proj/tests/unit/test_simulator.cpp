#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "geoloop/dataset.hpp"
#include "geoloop/kle.hpp"
#include "geoloop/simulator.hpp"

#include "test_util.hpp"

using namespace geoloop;

namespace {

ReservoirSpec desk_spec(int n, double d) {
    ReservoirSpec s;
    s.grid.nx = n;
    s.grid.ny = n;
    s.grid.dx = d;
    s.grid.dy = d;
    s.grid.thickness = 30.0;
    return s;
}

PermField uniform_field(const GridSpec& g, double lnk = 3.6) {
    PermField f;
    f.grid = g;
    f.lnk.assign(static_cast<std::size_t>(g.n_cells()), lnk);
    return f;
}

PermField random_field(const GridSpec& g, std::uint64_t seed) {
    const auto basis = build_kle_basis(g, 3.6, 1.0, 4.0 * g.dx, 4.0 * g.dy, 0.9);
    Rng rng(seed);
    return sample_field(basis, draw_coeffs(basis, rng));
}

} // namespace

TEST_CASE("no-flow equilibrium holds pressure and temperature") {
    const ReservoirSpec spec = desk_spec(8, 20.0);
    std::vector<WellSpec> wells{{"I1", WellSpec::Kind::injector, 2, 2, 0.1, 0.0},
                                {"P1", WellSpec::Kind::producer, 5, 5, 0.1, 0.0}};
    const ControlSchedule sched = constant_schedule(1, 1, 5, 150.0, 0.0, spec.init_pressure);

    SimDiagnostics diag;
    const ProductionSeries series =
        simulate(spec, wells, uniform_field(spec.grid), sched, {.collect_diagnostics = true}, &diag);

    for (int t = 0; t < 5; ++t) {
        CHECK(std::abs(series.producer_rates(0, t)) < 1e-8); // m3/day, solver roundoff
        CHECK(series.producer_temps(0, t) == doctest::Approx(200.0).epsilon(1e-12));
        CHECK(series.injector_bhps(0, t) == doctest::Approx(380.0).epsilon(1e-12));
    }
    CHECK(diag.cumulative_mass_residual() < 1e-12);
    for (const auto& sub : diag.substeps) {
        CHECK(sub.temp_min == doctest::Approx(200.0).epsilon(1e-12));
        CHECK(sub.temp_max == doctest::Approx(200.0).epsilon(1e-12));
    }
}

TEST_CASE("incompressible pair forces producer rate equal to injector rate") {
    ReservoirSpec spec = desk_spec(2, 20.0);
    spec.fluid_compressibility = 1e-18;
    std::vector<WellSpec> wells{{"I1", WellSpec::Kind::injector, 0, 0, 0.1, 0.0},
                                {"P1", WellSpec::Kind::producer, 1, 1, 0.1, 0.0}};
    const ControlSchedule sched = constant_schedule(1, 1, 3, 150.0, 500.0, 300.0);

    const ProductionSeries series = simulate(spec, wells, uniform_field(spec.grid), sched);
    for (int t = 0; t < 3; ++t)
        CHECK(std::abs(series.producer_rates(0, t) - 500.0) / 500.0 < 1e-10);
}

TEST_CASE("rate-BHP consistency is visible in the diagnostics") {
    const ReservoirSpec spec = desk_spec(8, 76.25);
    std::vector<WellSpec> wells{{"I1", WellSpec::Kind::injector, 1, 1, 0.1, 0.0},
                                {"P1", WellSpec::Kind::producer, 6, 6, 0.1, 0.0}};
    const ControlSchedule sched = constant_schedule(1, 1, 3, 150.0, 1200.0, 240.0);

    SimDiagnostics diag;
    simulate(spec, wells, random_field(spec.grid, 5), sched, {.collect_diagnostics = true}, &diag);

    // rate / (p_cell - BHP) must be one constant, the well index over viscosity
    double ratio0 = 0.0;
    for (const auto& sub : diag.substeps) {
        const double dp = sub.producer_cell_pressure[0] - sub.producer_bhp[0];
        REQUIRE(dp > 0.0);
        const double ratio = sub.producer_rate[0] / dp;
        if (ratio0 == 0.0) ratio0 = ratio;
        CHECK(ratio == doctest::Approx(ratio0).epsilon(1e-9));
    }
}

TEST_CASE("conservation, temperature bounds, and cooling monotonicity on a desk run") {
    const ReservoirSpec spec = desk_spec(16, 76.25);
    std::vector<WellSpec> wells{{"I1", WellSpec::Kind::injector, 3, 3, 0.1, 0.0},
                                {"I2", WellSpec::Kind::injector, 12, 12, 0.1, 0.0},
                                {"P1", WellSpec::Kind::producer, 8, 8, 0.1, 0.0},
                                {"P2", WellSpec::Kind::producer, 3, 12, 0.1, 0.0},
                                {"P3", WellSpec::Kind::producer, 12, 3, 0.1, 0.0}};
    Rng rng(9);
    const ControlSchedule sched = random_schedule(2, 3, 10, 150.0, {}, rng);
    const PermField field = random_field(spec.grid, 17);

    SimDiagnostics diag;
    const ProductionSeries series =
        simulate(spec, wells, field, sched, {.collect_diagnostics = true}, &diag);

    CHECK(diag.cumulative_mass_residual() < 1e-8);
    for (const auto& sub : diag.substeps) {
        CHECK(sub.temp_min >= 20.0 - 1e-9);
        CHECK(sub.temp_max <= 200.0 + 1e-9);
    }

    // once a producer starts cooling it never exceeds its prior maximum
    for (int w = 0; w < 3; ++w) {
        double peak = -1e300;
        bool declining = false;
        for (int t = 0; t < series.n_steps(); ++t) {
            const double temp = series.producer_temps(w, t);
            if (declining) CHECK(temp <= peak + 1e-9);
            if (temp < peak - 1e-9) declining = true;
            peak = std::max(peak, temp);
        }
    }

    SUBCASE("halving substeps does not degrade conservation by more than 2x") {
        SimDiagnostics fine;
        simulate(spec, wells, field, sched,
                 {.substeps_per_control_step = 20, .collect_diagnostics = true}, &fine);
        CHECK(fine.cumulative_mass_residual() <=
              2.0 * std::max(diag.cumulative_mass_residual(), 1e-14));
    }
}

TEST_CASE("self-convergence golden fixture") {
    const ReservoirSpec spec = desk_spec(16, 76.25);
    std::vector<WellSpec> wells{{"I1", WellSpec::Kind::injector, 3, 3, 0.1, 0.0},
                                {"P1", WellSpec::Kind::producer, 11, 11, 0.1, 0.0}};
    const ControlSchedule sched = constant_schedule(1, 1, 5, 150.0, 1200.0, 240.0);
    const PermField field = random_field(spec.grid, 23);

    // refinement study: halving the substep twice changes step-end outputs
    // by less than 0.5%
    const ProductionSeries s10 = simulate(spec, wells, field, sched, {10});
    const ProductionSeries s20 = simulate(spec, wells, field, sched, {20});
    const ProductionSeries s40 = simulate(spec, wells, field, sched, {40});
    auto max_rel = [](const ProductionSeries& a, const ProductionSeries& b) {
        double m = 0.0;
        for (int t = 0; t < a.n_steps(); ++t) {
            m = std::max(m, std::abs(a.producer_rates(0, t) - b.producer_rates(0, t)) /
                                std::abs(b.producer_rates(0, t)));
            m = std::max(m, std::abs(a.producer_temps(0, t) - b.producer_temps(0, t)) /
                                std::abs(b.producer_temps(0, t)));
            m = std::max(m, std::abs(a.injector_bhps(0, t) - b.injector_bhps(0, t)) /
                                std::abs(b.injector_bhps(0, t)));
        }
        return m;
    };
    CHECK(max_rel(s10, s20) < 0.005);
    CHECK(max_rel(s20, s40) < 0.005);

    // frozen regression fixture at substeps = 10
    const std::filesystem::path golden =
        std::filesystem::path(GEOLOOP_TEST_DATA_DIR) / "sim_golden_series.csv";
    REQUIRE(std::filesystem::exists(golden));
    const ProductionSeries ref = load_series_csv(golden);
    REQUIRE(ref.n_steps() == s10.n_steps());
    for (int t = 0; t < s10.n_steps(); ++t) {
        CHECK(s10.producer_rates(0, t) == doctest::Approx(ref.producer_rates(0, t)).epsilon(1e-9));
        CHECK(s10.producer_temps(0, t) == doctest::Approx(ref.producer_temps(0, t)).epsilon(1e-9));
        CHECK(s10.injector_bhps(0, t) == doctest::Approx(ref.injector_bhps(0, t)).epsilon(1e-9));
    }
}

TEST_CASE("contract violations") {
    const ReservoirSpec spec = desk_spec(8, 20.0);
    std::vector<WellSpec> wells{{"I1", WellSpec::Kind::injector, 2, 2, 0.1, 0.0},
                                {"P1", WellSpec::Kind::producer, 5, 5, 0.1, 0.0}};

    SUBCASE("schedule shape") {
        ControlSchedule s = constant_schedule(2, 1, 3, 150.0, 1200.0, 240.0);
        CHECK_THROWS_AS(simulate(spec, wells, uniform_field(spec.grid), s), ContractError);
    }
    SUBCASE("field grid") {
        CHECK_THROWS_AS(simulate(spec, wells, uniform_field(desk_spec(9, 20.0).grid),
                                 constant_schedule(1, 1, 3, 150.0, 1200.0, 240.0)),
                        ContractError);
    }
    SUBCASE("well placement") {
        std::vector<WellSpec> bad{{"I1", WellSpec::Kind::injector, 99, 2, 0.1, 0.0}};
        CHECK_THROWS_AS(validate_wells(bad, spec.grid), ContractError);
        std::vector<WellSpec> clash{{"I1", WellSpec::Kind::injector, 2, 2, 0.1, 0.0},
                                    {"P1", WellSpec::Kind::producer, 2, 2, 0.1, 0.0}};
        CHECK_THROWS_AS(validate_wells(clash, spec.grid), ContractError);
    }
    SUBCASE("bounds validation is explicit") {
        ControlSchedule s = constant_schedule(1, 1, 3, 150.0, 900.0, 240.0);
        CHECK_THROWS_AS(s.validate_bounds({}), ContractError);
    }
}

TEST_CASE("determinism, bit identical outputs") {
    const ReservoirSpec spec = desk_spec(8, 76.25);
    std::vector<WellSpec> wells{{"I1", WellSpec::Kind::injector, 1, 1, 0.1, 0.0},
                                {"P1", WellSpec::Kind::producer, 6, 6, 0.1, 0.0}};
    Rng rng(4);
    const ControlSchedule sched = random_schedule(1, 1, 4, 150.0, {}, rng);
    const PermField field = random_field(spec.grid, 31);

    const ProductionSeries a = simulate(spec, wells, field, sched);
    const ProductionSeries b = simulate(spec, wells, field, sched);
    CHECK(exact_eq(a.producer_rates, b.producer_rates));
    CHECK(exact_eq(a.producer_temps, b.producer_temps));
    CHECK(exact_eq(a.injector_bhps, b.injector_bhps));
}

TEST_CASE("dataset generation") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "geoloop_test_dataset";
    fs::remove_all(dir);

    const ReservoirSpec spec = desk_spec(8, 76.25);
    std::vector<WellSpec> wells{{"I1", WellSpec::Kind::injector, 1, 1, 0.1, 0.0},
                                {"P1", WellSpec::Kind::producer, 6, 6, 0.1, 0.0}};
    Rng rng(12);

    SUBCASE("single zipped pair equals a direct simulate call") {
        const PermField field = random_field(spec.grid, 1);
        const ControlSchedule sched = random_schedule(1, 1, 3, 150.0, {}, rng);
        const SimDataset ds = generate_dataset(spec, wells, {field}, {sched}, dir, {});
        REQUIRE(ds.samples.size() == 1);
        const ProductionSeries direct = simulate(spec, wells, field, sched);
        CHECK(exact_eq(ds.samples[0].series.producer_rates, direct.producer_rates));
        CHECK(exact_eq(ds.samples[0].series.producer_temps, direct.producer_temps));

        const SimDataset loaded = load_dataset(dir);
        REQUIRE(loaded.samples.size() == 1);
        CHECK(loaded.samples[0].field.lnk == field.lnk);
        CHECK(exact_eq(loaded.samples[0].schedule.injector_rates, sched.injector_rates));
        // CSV round trip preserves doubles bit-exactly
        CHECK(exact_eq(loaded.samples[0].series.producer_rates, direct.producer_rates));
    }

    SUBCASE("failed members are recorded as skipped, not dropped") {
        PermField good = random_field(spec.grid, 2);
        PermField bad = good;
        bad.lnk[3] = std::numeric_limits<double>::quiet_NaN();
        const ControlSchedule sched = random_schedule(1, 1, 3, 150.0, {}, rng);
        const SimDataset ds = generate_dataset(spec, wells, {good, bad}, {sched, sched}, dir, {});
        CHECK(ds.samples.size() == 1);
        CHECK(ds.manifest.at("n_requested").get<int>() == 2);
        int skipped = 0;
        for (const auto& e : ds.manifest.at("samples"))
            if (e.at("status") == "skipped") {
                ++skipped;
                CHECK(!e.at("reason").get<std::string>().empty());
            }
        CHECK(skipped == 1);
    }

    SUBCASE("replay oracle, dataset outputs match fresh simulate calls") {
        std::vector<PermField> fields{random_field(spec.grid, 3)};
        std::vector<ControlSchedule> schedules;
        for (int i = 0; i < 5; ++i) schedules.push_back(random_schedule(1, 1, 3, 150.0, {}, rng));
        GenerateOptions opts;
        opts.pairing = PairingRule::cartesian;
        opts.threads = 2;
        const SimDataset ds = generate_dataset(spec, wells, fields, schedules, dir, opts);
        REQUIRE(ds.samples.size() == 5);
        for (std::size_t i = 0; i < 5; ++i) {
            const ProductionSeries direct =
                simulate(spec, wells, fields[0], schedules[i]);
            CHECK(exact_eq(ds.samples[i].series.producer_rates, direct.producer_rates));
        }
    }
    fs::remove_all(dir);
}
