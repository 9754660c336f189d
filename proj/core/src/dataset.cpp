#include "geoloop/dataset.hpp"

#include <cstdio>

#include "geoloop/threads.hpp"

namespace geoloop {

namespace fs = std::filesystem;

PairingRule pairing_from_string(const std::string& s) {
    if (s == "zipped") return PairingRule::zipped;
    if (s == "cartesian") return PairingRule::cartesian;
    throw ContractError("pairing rule must be zipped or cartesian, got " + s);
}

std::string to_string(PairingRule rule) {
    return rule == PairingRule::zipped ? "zipped" : "cartesian";
}

std::string SimDataset::content_hash() const {
    std::string acc;
    for (const auto& s : samples) {
        acc += hash_bytes(s.field.lnk.data(), s.field.lnk.size() * sizeof(double));
        acc += hash_bytes(s.schedule.injector_rates.data(),
                          static_cast<std::size_t>(s.schedule.injector_rates.size()) * sizeof(double));
        acc += hash_bytes(s.schedule.producer_bhps.data(),
                          static_cast<std::size_t>(s.schedule.producer_bhps.size()) * sizeof(double));
    }
    return hash_bytes(acc.data(), acc.size());
}

namespace {
std::string sample_dir_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%04zu", index);
    return buf;
}

void write_matrix_blob(const fs::path& path, const Eigen::MatrixXd& m) {
    std::vector<double> data(m.data(), m.data() + m.size());
    write_f64_blob(path, data, {m.rows(), m.cols()});
}

Eigen::MatrixXd read_matrix_blob(const fs::path& path) {
    F64Blob blob = read_f64_blob(path);
    if (blob.shape.size() != 2) throw ContractError("expected 2-D blob: " + path.string());
    return Eigen::Map<Eigen::MatrixXd>(blob.data.data(), blob.shape[0], blob.shape[1]);
}
} // namespace

SimDataset generate_dataset(const ReservoirSpec& spec, const std::vector<WellSpec>& wells,
                            const std::vector<PermField>& fields,
                            const std::vector<ControlSchedule>& schedules,
                            const fs::path& out_dir, const GenerateOptions& options) {
    if (fields.empty() || schedules.empty())
        throw ContractError("generate_dataset: fields and schedules must be nonempty");
    if (options.pairing == PairingRule::zipped && fields.size() != schedules.size() &&
        fields.size() != 1 && schedules.size() != 1)
        throw ContractError("generate_dataset: zipped pairing needs equal counts or a "
                            "singleton side");

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (options.pairing == PairingRule::cartesian) {
        for (std::size_t f = 0; f < fields.size(); ++f)
            for (std::size_t s = 0; s < schedules.size(); ++s) pairs.emplace_back(f, s);
    } else {
        const std::size_t n = std::max(fields.size(), schedules.size());
        for (std::size_t i = 0; i < n; ++i)
            pairs.emplace_back(i % fields.size(), i % schedules.size());
    }

    fs::create_directories(out_dir);

    struct Result {
        bool ok = false;
        std::string reason;
        ProductionSeries series;
    };
    std::vector<Result> results(pairs.size());
    parallel_for(pairs.size(), options.threads, [&](std::size_t idx) {
        const auto& [f, s] = pairs[idx];
        try {
            results[idx].series =
                simulate(spec, wells, fields[f], schedules[s], options.sim);
            results[idx].ok = true;
        } catch (const std::exception& e) {
            results[idx].reason = e.what();
        }
    });

    SimDataset ds;
    ds.spec = spec;
    ds.wells = wells;

    json sample_entries = json::array();
    for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
        const auto& [f, s] = pairs[idx];
        json entry{{"id", sample_dir_name(idx)},
                   {"field_index", f},
                   {"schedule_index", s}};
        if (!results[idx].ok) {
            entry["status"] = "skipped";
            entry["reason"] = results[idx].reason;
            sample_entries.push_back(std::move(entry));
            continue;
        }
        const fs::path dir = out_dir / sample_dir_name(idx);
        fs::create_directories(dir);
        save_field(dir / "field.f64", fields[f]);
        write_matrix_blob(dir / "inj_rates.f64", schedules[s].injector_rates);
        write_matrix_blob(dir / "prod_bhps.f64", schedules[s].producer_bhps);
        save_series_csv(dir / "series.csv", results[idx].series);
        entry["status"] = "ok";
        entry["field_hash"] =
            hash_bytes(fields[f].lnk.data(), fields[f].lnk.size() * sizeof(double));
        sample_entries.push_back(std::move(entry));

        DatasetSample sample;
        sample.field = fields[f];
        sample.schedule = schedules[s];
        sample.series = results[idx].series;
        ds.samples.push_back(std::move(sample));
    }

    json manifest{{"kind", "sim_dataset"},
                  {"spec", spec},
                  {"wells", wells},
                  {"pairing", to_string(options.pairing)},
                  {"seed", options.seed},
                  {"substeps_per_control_step", options.sim.substeps_per_control_step},
                  {"n_requested", pairs.size()},
                  {"n_ok", ds.samples.size()},
                  {"samples", std::move(sample_entries)},
                  {"created", manifest_timestamp()}};
    {
        const std::string spec_dump = json(spec).dump();
        manifest["spec_hash"] = hash_bytes(spec_dump.data(), spec_dump.size());
    }
    manifest["content_hash"] = ds.content_hash();
    write_json_file(out_dir / "manifest.json", manifest);
    ds.manifest = std::move(manifest);
    return ds;
}

SimDataset load_dataset(const fs::path& dir) {
    SimDataset ds;
    ds.manifest = read_json_file(dir / "manifest.json");
    if (ds.manifest.value("kind", "") != "sim_dataset")
        throw ContractError("not a dataset directory: " + dir.string());
    ds.spec = ds.manifest.at("spec").get<ReservoirSpec>();
    ds.wells = ds.manifest.at("wells").get<std::vector<WellSpec>>();

    for (const auto& entry : ds.manifest.at("samples")) {
        if (entry.value("status", "") != "ok") continue;
        const fs::path sdir = dir / entry.at("id").get<std::string>();
        DatasetSample sample;
        sample.field = load_field(sdir / "field.f64");
        sample.schedule.injector_rates = read_matrix_blob(sdir / "inj_rates.f64");
        sample.schedule.producer_bhps = read_matrix_blob(sdir / "prod_bhps.f64");
        sample.series = load_series_csv(sdir / "series.csv");
        sample.schedule.n_steps = sample.series.n_steps();
        sample.schedule.step_days = sample.series.n_steps() > 0
                                        ? sample.series.times[0]
                                        : 0.0;
        if (sample.series.n_steps() > 1)
            sample.schedule.step_days =
                sample.series.times[1] - sample.series.times[0];
        ds.samples.push_back(std::move(sample));
    }
    const std::string recorded = ds.manifest.value("content_hash", "");
    if (!recorded.empty() && recorded != ds.content_hash())
        throw ContractError("dataset content hash mismatch in " + dir.string());
    return ds;
}

} // namespace geoloop
