#pragma once

#include "geoloop/simulator.hpp"

namespace geoloop {

enum class PairingRule { zipped, cartesian };

PairingRule pairing_from_string(const std::string& s);
std::string to_string(PairingRule rule);

struct DatasetSample {
    PermField field;
    ControlSchedule schedule;
    ProductionSeries series;
};

struct SimDataset {
    ReservoirSpec spec;
    std::vector<WellSpec> wells;
    std::vector<DatasetSample> samples;
    json manifest;

    // hash over sample identities, used to enforce train/test disjointness
    std::string content_hash() const;
};

struct GenerateOptions {
    PairingRule pairing = PairingRule::zipped;
    SimOptions sim;
    int threads = 1;
    std::uint64_t seed = 0; // recorded in the manifest only
};

// Simulates every (field, schedule) pair and persists the triples under
// out_dir: manifest.json plus sample_%04d/{field.f64, inj_rates.f64,
// prod_bhps.f64, series.csv}. Failed simulations become skipped entries in
// the manifest with their reason, never silent drops.
SimDataset generate_dataset(const ReservoirSpec& spec, const std::vector<WellSpec>& wells,
                            const std::vector<PermField>& fields,
                            const std::vector<ControlSchedule>& schedules,
                            const std::filesystem::path& out_dir, const GenerateOptions& options);

SimDataset load_dataset(const std::filesystem::path& dir);

} // namespace geoloop
