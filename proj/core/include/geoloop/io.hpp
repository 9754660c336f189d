#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace geoloop {

using json = nlohmann::json;

// Thrown on precondition / config / shape violations. The CLI maps this to
// exit code 2, everything else derived from std::runtime_error to 1.
class ContractError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Flat binary of little-endian 64-bit floats plus a JSON sidecar at
// <path>.json holding at least {"dtype":"f64","shape":[...]}. Extra sidecar
// fields are caller-supplied and round-trip untouched.
void write_f64_blob(const std::filesystem::path& path, const std::vector<double>& data,
                    const std::vector<std::int64_t>& shape, json sidecar_extra = json::object());

struct F64Blob {
    std::vector<double> data;
    std::vector<std::int64_t> shape;
    json sidecar;
};
F64Blob read_f64_blob(const std::filesystem::path& path);

// Whole-file helpers
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

json read_json_file(const std::filesystem::path& path);
// Serialized with 2-space indent and a trailing newline; key order is
// nlohmann's sorted order, so output is deterministic.
void write_json_file(const std::filesystem::path& path, const json& j);

// CSV with a fixed header row. Values are formatted with %.17g so that a
// reload reproduces the double bit-for-bit.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};
CsvTable read_csv(const std::filesystem::path& path);

std::string format_double(double v); // %.17g

// FNV-1a 64 of the file content, rendered as "fnv1a64:<16 hex digits>".
std::string hash_file(const std::filesystem::path& path);
std::string hash_bytes(const void* data, std::size_t size);

// Run-end timestamp. Honors SOURCE_DATE_EPOCH (seconds since the epoch) so
// reproducible runs emit identical manifests; falls back to wall clock.
std::string manifest_timestamp();

} // namespace geoloop
