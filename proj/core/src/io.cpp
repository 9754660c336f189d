#include "geoloop/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "geoloop/rng.hpp"

namespace geoloop {

namespace fs = std::filesystem;

void write_f64_blob(const fs::path& path, const std::vector<double>& data,
                    const std::vector<std::int64_t>& shape, json sidecar_extra) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    if (n != static_cast<std::int64_t>(data.size()))
        throw ContractError("write_f64_blob: shape does not match data length for " + path.string());

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!out) throw std::runtime_error("short write: " + path.string());
    out.close();

    json sidecar = std::move(sidecar_extra);
    sidecar["dtype"] = "f64";
    sidecar["shape"] = shape;
    write_json_file(path.string() + ".json", sidecar);
}

F64Blob read_f64_blob(const fs::path& path) {
    F64Blob blob;
    blob.sidecar = read_json_file(path.string() + ".json");
    if (blob.sidecar.value("dtype", "") != "f64")
        throw ContractError("blob sidecar dtype is not f64: " + path.string());
    blob.shape = blob.sidecar.at("shape").get<std::vector<std::int64_t>>();

    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing input artifact: " + path.string());
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::int64_t n = 1;
    for (auto d : blob.shape) n *= d;
    if (bytes != static_cast<std::size_t>(n) * sizeof(double))
        throw ContractError("blob size does not match sidecar shape: " + path.string());
    blob.data.resize(static_cast<std::size_t>(n));
    in.read(reinterpret_cast<char*>(blob.data.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw std::runtime_error("short read: " + path.string());
    return blob;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing input artifact: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path.string());
    out << content;
    if (!out) throw std::runtime_error("short write: " + path.string());
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing input artifact: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ContractError("invalid JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

void write_json_file(const fs::path& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ostringstream out;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out << ',';
        out << header[i];
    }
    out << '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw ContractError("write_csv: row width != header width for " + path.string());
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << format_double(row[i]);
        }
        out << '\n';
    }
    write_text_file(path, out.str());
}

CsvTable read_csv(const fs::path& path) {
    CsvTable table;
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw ContractError("empty CSV: " + path.string());
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) table.header.push_back(cell);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        if (row.size() != table.header.size())
            throw ContractError("ragged CSV row in " + path.string());
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string hash_bytes(const void* data, std::size_t size) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a64:%016llx",
                  static_cast<unsigned long long>(fnv1a64(data, size)));
    return buf;
}

std::string hash_file(const fs::path& path) {
    const std::string content = read_text_file(path);
    return hash_bytes(content.data(), content.size());
}

std::string manifest_timestamp() {
    std::time_t t;
    if (const char* sde = std::getenv("SOURCE_DATE_EPOCH")) {
        t = static_cast<std::time_t>(std::strtoll(sde, nullptr, 10));
    } else {
        t = std::time(nullptr);
    }
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace geoloop
