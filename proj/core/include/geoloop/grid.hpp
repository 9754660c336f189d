#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "geoloop/io.hpp"

namespace geoloop {

// Structured 2D grid, cell-centered. Cell (i, j) has index j*nx + i and
// center origin + ((i+0.5)*dx, (j+0.5)*dy).
struct GridSpec {
    int nx = 61;
    int ny = 61;
    double dx = 20.0; // m
    double dy = 20.0; // m
    double thickness = 30.0; // m
    double origin_x = 0.0;
    double origin_y = 0.0;

    int n_cells() const { return nx * ny; }
    double cell_center_x(int i) const { return origin_x + (i + 0.5) * dx; }
    double cell_center_y(int j) const { return origin_y + (j + 0.5) * dy; }
    int cell_index(int i, int j) const { return j * nx + i; }

    void validate() const;
    bool operator==(const GridSpec&) const = default;
};

void to_json(json& j, const GridSpec& g);
void from_json(const json& j, GridSpec& g);

// Log-permeability field, lnk in ln(mD), one value per cell.
struct PermField {
    GridSpec grid;
    std::vector<double> lnk;

    void validate() const;
};

// Flat f64 blob + JSON sidecar (grid, optional extras). CSV export is
// (x, y, lnk) per cell for plotting.
void save_field(const std::filesystem::path& path, const PermField& field,
                json sidecar_extra = json::object());
PermField load_field(const std::filesystem::path& path);
void export_field_csv(const std::filesystem::path& path, const PermField& field);

} // namespace geoloop
