#include "geoloop/grid.hpp"

#include <cmath>

namespace geoloop {

void GridSpec::validate() const {
    if (nx < 2 || ny < 2) throw ContractError("GridSpec: nx and ny must be >= 2");
    if (dx <= 0 || dy <= 0 || thickness <= 0)
        throw ContractError("GridSpec: dx, dy, thickness must be > 0");
}

void to_json(json& j, const GridSpec& g) {
    j = json{{"nx", g.nx},       {"ny", g.ny},
             {"dx", g.dx},       {"dy", g.dy},
             {"thickness", g.thickness},
             {"origin_x", g.origin_x}, {"origin_y", g.origin_y}};
}

void from_json(const json& j, GridSpec& g) {
    g.nx = j.at("nx").get<int>();
    g.ny = j.at("ny").get<int>();
    g.dx = j.at("dx").get<double>();
    g.dy = j.at("dy").get<double>();
    g.thickness = j.at("thickness").get<double>();
    g.origin_x = j.value("origin_x", 0.0);
    g.origin_y = j.value("origin_y", 0.0);
}

void PermField::validate() const {
    grid.validate();
    if (static_cast<int>(lnk.size()) != grid.n_cells())
        throw ContractError("PermField: lnk length != nx*ny");
    for (double v : lnk)
        if (!std::isfinite(v)) throw ContractError("PermField: non-finite lnk value");
}

void save_field(const std::filesystem::path& path, const PermField& field, json sidecar_extra) {
    field.validate();
    sidecar_extra["grid"] = field.grid;
    write_f64_blob(path, field.lnk, {field.grid.ny, field.grid.nx}, std::move(sidecar_extra));
}

PermField load_field(const std::filesystem::path& path) {
    F64Blob blob = read_f64_blob(path);
    PermField field;
    field.grid = blob.sidecar.at("grid").get<GridSpec>();
    field.lnk = std::move(blob.data);
    field.validate();
    return field;
}

void export_field_csv(const std::filesystem::path& path, const PermField& field) {
    std::vector<std::vector<double>> rows;
    rows.reserve(field.lnk.size());
    for (int j = 0; j < field.grid.ny; ++j)
        for (int i = 0; i < field.grid.nx; ++i)
            rows.push_back({field.grid.cell_center_x(i), field.grid.cell_center_y(j),
                            field.lnk[static_cast<std::size_t>(field.grid.cell_index(i, j))]});
    write_csv(path, {"x", "y", "lnk"}, rows);
}

} // namespace geoloop
