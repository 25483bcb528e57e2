#include "wgmcav/device.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace wgmcav
{
namespace
{
void require_positive(double value, const char *field)
{
    if (!(value > 0.0) || !std::isfinite(value))
        throw ValidationError(field, std::string(field) + " must be positive");
}

void require_non_negative(double value, const char *field)
{
    if (!(value >= 0.0) || !std::isfinite(value))
        throw ValidationError(field, std::string(field) + " must be non-negative");
}

double overlap(double a0, double a1, double b0, double b1)
{
    return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

// Natural cubic spline second derivatives at the knots.
std::vector<double> spline_second_derivatives(const std::vector<std::pair<double, double>> &t)
{
    const std::size_t n = t.size();
    std::vector<double> m(n, 0.0);
    if (n < 3)
        return m;
    const Eigen::Index k = static_cast<Eigen::Index>(n - 2);
    Eigen::VectorXd diag(k), upper(k), rhs(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        const std::size_t i = static_cast<std::size_t>(j) + 1;
        const double h0 = t[i].first - t[i - 1].first;
        const double h1 = t[i + 1].first - t[i].first;
        diag(j) = 2.0 * (h0 + h1);
        upper(j) = h1;
        rhs(j) = 6.0 * ((t[i + 1].second - t[i].second) / h1 - (t[i].second - t[i - 1].second) / h0);
    }
    // Thomas algorithm; the system is symmetric tridiagonal and diagonally dominant.
    for (Eigen::Index j = 1; j < k; ++j) {
        const double w = upper(j - 1) / diag(j - 1);
        diag(j) -= w * upper(j - 1);
        rhs(j) -= w * rhs(j - 1);
    }
    Eigen::VectorXd x(k);
    x(k - 1) = rhs(k - 1) / diag(k - 1);
    for (Eigen::Index j = k - 2; j >= 0; --j)
        x(j) = (rhs(j) - upper(j) * x(j + 1)) / diag(j);
    for (Eigen::Index j = 0; j < k; ++j)
        m[static_cast<std::size_t>(j) + 1] = x(j);
    return m;
}

double interpolate(const MaterialModel &material, double lambda)
{
    const auto &t = material.dispersion_table;
    const double lo = t.front().first;
    const double hi = t.back().first;
    if (lambda < lo || lambda > hi) {
        std::ostringstream os;
        os << "wavelength " << lambda << " um outside dispersion table domain [" << lo << ", " << hi
           << "]";
        throw DomainError(os.str());
    }
    if (t.size() == 1)
        return t.front().second;
    auto it = std::upper_bound(t.begin(), t.end(), lambda,
                               [](double v, const auto &p) { return v < p.first; });
    std::size_t i = static_cast<std::size_t>(std::distance(t.begin(), it));
    i = std::clamp<std::size_t>(i, 1, t.size() - 1);
    const double x0 = t[i - 1].first, x1 = t[i].first;
    const double y0 = t[i - 1].second, y1 = t[i].second;
    const double h = x1 - x0;
    const double a = (x1 - lambda) / h;
    const double b = (lambda - x0) / h;
    if (material.interpolation == Interpolation::linear || t.size() < 3)
        return a * y0 + b * y1;
    // FIXME: second derivatives are recomputed on every call; cache them if
    // dispersion lookups ever show up in a profile.
    const auto m = spline_second_derivatives(t);
    return a * y0 + b * y1 + ((a * a * a - a) * m[i - 1] + (b * b * b - b) * m[i]) * h * h / 6.0;
}

} // namespace

DeviceGeometry build_geometry(const std::map<std::string, double> &raw)
{
    static const char *known[] = {"d", "t", "h", "pedestal_undercut", "substrate_extent"};
    for (const auto &[key, value] : raw) {
        (void)value;
        if (std::find_if(std::begin(known), std::end(known), [&](const char *k) { return key == k; }) ==
            std::end(known))
            throw ValidationError(key, "unknown geometry parameter '" + key + "'");
    }
    auto get = [&](const char *key, double fallback) {
        auto it = raw.find(key);
        return it == raw.end() ? fallback : it->second;
    };
    if (!raw.contains("d"))
        throw ValidationError("d", "d is required");
    if (!raw.contains("t"))
        throw ValidationError("t", "t is required");
    DeviceGeometry g;
    g.disk_diameter = get("d", 0.0);
    g.layer_thickness = get("t", 0.0);
    g.etch_depth = get("h", 0.0);
    g.pedestal_undercut = get("pedestal_undercut", 0.0);
    g.substrate_extent = get("substrate_extent", 1.0);
    return validate(g);
}

DeviceGeometry validate(const DeviceGeometry &g)
{
    require_positive(g.disk_diameter, "d");
    require_positive(g.layer_thickness, "t");
    require_non_negative(g.etch_depth, "h");
    require_non_negative(g.pedestal_undercut, "pedestal_undercut");
    require_positive(g.substrate_extent, "substrate_extent");
    if (g.pedestal_undercut >= g.disk_radius())
        throw ValidationError("pedestal_undercut", "pedestal_undercut must be smaller than d/2");
    return g;
}

void validate(const MaterialModel &material)
{
    if (!(material.reference_index >= 1.0))
        throw ValidationError("reference_index", "reference_index must be >= 1");
    const auto &t = material.dispersion_table;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(t[i].second >= 1.0) || !std::isfinite(t[i].first))
            throw ValidationError("dispersion_table", "dispersion table indices must be >= 1");
        if (i > 0 && !(t[i].first > t[i - 1].first))
            throw ValidationError("dispersion_table", "dispersion table wavelengths must be strictly increasing");
    }
}

MaterialModel gallium_phosphide(double index)
{
    return MaterialModel{MaterialKind::guiding_layer, index, {}, Interpolation::natural_cubic};
}

MaterialModel diamond(double index)
{
    return MaterialModel{MaterialKind::diamond, index, {}, Interpolation::natural_cubic};
}

MaterialModel vacuum() { return MaterialModel{MaterialKind::vacuum, 1.0, {}, Interpolation::linear}; }

std::vector<std::pair<double, double>> read_dispersion_csv(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("dispersion_table", "cannot open dispersion table '" + path + "'");
    std::vector<std::pair<double, double>> rows;
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#')
            continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double lambda = 0.0, n = 0.0;
        if (!(ls >> lambda >> n)) {
            if (rows.empty() && !header_seen) {
                header_seen = true;
                continue;
            }
            throw ValidationError("dispersion_table",
                                  path + ":" + std::to_string(line_no) + ": expected two numeric columns");
        }
        rows.emplace_back(lambda, n);
    }
    if (rows.empty())
        throw ValidationError("dispersion_table", path + ": no data rows");
    return rows;
}

double refractive_index(const MaterialModel &material, double wavelength_um)
{
    if (!(wavelength_um > 0.0))
        throw DomainError("wavelength must be positive");
    if (!material.has_table())
        return material.reference_index;
    return interpolate(material, wavelength_um);
}

double group_index(const MaterialModel &material, double wavelength_um)
{
    const double n = refractive_index(material, wavelength_um);
    if (!material.has_table())
        return n;
    constexpr double step = 1e-3;
    const auto &t = material.dispersion_table;
    if (wavelength_um - step < t.front().first || wavelength_um + step > t.back().first)
        throw DomainError("wavelength too close to the dispersion table edge for the difference stencil");
    const double slope = (interpolate(material, wavelength_um + step) - interpolate(material, wavelength_um - step)) /
                         (2.0 * step);
    return n - wavelength_um * slope;
}

const MaterialModel &MaterialSet::get(MaterialKind kind) const
{
    switch (kind) {
    case MaterialKind::guiding_layer:
        return guiding;
    case MaterialKind::diamond:
        return substrate;
    case MaterialKind::vacuum:
        break;
    }
    return cladding;
}

IndexMap rasterize(const DeviceGeometry &geometry, const MaterialSet &materials, const GridSpec &grid,
                   double lambda_ref_um)
{
    const DeviceGeometry g = validate(geometry);
    require_positive(grid.dr, "dr");
    require_positive(grid.dz, "dz");
    require_non_negative(grid.pad_r, "pad_r");
    require_non_negative(grid.pad_top, "pad_top");
    if (grid.pml_cells < 0)
        throw ValidationError("pml_cells", "pml_cells must be non-negative");

    const double n_guiding = refractive_index(materials.guiding, lambda_ref_um);
    const double n_substrate = refractive_index(materials.substrate, lambda_ref_um);
    const double n_cladding = refractive_index(materials.cladding, lambda_ref_um);
    const double n_max = std::max({n_guiding, n_substrate, n_cladding});
    const double spacing_limit = lambda_ref_um / (15.0 * n_max);
    if (std::max(grid.dr, grid.dz) > spacing_limit * (1.0 + 1e-9)) {
        std::ostringstream os;
        os << "grid too coarse: spacing " << std::max(grid.dr, grid.dz) << " um exceeds lambda/(15 n_max) = "
           << spacing_limit << " um";
        throw ValidationError("grid", os.str());
    }

    const double radius = g.disk_radius();
    const double r_min = grid.r_min.value_or(0.25 * g.disk_diameter);
    if (r_min < 0.0 || r_min >= radius)
        throw ValidationError("r_min", "r_min must lie in [0, d/2)");

    const double pml_depth = grid.pml_cells * grid.dz;
    if (g.substrate_extent < pml_depth + 2.0 * grid.dz)
        throw ValidationError("substrate_extent", "substrate_extent must contain the PML region");

    const auto cells_r = static_cast<Eigen::Index>(std::ceil((radius + grid.pad_r - r_min) / grid.dr - 1e-9)) +
                         grid.pml_cells;
    const auto cells_below = static_cast<Eigen::Index>(std::ceil((g.etch_depth + g.substrate_extent) / grid.dz - 1e-9));
    const auto cells_above = static_cast<Eigen::Index>(std::ceil((g.layer_thickness + grid.pad_top) / grid.dz - 1e-9)) +
                             grid.pml_cells;

    IndexMap map;
    map.dr = grid.dr;
    map.dz = grid.dz;
    map.r_min = r_min;
    map.z_min = -static_cast<double>(cells_below) * grid.dz;
    map.pml_cells = grid.pml_cells;
    map.guiding_eps = n_guiding * n_guiding;
    map.substrate_eps = n_substrate * n_substrate;
    map.cladding_eps = n_cladding * n_cladding;
    map.eps.resize(cells_r, cells_below + cells_above);

    if (grid.uniform_fill) {
        const double n = refractive_index(materials.get(*grid.uniform_fill), lambda_ref_um);
        map.eps.setConstant(n * n);
        return map;
    }

    const double t = g.layer_thickness;
    const double h = g.etch_depth;
    const double rp = g.pedestal_radius();
    const double inf = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < map.nz(); ++k) {
        const double z0 = map.z_min + static_cast<double>(k) * grid.dz;
        const double z1 = z0 + grid.dz;
        const double zc = 0.5 * (z0 + z1);
        for (Eigen::Index i = 0; i < map.nr(); ++i) {
            const double r0 = r_min + static_cast<double>(i) * grid.dr;
            const double r1 = r0 + grid.dr;
            const double rc = 0.5 * (r0 + r1);
            double f_disk, f_diamond;
            if (grid.subpixel) {
                const double area = grid.dr * grid.dz;
                f_disk = overlap(r0, r1, 0.0, radius) * overlap(z0, z1, 0.0, t) / area;
                f_diamond = (overlap(r0, r1, 0.0, rp) * overlap(z0, z1, -h, 0.0) +
                             overlap(r0, r1, 0.0, inf) * overlap(z0, z1, -inf, -h)) /
                            area;
            } else {
                f_disk = (rc <= radius && zc >= 0.0 && zc <= t) ? 1.0 : 0.0;
                f_diamond = ((rc <= rp && zc >= -h && zc < 0.0) || zc < -h) ? 1.0 : 0.0;
            }
            const double f_clad = std::max(0.0, 1.0 - f_disk - f_diamond);
            map.eps(i, k) = f_disk * map.guiding_eps + f_diamond * map.substrate_eps + f_clad * map.cladding_eps;
        }
    }
    return map;
}

IndexMap uniform_map(double eps, double r_min, double r_max, double z_min, double z_max, double dr, double dz,
                     int pml_cells)
{
    if (!(eps >= 1.0))
        throw ValidationError("eps", "n^2 must be >= 1");
    require_positive(dr, "dr");
    require_positive(dz, "dz");
    if (!(r_max > r_min) || r_min < 0.0)
        throw ValidationError("r_min", "invalid radial extent");
    if (!(z_max > z_min))
        throw ValidationError("z_min", "invalid axial extent");
    IndexMap map;
    map.dr = dr;
    map.dz = dz;
    map.r_min = r_min;
    map.z_min = z_min;
    map.pml_cells = pml_cells;
    map.guiding_eps = map.substrate_eps = map.cladding_eps = eps;
    const auto nr = static_cast<Eigen::Index>(std::llround((r_max - r_min) / dr));
    const auto nz = static_cast<Eigen::Index>(std::llround((z_max - z_min) / dz));
    map.eps = Eigen::ArrayXXd::Constant(std::max<Eigen::Index>(nr, 1), std::max<Eigen::Index>(nz, 1), eps);
    return map;
}

} // namespace wgmcav
