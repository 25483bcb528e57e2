#ifndef WGMCAV_DEVICE_HPP
#define WGMCAV_DEVICE_HPP

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "wgmcav/errors.hpp"

namespace wgmcav
{
/// Axisymmetric disk-on-pedestal stack. The disk occupies z ∈ [0, t],
/// the etched diamond pedestal z ∈ [-h, 0] under the disk footprint (less
/// the undercut), and the diamond substrate fills z < -h. All lengths in μm.
struct DeviceGeometry
{
    double disk_diameter = 0.0;           ///< d
    double layer_thickness = 0.0;         ///< t
    double etch_depth = 0.0;              ///< h
    double pedestal_undercut = 0.0;
    double substrate_extent = 1.0;        ///< diamond below the pedestal, PML included

    double disk_radius() const { return 0.5 * disk_diameter; }
    double pedestal_radius() const { return disk_radius() - pedestal_undercut; }

    friend bool operator==(const DeviceGeometry &, const DeviceGeometry &) = default;
};

/// Validates a key/value parameter set (keys d, t, h, pedestal_undercut,
/// substrate_extent) into a geometry. Throws ValidationError naming the field.
DeviceGeometry build_geometry(const std::map<std::string, double> &raw);

/// Re-validates an existing geometry; returns it unchanged when valid.
DeviceGeometry validate(const DeviceGeometry &geometry);

enum class MaterialKind
{
    guiding_layer,
    diamond,
    vacuum
};

enum class Interpolation
{
    linear,
    natural_cubic
};

/// Refractive index model: a constant reference index, optionally refined
/// by a tabulated dispersion n(λ).
struct MaterialModel
{
    MaterialKind kind = MaterialKind::vacuum;
    double reference_index = 1.0;
    std::vector<std::pair<double, double>> dispersion_table; ///< (λ μm, n), strictly increasing λ
    Interpolation interpolation = Interpolation::natural_cubic;

    bool has_table() const { return !dispersion_table.empty(); }
};

/// Checks the MaterialModel invariants; throws ValidationError.
void validate(const MaterialModel &material);

/// Default constant-index materials.
MaterialModel gallium_phosphide(double index = 3.25);
MaterialModel diamond(double index = 2.42);
MaterialModel vacuum();

/// Reads a two-column (λ μm, n) CSV; '#' lines and a non-numeric header are skipped.
std::vector<std::pair<double, double>> read_dispersion_csv(const std::string &path);

double refractive_index(const MaterialModel &material, double wavelength_um);

/// Group index n - λ dn/dλ using a centred difference on the interpolant.
double group_index(const MaterialModel &material, double wavelength_um);

struct MaterialSet
{
    MaterialModel guiding = gallium_phosphide();
    MaterialModel substrate = diamond();
    MaterialModel cladding = vacuum();

    const MaterialModel &get(MaterialKind kind) const;
};

/// Discretisation of the (r, z) half plane handed to the engine.
struct GridSpec
{
    double dr = 0.01;
    double dz = 0.01;
    std::optional<double> r_min;   ///< defaults to d/4
    double pad_r = 1.0;            ///< air beyond the disk edge, before the PML
    double pad_top = 1.0;          ///< air above the disk, before the PML
    int pml_cells = 12;
    bool subpixel = true;
    std::optional<MaterialKind> uniform_fill; ///< homogeneous test medium
};

/// Cell-centred map of n². Cell (i, k) spans r ∈ [r_min + i dr, r_min + (i+1) dr],
/// z ∈ [z_min + k dz, z_min + (k+1) dz].
struct IndexMap
{
    double dr = 0.0;
    double dz = 0.0;
    double r_min = 0.0;
    double z_min = 0.0;
    Eigen::ArrayXXd eps;            ///< rows: r index, cols: z index
    double guiding_eps = 1.0;       ///< n² of each material at λ_ref
    double substrate_eps = 1.0;
    double cladding_eps = 1.0;

    Eigen::Index nr() const { return eps.rows(); }
    Eigen::Index nz() const { return eps.cols(); }
    double r_center(Eigen::Index i) const { return r_min + (static_cast<double>(i) + 0.5) * dr; }
    double z_center(Eigen::Index k) const { return z_min + (static_cast<double>(k) + 0.5) * dz; }
    double r_max() const { return r_min + static_cast<double>(nr()) * dr; }
    double z_max() const { return z_min + static_cast<double>(nz()) * dz; }
    /// Number of PML cells the map was built for (the engine may override).
    int pml_cells = 0;
};

/// Builds the n² map at the reference wavelength. Throws ValidationError when
/// the grid is coarser than λ_ref/(15 n_max), r_min ≥ d/2, or the substrate
/// cannot hold the PML.
IndexMap rasterize(const DeviceGeometry &geometry, const MaterialSet &materials,
                   const GridSpec &grid, double lambda_ref_um);

/// Homogeneous map with given n² on an explicit extent (engine validation).
IndexMap uniform_map(double eps, double r_min, double r_max, double z_min, double z_max,
                     double dr, double dz, int pml_cells = 0);

} // namespace wgmcav

#endif // WGMCAV_DEVICE_HPP
