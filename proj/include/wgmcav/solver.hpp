#ifndef WGMCAV_SOLVER_HPP
#define WGMCAV_SOLVER_HPP

#include <optional>
#include <string>
#include <vector>

#include "wgmcav/device.hpp"
#include "wgmcav/fdtd.hpp"
#include "wgmcav/harminv.hpp"
#include "wgmcav/modes.hpp"

namespace wgmcav
{
/// Settings for one FDTD mode search at fixed m.
struct SolverOptions
{
    GridSpec grid = default_grid();
    double lambda_ref_um = 0.637;     ///< wavelength at which indices are evaluated
    double lambda_lo_um = 0.58;       ///< search window
    double lambda_hi_um = 0.72;
    long steps_after_source = 16384;
    double courant = 0.5;
    double residual_threshold = 1e-4; ///< harmonic-inversion components above this are dropped
    double merge_tolerance_thz = 0.05;
    bool compute_profiles = true;     ///< second run for V̄, η and classification
    bool keep_profiles = false;
    bool standing_wave = false;
    std::optional<double> q_i;

    static GridSpec default_grid()
    {
        GridSpec g;
        g.pad_r = 0.8;
        g.pad_top = 0.8;
        return g;
    }
};

struct SolverResult
{
    std::vector<ResonantMode> modes;     ///< sorted by increasing wavelength
    std::vector<ModeProfile> profiles;   ///< parallel to `modes` when keep_profiles is set
    std::vector<HarmonicComponent> components; ///< every pole of the widened search band
    std::vector<TimeSeries> series;      ///< probe ringdown records
    std::vector<std::string> warnings;
};

/// Source and probes placed near the rim at mid-layer height; TE excites with
/// a radial dipole, TM with an axial one.
SimConfig mode_search_config(const DeviceGeometry &geometry, const IndexMap &map, int m, Polarization excitation,
                             const SolverOptions &options);

/// Rasterizes the device, runs the ringdown, extracts resonances inside the
/// window and (optionally) classifies each one and evaluates V̄, η and the
/// sidewall fraction from its accumulated profile. Modes without a diamond
/// overlap (h = 0 with no substrate cells) are still reported with η = 0.
SolverResult solve_modes(const DeviceGeometry &geometry, const MaterialSet &materials, int m,
                         Polarization excitation, const SolverOptions &options = {});

/// Highest-Q mode of the given family label ("TE0", "TM1", ...), if any.
std::optional<ResonantMode> best_of_family(const std::vector<ResonantMode> &modes, const std::string &family);

} // namespace wgmcav

#endif // WGMCAV_SOLVER_HPP
