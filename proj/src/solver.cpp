#include "wgmcav/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "wgmcav/errors.hpp"
#include "wgmcav/units.hpp"

namespace wgmcav
{
SimConfig mode_search_config(const DeviceGeometry &geometry, const IndexMap &map, int m, Polarization excitation,
                             const SolverOptions &options)
{
    if (!(options.lambda_hi_um > options.lambda_lo_um) || !(options.lambda_lo_um > 0.0))
        throw ValidationError("window", "search window must satisfy 0 < lambda_lo < lambda_hi");
    const double r_edge = geometry.disk_radius();
    const double t = geometry.layer_thickness;
    const double nu_lo = units::frequency_thz(options.lambda_hi_um);
    const double nu_hi = units::frequency_thz(options.lambda_lo_um);

    SimConfig cfg;
    cfg.m = m;
    cfg.index_map = map;
    cfg.source.r = r_edge - 0.1;
    cfg.source.z = 0.5 * t;
    cfg.source.orientation = excitation == Polarization::tm ? Orientation::axial : Orientation::radial;
    cfg.source.center_thz = 0.5 * (nu_lo + nu_hi);
    cfg.source.width_thz = std::max(10.0, 0.35 * (nu_hi - nu_lo));
    cfg.probes = {{"rim", r_edge - 0.08, 0.5 * t}, {"inner", r_edge - 0.2, 0.3 * t}};
    cfg.steps_after_source = options.steps_after_source;
    cfg.courant = options.courant;
    return cfg;
}

SolverResult solve_modes(const DeviceGeometry &geometry, const MaterialSet &materials, int m,
                         Polarization excitation, const SolverOptions &options)
{
    if (excitation == Polarization::hybrid)
        throw ValidationError("polarization", "excitation must be TE or TM");
    const IndexMap map = rasterize(geometry, materials, options.grid, options.lambda_ref_um);
    const SimConfig cfg = mode_search_config(geometry, map, m, excitation, options);

    const FrequencyBand band{units::frequency_thz(options.lambda_hi_um), units::frequency_thz(options.lambda_lo_um)};
    // Resonances just outside the window still leak into the profiles of
    // those inside it, so poles are collected over a band widened by a few
    // DFT resolutions and only the in-window ones are reported.
    const double window_ps =
        units::engine_time_to_ps(static_cast<double>(cfg.steps_after_source) * default_time_step(map, m, cfg.courant));
    const double margin = 4.0 / window_ps;
    const FrequencyBand search{std::max(0.5 * band.lo_thz, band.lo_thz - margin), band.hi_thz + margin};
    HarminvOptions hopts;
    hopts.residual_threshold = options.residual_threshold;

    SolverResult result;
    std::vector<std::vector<HarmonicComponent>> sets;
    result.series = run_ringdown(cfg);
    for (const TimeSeries &ts : result.series) {
        std::vector<HarmonicComponent> kept;
        for (const HarmonicComponent &c : harmonic_inversion(ts, search, hopts))
            if (c.residual < options.residual_threshold && c.frequency_thz >= search.lo_thz &&
                c.frequency_thz <= search.hi_thz)
                kept.push_back(c);
        sets.push_back(std::move(kept));
    }
    result.components = merge_components(sets, options.merge_tolerance_thz);
    std::sort(result.components.begin(), result.components.end(),
              [](const HarmonicComponent &a, const HarmonicComponent &b) { return a.frequency_thz > b.frequency_thz; });

    std::vector<double> targets, qs;
    for (const HarmonicComponent &c : result.components) {
        targets.push_back(c.frequency_thz);
        qs.push_back(c.q > 0.0 ? c.q : std::numeric_limits<double>::infinity());
    }

    std::vector<ModeProfile> profiles;
    if (options.compute_profiles && !targets.empty())
        profiles = accumulate_profiles(cfg, targets, std::nullopt, qs).profiles;

    std::vector<ModeProfile> kept;
    for (std::size_t j = 0; j < result.components.size(); ++j) {
        const HarmonicComponent &c = result.components[j];
        if (c.frequency_thz < band.lo_thz || c.frequency_thz > band.hi_thz)
            continue;
        ResonantMode mode;
        mode.m = m;
        mode.wavelength_um = units::wavelength_um(c.frequency_thz);
        mode.q_rad = c.q;
        mode.q_i = options.q_i;
        mode.standing_wave = options.standing_wave;
        mode.polarization = excitation;
        if (!profiles.empty()) {
            const ModeProfile &p = profiles[j];
            const ModeClass cls = classify_mode(p, map);
            mode.polarization = cls.polarization;
            mode.radial_order = cls.radial_order;
            mode.vertical_order = cls.vertical_order;
            const VolumeOverlap v = mode_volume_and_eta(p, map);
            mode.mode_volume = v.mode_volume;
            mode.eta = v.eta;
            mode.r_o = v.r_o;
            mode.z_o = v.z_o;
            mode.sidewall_fraction = sidewall_field_fraction(p, map, geometry);
            for (const std::string &w : p.warnings) {
                std::ostringstream os;
                os << "m=" << m << " lambda=" << mode.wavelength_um << ": " << w;
                result.warnings.push_back(os.str());
            }
        }
        result.modes.push_back(mode);
        if (options.keep_profiles && !profiles.empty())
            kept.push_back(std::move(profiles[j]));
    }
    result.profiles = std::move(kept);
    return result;
}

std::optional<ResonantMode> best_of_family(const std::vector<ResonantMode> &modes, const std::string &family)
{
    std::optional<ResonantMode> best;
    for (const ResonantMode &m : modes)
        if (m.family() == family && (!best || m.q_rad > best->q_rad))
            best = m;
    return best;
}

} // namespace wgmcav
