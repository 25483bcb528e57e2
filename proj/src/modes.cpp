#include "wgmcav/modes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "wgmcav/errors.hpp"
#include "wgmcav/units.hpp"

namespace wgmcav
{
namespace
{
using Eigen::Index;

void require_same_grid(const ModeProfile &p, const IndexMap &map)
{
    const double tol = 1e-9;
    if (p.nr() != map.nr() || p.nz() != map.nz() || std::abs(p.dr - map.dr) > tol || std::abs(p.dz - map.dz) > tol ||
        std::abs(p.r_min - map.r_min) > tol || std::abs(p.z_min - map.z_min) > tol)
        throw DomainError("profile and index map do not share the same grid");
}

bool same_eps(double a, double b)
{
    return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b));
}

// Cells counted as guiding material: closer to the guiding n² than to either
// neighbour material.
Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> guiding_mask(const IndexMap &map)
{
    const double other = std::max(map.substrate_eps, map.cladding_eps);
    const double cut = 0.5 * (map.guiding_eps + other);
    return map.eps >= cut;
}

// Sign changes of a cut after 3-cell smoothing, ignoring samples below 5%
// of the largest smoothed value.
int sign_changes(const std::vector<double> &cut)
{
    std::vector<double> smooth(cut.size());
    for (std::size_t j = 0; j < cut.size(); ++j) {
        const std::size_t a = j == 0 ? 0 : j - 1;
        const std::size_t b = std::min(cut.size() - 1, j + 1);
        double s = 0.0;
        for (std::size_t l = a; l <= b; ++l)
            s += cut[l];
        smooth[j] = s / static_cast<double>(b - a + 1);
    }
    double peak = 0.0;
    for (double v : smooth)
        peak = std::max(peak, std::abs(v));
    int changes = 0;
    int last_sign = 0;
    for (double v : smooth) {
        if (std::abs(v) < 0.05 * peak)
            continue;
        const int s = v > 0.0 ? 1 : -1;
        if (last_sign != 0 && s != last_sign)
            ++changes;
        last_sign = s;
    }
    return changes;
}

// Interior range excluding the absorbing layers (outer r, top and bottom).
struct Interior
{
    Index i_end, k_begin, k_end;
};

Interior interior(const IndexMap &map)
{
    const Index p = std::max(0, map.pml_cells);
    Interior in{map.nr() - p, p, map.nz() - p};
    if (in.i_end <= 0 || in.k_end <= in.k_begin)
        in = {map.nr(), 0, map.nz()};
    return in;
}

} // namespace

const char *to_string(Polarization p)
{
    switch (p) {
    case Polarization::te:
        return "TE";
    case Polarization::tm:
        return "TM";
    case Polarization::hybrid:
        return "hybrid";
    }
    return "?";
}

Polarization polarization_from_string(const std::string &s)
{
    if (s == "TE" || s == "te")
        return Polarization::te;
    if (s == "TM" || s == "tm")
        return Polarization::tm;
    if (s == "hybrid")
        return Polarization::hybrid;
    throw ValidationError("polarization", "unknown polarization '" + s + "' (expected TE, TM or hybrid)");
}

std::string family_label(Polarization p, int radial_order, int vertical_order)
{
    std::string label = std::string(to_string(p)) + std::to_string(radial_order);
    if (vertical_order > 0)
        label += "v" + std::to_string(vertical_order);
    return label;
}

double ResonantMode::q_total() const
{
    return q_i ? q_budget(q_rad, *q_i) : q_rad;
}

std::string ResonantMode::family() const
{
    return family_label(polarization, radial_order, vertical_order);
}

ModeClass classify_mode(const ModeProfile &profile, const IndexMap &map, double hybrid_ratio)
{
    require_same_grid(profile, map);
    const auto mask = guiding_mask(map);
    if (!mask.any())
        throw DomainError("index map has no guiding-layer cells");

    double w_r = 0.0, w_z = 0.0;
    for (Index k = 0; k < map.nz(); ++k)
        for (Index i = 0; i < map.nr(); ++i)
            if (mask(i, k)) {
                const double r = map.r_center(i);
                w_r += std::norm(profile.er(i, k)) * r;
                w_z += std::norm(profile.ez(i, k)) * r;
            }

    ModeClass out;
    const bool te = w_r > w_z;
    const double hi = std::max(w_r, w_z), lo = std::min(w_r, w_z);
    out.energy_ratio = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    out.polarization = out.energy_ratio < hybrid_ratio ? Polarization::hybrid : (te ? Polarization::te : Polarization::tm);

    const Eigen::ArrayXXcd &dom = te ? profile.er : profile.ez;
    Index i_max = 0, k_max = 0;
    double best = -1.0;
    for (Index k = 0; k < map.nz(); ++k)
        for (Index i = 0; i < map.nr(); ++i)
            if (mask(i, k) && std::norm(dom(i, k)) > best) {
                best = std::norm(dom(i, k));
                i_max = i;
                k_max = k;
            }
    if (!(best > 0.0))
        return out;

    // Project the cuts onto the phase of the maximum so a standing pattern
    // becomes a real signed function.
    const std::complex<double> ref = std::conj(dom(i_max, k_max)) / std::abs(dom(i_max, k_max));
    std::vector<double> radial, vertical;
    for (Index i = 0; i < map.nr(); ++i)
        if (mask(i, k_max))
            radial.push_back((dom(i, k_max) * ref).real());
    for (Index k = 0; k < map.nz(); ++k)
        if (mask(i_max, k))
            vertical.push_back((dom(i_max, k) * ref).real());
    out.radial_order = sign_changes(radial);
    out.vertical_order = sign_changes(vertical);
    return out;
}

VolumeOverlap mode_volume_and_eta(const ModeProfile &profile, const IndexMap &map)
{
    require_same_grid(profile, map);
    const Interior in = interior(map);
    const Eigen::ArrayXXd intensity = profile.intensity();

    bool any_diamond = false;
    double total = 0.0, peak = -1.0, diamond_peak = 0.0;
    Index i_o = 0, k_o = 0;
    for (Index k = in.k_begin; k < in.k_end; ++k)
        for (Index i = 0; i < in.i_end; ++i) {
            const double e2 = intensity(i, k);
            const double u = map.eps(i, k) * e2;
            total += u * map.r_center(i);
            if (u > peak) {
                peak = u;
                i_o = i;
                k_o = k;
            }
            if (same_eps(map.eps(i, k), map.substrate_eps)) {
                any_diamond = true;
                diamond_peak = std::max(diamond_peak, e2);
            }
        }
    if (!any_diamond)
        throw DomainError("eta undefined: index map has no diamond cells");
    if (!(peak > 0.0))
        throw DomainError("mode profile is identically zero");

    total *= 2.0 * units::kPi * map.dr * map.dz;
    const double unit = profile.wavelength_um / std::sqrt(map.guiding_eps);
    VolumeOverlap out;
    out.mode_volume = total / peak / (unit * unit * unit);
    out.eta = std::sqrt(diamond_peak / intensity(i_o, k_o));
    out.r_o = map.r_center(i_o);
    out.z_o = map.z_center(k_o);
    return out;
}

double sidewall_field_fraction(const ModeProfile &profile, const IndexMap &map, const DeviceGeometry &geometry)
{
    require_same_grid(profile, map);
    const Interior in = interior(map);
    const Eigen::ArrayXXd intensity = profile.intensity();
    const auto mask = guiding_mask(map);
    double total = 0.0;
    for (Index k = in.k_begin; k < in.k_end; ++k)
        for (Index i = 0; i < in.i_end; ++i)
            total += map.eps(i, k) * intensity(i, k) * map.r_center(i);
    total *= 2.0 * units::kPi * map.dr * map.dz;
    if (!(total > 0.0))
        throw DomainError("mode profile is identically zero");

    double edge = 0.0;
    for (Index k = 0; k < map.nz(); ++k) {
        const double z = map.z_center(k);
        if (z < 0.0 || z > geometry.layer_thickness)
            continue;
        Index last = -1;
        for (Index i = 0; i < map.nr(); ++i)
            if (mask(i, k))
                last = i;
        if (last >= 0)
            edge += intensity(last, k) * map.dz;
    }
    return 2.0 * units::kPi * geometry.disk_radius() * edge / total;
}

std::vector<FsrPoint> fsr_dispersion(const std::vector<ResonantMode> &modes)
{
    std::map<std::string, std::vector<const ResonantMode *>> families;
    for (const auto &m : modes)
        families[m.family()].push_back(&m);
    std::vector<FsrPoint> out;
    for (auto &[label, members] : families) {
        if (members.size() < 2)
            throw ValidationError("modes", "family " + label + " needs at least two modes for an FSR");
        std::sort(members.begin(), members.end(), [](const auto *a, const auto *b) { return a->m < b->m; });
        for (std::size_t j = 0; j + 1 < members.size(); ++j) {
            const ResonantMode &lo = *members[j];
            const ResonantMode &hi = *members[j + 1];
            if (hi.m != lo.m + 1) {
                std::ostringstream os;
                os << "family " << label << " has a gap between m = " << lo.m << " and m = " << hi.m;
                throw ValidationError("modes", os.str());
            }
            out.push_back({label, 0.5 * (lo.wavelength_um + hi.wavelength_um),
                           (lo.wavelength_um - hi.wavelength_um) * 1e3, lo.m});
        }
    }
    return out;
}

std::vector<FsrPoint> fsr_dispersion_segments(const std::vector<ResonantMode> &modes)
{
    std::map<std::string, std::map<int, const ResonantMode *>> best;
    for (const auto &m : modes) {
        if (m.polarization == Polarization::hybrid)
            continue;
        const ResonantMode *&slot = best[m.family()][m.m];
        if (!slot || m.q_rad > slot->q_rad)
            slot = &m;
    }
    std::vector<FsrPoint> out;
    for (const auto &[label, by_m] : best) {
        const ResonantMode *prev = nullptr;
        for (const auto &[m, mode] : by_m) {
            if (prev && prev->m + 1 == m)
                out.push_back({label, 0.5 * (prev->wavelength_um + mode->wavelength_um),
                               (prev->wavelength_um - mode->wavelength_um) * 1e3, prev->m});
            prev = mode;
        }
    }
    return out;
}

double q_budget(double q_rad, double q_i)
{
    if (!(q_rad > 0.0) || !(q_i > 0.0))
        throw ValidationError("q", "quality factors must be positive");
    return 1.0 / (1.0 / q_rad + 1.0 / q_i);
}

std::vector<double> q_budget(const std::vector<double> &q_rad, double q_i)
{
    std::vector<double> out;
    out.reserve(q_rad.size());
    for (double q : q_rad)
        out.push_back(q_budget(q, q_i));
    return out;
}

double estimate_q_roughness(const RoughnessSpec &spec, const ResonantMode &mode, const DeviceGeometry &geometry,
                            double guiding_index, double cladding_index)
{
    if (spec.sigma_nm < 0.0)
        throw ValidationError("sigma", "roughness sigma must be non-negative");
    if (!(spec.correlation_length_nm > 0.0))
        throw ValidationError("correlation_length", "correlation length must be positive");
    if (!mode.sidewall_fraction || !(*mode.sidewall_fraction > 0.0))
        throw ValidationError("mode", "mode has no sidewall field fraction");
    if (spec.sigma_nm == 0.0)
        return std::numeric_limits<double>::infinity();
    const double k0 = 2.0 * units::kPi / mode.wavelength_um;
    const double sigma = spec.sigma_nm * 1e-3;
    const double lc = spec.correlation_length_nm * 1e-3;
    const double contrast = guiding_index * guiding_index - cladding_index * cladding_index;
    const double inv_q = kRoughnessPrefactor * k0 * k0 * k0 * cladding_index * contrast * contrast * sigma * sigma * lc *
                         geometry.layer_thickness * *mode.sidewall_fraction;
    return 1.0 / inv_q;
}

} // namespace wgmcav
