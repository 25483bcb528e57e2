#ifndef WGMCAV_MODES_HPP
#define WGMCAV_MODES_HPP

#include <optional>
#include <string>
#include <vector>

#include "wgmcav/device.hpp"
#include "wgmcav/fdtd.hpp"

namespace wgmcav
{
enum class Polarization
{
    te,
    tm,
    hybrid
};

const char *to_string(Polarization p);
Polarization polarization_from_string(const std::string &s);

/// One whispering-gallery resonance. V̄ is in units of (λ/n_guiding)³ and
/// refers to the traveling wave; `standing_mode_volume()` halves it.
struct ResonantMode
{
    int m = 0;
    Polarization polarization = Polarization::te;
    int radial_order = 0;
    int vertical_order = 0; ///< field nodes across the guiding-layer thickness
    double wavelength_um = 0.0;
    double q_rad = 0.0;
    std::optional<double> q_i;
    double mode_volume = 0.0;
    double eta = 0.0;
    double r_o = 0.0;
    double z_o = 0.0;
    bool standing_wave = false;
    std::optional<double> sidewall_fraction; ///< see sidewall_field_fraction()

    double q_total() const;
    double standing_mode_volume() const { return 0.5 * mode_volume; }
    /// V̄ in the convention selected by `standing_wave`.
    double reported_mode_volume() const { return standing_wave ? standing_mode_volume() : mode_volume; }
    /// Family label such as "TE0".
    std::string family() const;
};

/// Family label from polarization and radial order ("TE0", "TM1", ...).
/// Modes with nodes across the layer thickness carry a suffix ("TE0v1").
std::string family_label(Polarization p, int radial_order, int vertical_order = 0);

struct ModeClass
{
    Polarization polarization = Polarization::hybrid;
    int radial_order = 0;
    int vertical_order = 0;
    double energy_ratio = 0.0; ///< dominant / subdominant in-plane energy over the guiding layer
};

/// TE when ∫|E_r|² > ∫|E_z|² over the guiding layer, TM otherwise; hybrid when
/// the ratio of the two is below `hybrid_ratio`. The radial order counts sign
/// changes of the dominant component along the radial cut through its
/// maximum inside the guiding layer (3-cell smoothing, samples below 5% of
/// the cut maximum ignored). The vertical order counts sign changes the same
/// way along the vertical cut through that maximum.
ModeClass classify_mode(const ModeProfile &profile, const IndexMap &map, double hybrid_ratio = 1.2);

struct VolumeOverlap
{
    double mode_volume = 0.0; ///< traveling wave, units of (λ/n_guiding)³
    double eta = 0.0;
    double r_o = 0.0;
    double z_o = 0.0;
};

/// V̄ = (λ/n_g)⁻³ ∫ n²|E|² dV / (n²|E|²)(r_o) with dV = 2πr dr dz and r_o the
/// cell maximising n²|E|²; η = max_{diamond} |E| / |E(r_o)|. Diamond cells are
/// those whose n² equals the substrate value. Throws DomainError when the map
/// has no diamond cells or the grids differ.
VolumeOverlap mode_volume_and_eta(const ModeProfile &profile, const IndexMap &map);

/// Fraction of the mode energy sitting on the disk sidewall:
/// 2πR ∫₀ᵗ |E(R, z)|² dz / ∫ n²|E|² dV (units 1/μm), with |E| sampled at the
/// last guiding-layer cell of each row.
double sidewall_field_fraction(const ModeProfile &profile, const IndexMap &map, const DeviceGeometry &geometry);

struct FsrPoint
{
    std::string family;
    double wavelength_mid_um = 0.0;
    double fsr_nm = 0.0;
    int m_lower = 0; ///< the pair is (m_lower, m_lower + 1)
};

/// FSR(λ_mid) = λ_m − λ_{m+1} per family, for consecutive m. Throws
/// ValidationError for families with fewer than two modes or gaps in m.
std::vector<FsrPoint> fsr_dispersion(const std::vector<ResonantMode> &modes);

/// Lenient variant for sweep output: keeps the highest-Q mode per (family, m),
/// skips hybrids and emits pairs only across consecutive m.
std::vector<FsrPoint> fsr_dispersion_segments(const std::vector<ResonantMode> &modes);

/// 1/Q_total = 1/Q_rad + 1/Q_i. Infinite Q_rad returns Q_i.
double q_budget(double q_rad, double q_i);
std::vector<double> q_budget(const std::vector<double> &q_rad, double q_i);

struct RoughnessSpec
{
    double sigma_nm = 0.0;
    double correlation_length_nm = 0.0;
};

/// Dimensionless prefactor of the sidewall scattering estimate, fixed once
/// against σ = 3 nm, L_c = 80 nm → Q ≈ 1.7e4 for the TE₀ mode of the
/// d = 4.5 μm, t = 0.13 μm disk at 0.637 μm. The anchor mode is TE₀⁵⁶ from a
/// 10 nm grid run: λ = 0.6451 μm, F_side = 0.0749 μm⁻¹, n_g = 3.25.
inline constexpr double kRoughnessPrefactor = 0.0993;

/// Rayleigh volume-current estimate of the surface-scattering limited Q:
///   1/Q_ss = C · k₀³ · n_clad · (n_g² − n_clad²)² · σ² · L_c · t · F_side
/// with F_side the sidewall field fraction of the mode. Q_ss ∝ 1/σ² at fixed
/// L_c; σ = 0 returns +∞.
double estimate_q_roughness(const RoughnessSpec &spec, const ResonantMode &mode, const DeviceGeometry &geometry,
                            double guiding_index = 3.25, double cladding_index = 1.0);

} // namespace wgmcav

#endif // WGMCAV_MODES_HPP
