#ifndef WGMCAV_FDTD_HPP
#define WGMCAV_FDTD_HPP

#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wgmcav/device.hpp"

/// Body-of-revolution FDTD on the (r, z) half plane with fields ∝ e^{imφ}.
///
/// The azimuthal dependence is removed analytically. Storing E_φ, H_r and H_z
/// divided by i makes the update operator real for fixed m, so a real source
/// gives real fields and a complex source amplitude evolves its real and
/// imaginary parts independently. Units inside the engine: c = 1, lengths in
/// μm, time in μm/c; the public API uses THz and ps.
///
/// Yee layout (i: radial index, k: axial index, r_i = r_min + i dr):
///   E_r (i+½, k)   E_φ (i, k)     E_z (i, k+½)
///   H_r (i, k+½)   H_φ (i+½, k+½) H_z (i+½, k)
/// The inner boundary r_min is a perfect conductor (or the axis when r_min = 0);
/// the outer r, top and bottom edges carry a convolutional PML backed by PEC.
namespace wgmcav
{
enum class FieldComponent
{
    er,
    ep,
    ez,
    hr,
    hp,
    hz
};

const char *to_string(FieldComponent c);
FieldComponent field_component_from_string(const std::string &name);

enum class Orientation
{
    radial,
    azimuthal,
    axial
};

struct PmlSpec
{
    int cells = 12;
    double grading_order = 3.0;
    double target_reflection = 1e-6;
    double cfs_alpha = 0.05; ///< complex-frequency shift at the PML entrance, in c/μm
};

struct SourceSpec
{
    double r = 0.0;
    double z = 0.0;
    Orientation orientation = Orientation::radial;
    double center_thz = 470.0;
    double width_thz = 30.0;                  ///< Gaussian σ in frequency
    std::complex<double> amplitude = 1.0;
    std::optional<double> turn_off_ps;        ///< defaults to 10 σ_t
};

struct ProbeSpec
{
    std::string id;
    double r = 0.0;
    double z = 0.0;
    std::vector<FieldComponent> components{FieldComponent::er, FieldComponent::ep, FieldComponent::ez};
};

struct SimConfig
{
    int m = 0;
    IndexMap index_map;
    PmlSpec pml;
    SourceSpec source;
    std::vector<ProbeSpec> probes;
    double courant = 0.5;
    long steps_after_source = 1L << 16;
    bool check_finite = false;       ///< NaN checks every 256 steps
};

/// Complex samples of one field component at one probe, uniformly spaced.
struct TimeSeries
{
    std::string probe_id;
    FieldComponent component = FieldComponent::er;
    double dt_ps = 0.0;
    double t0_ps = 0.0;
    std::vector<std::complex<double>> samples;
};

/// Physical E-field components interpolated to the cell centres of the
/// source IndexMap (same grid metadata).
struct ModeProfile
{
    double wavelength_um = 0.0;
    int m = 0;
    double r_min = 0.0;
    double z_min = 0.0;
    double dr = 0.0;
    double dz = 0.0;
    Eigen::ArrayXXcd er;
    Eigen::ArrayXXcd ep;
    Eigen::ArrayXXcd ez;
    std::string normalization = "traveling-wave";
    double raw_norm = 0.0; ///< sqrt(Σ|E|²) of the accumulated DFT before normalisation
    std::vector<std::string> warnings;

    Eigen::Index nr() const { return er.rows(); }
    Eigen::Index nz() const { return er.cols(); }
    double r_center(Eigen::Index i) const { return r_min + (static_cast<double>(i) + 0.5) * dr; }
    double z_center(Eigen::Index k) const { return z_min + (static_cast<double>(k) + 0.5) * dz; }
    Eigen::ArrayXXd intensity() const { return er.abs2() + ep.abs2() + ez.abs2(); }
};

/// Time-step data that depends only on the grid, m and dt.
template <typename Scalar>
struct Operators
{
    using Field = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Column = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    using Row = Eigen::Array<Scalar, 1, Eigen::Dynamic>;

    Eigen::Index nr = 0, nz = 0;
    double dr = 0.0, dz = 0.0, dt = 0.0;
    int m = 0;
    bool axis = false;

    Column m_over_r_int;   ///< m / r_i at integer radii (0 on the axis)
    Column m_over_r_half;  ///< m / r_{i+½}
    Column r_int, r_half;
    Column inv_r_int;      ///< 1 / r_i on interior rows (0 on the axis)
    Column inv_r_half;
    Field ce_r, ce_p, ce_z; ///< dt / ε at each E location
    Field eps_r, eps_p, eps_z;

    // CPML recursion coefficients; σ = 0 outside the absorbing layers.
    int pml = 0;
    Column b_r_int, a_r_int, b_r_half, a_r_half;
    Row b_z_int, a_z_int, b_z_half, a_z_half;
};

template <typename Scalar>
struct FieldSet
{
    using Field = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Field er, ep, ez, hr, hp, hz;
    // PML memory variables, named by the field they update and the derivative axis.
    Field psi_hr_z, psi_hp_z, psi_hp_r, psi_hz_r;
    Field psi_er_z, psi_ep_z, psi_ep_r, psi_ez_r;
};

/// Largest stable time step (engine units) for the discrete curl-curl
/// operator of this map and m, from power iteration on the lossless system.
double max_stable_dt(const IndexMap &map, int m);

/// Time step the engine will use: courant · min(dr, dz) reduced by
/// max(1, m dr / r_min) to absorb the m/r stiffness near the inner edge.
double default_time_step(const IndexMap &map, int m, double courant);

/// One BOR-FDTD run. Scalar is double for real sources and
/// std::complex<double> for complex source amplitudes.
template <typename Scalar>
class Simulation
{
public:
    using Field = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    /// Validates the configuration, precomputes coefficients and zeroes the
    /// fields. Throws ValidationError for an unstable time step or a source or
    /// probe inside the PML.
    explicit Simulation(SimConfig config);

    /// Advances H by a half step and E by a full step, injecting the source.
    void step();

    long step_index() const { return step_; }
    double dt() const { return ops_.dt; }
    double dt_ps() const;
    double time() const { return static_cast<double>(step_) * ops_.dt; }
    long source_steps() const { return source_steps_; }
    long total_steps() const { return source_steps_ + config_.steps_after_source; }

    const SimConfig &config() const { return config_; }
    const Operators<Scalar> &operators() const { return ops_; }
    const FieldSet<Scalar> &fields() const { return fields_; }
    FieldSet<Scalar> &mutable_fields() { return fields_; }
    const Field &field(FieldComponent c) const;

    /// Σ (ε|E|² + |H|²) 2πr dr dz at the current (staggered) instant.
    double energy() const;
    /// ε|E^n|² + H^{n-½}·H^{n+½}: invariant of the lossless leapfrog scheme.
    double conserved_energy() const;

    Scalar probe_value(const ProbeSpec &probe, FieldComponent c) const;
    bool all_finite() const;

    /// Source waveform (before amplitude) at engine time t.
    double source_waveform(double t) const;

private:
    SimConfig config_;
    Operators<Scalar> ops_;
    FieldSet<Scalar> fields_;
    long step_ = 0;
    long source_steps_ = 0;
    double sigma_t_ = 0.0;
    double t_peak_ = 0.0;
    double f0_ = 0.0;
    Eigen::Index src_i_ = 0, src_k_ = 0;
};

extern template class Simulation<double>;
extern template class Simulation<std::complex<double>>;

/// Yee indices of the sample location nearest (r, z) for a component.
std::pair<Eigen::Index, Eigen::Index> yee_index(const IndexMap &map, FieldComponent c, double r, double z);

/// Throws ValidationError when the point falls in the PML or outside the grid.
void require_outside_pml(const IndexMap &map, int pml_cells, double r, double z, const std::string &what);

Simulation<double> init_simulation(const SimConfig &config);

template <typename Scalar>
void step(Simulation<Scalar> &simulation)
{
    simulation.step();
}

/// Runs init + steps and records every probe component after source turn-off.
/// Throws NumericalError when the fields blow up.
std::vector<TimeSeries> run_ringdown(const SimConfig &config);

struct ProfileResult
{
    std::vector<ModeProfile> profiles;
    std::vector<TimeSeries> series;
};

/// Runs the simulation accumulating a running DFT of E at each target
/// frequency over the post-source window (optionally only its last
/// `window_steps` steps). Profiles are peak-normalised with the dominant
/// component's phase removed at the intensity maximum.
///
/// When `q_values` holds the quality factor of every target, each target is
/// treated as a damped resonance and the overlapping DFTs are demixed: the
/// exact discrete kernel K(j, k) of resonance k seen by the DFT at target j is
/// accumulated alongside the fields and K a = D is solved cell by cell. This
/// separates resonances closer than the DFT resolution.
ProfileResult accumulate_profiles(const SimConfig &config, std::span<const double> targets_thz,
                                  std::optional<long> window_steps = std::nullopt,
                                  std::span<const double> q_values = {});

ModeProfile accumulate_profile(const SimConfig &config, double target_thz,
                               std::optional<long> window_steps = std::nullopt);

} // namespace wgmcav

#endif // WGMCAV_FDTD_HPP
