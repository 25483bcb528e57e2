#ifndef WGMCAV_ORACLE_HPP
#define WGMCAV_ORACLE_HPP

#include <functional>
#include <vector>

#include "wgmcav/device.hpp"
#include "wgmcav/modes.hpp"

/// Closed-form and one-dimensional cross-checks for the FDTD engine.
namespace wgmcav::oracle
{
/// One slab layer. The first and last layers of a stack are semi-infinite
/// and their thickness is ignored.
struct SlabLayer
{
    double index = 1.0;
    double thickness = 0.0;
};

/// Planar multilayer, listed from top to bottom.
struct SlabStack
{
    std::vector<SlabLayer> layers;
    Polarization polarization = Polarization::te;
};

struct SlabMode
{
    double n_eff = 0.0;
    double n_group = 0.0; ///< geometric group index (constant layer indices)
    int order = 0;
};

/// Throws ValidationError for fewer than three layers, non-positive inner
/// thicknesses or indices, or a hybrid polarization.
void validate(const SlabStack &stack);

/// Dispersion residual of the transfer-matrix boundary condition at n_eff,
/// normalised so that |residual| ≤ 1 and zero at a guided mode.
double slab_dispersion_residual(const SlabStack &stack, double lambda_um, double n_eff);

/// All guided modes with max(outer indices) < n_eff < max(layer index),
/// ordered by decreasing n_eff. Empty below cutoff.
std::vector<SlabMode> slab_neff(const SlabStack &stack, double lambda_um);

/// air / guiding layer (t) / diamond pedestal (h) / air, or
/// air / guiding layer / diamond when h = 0.
SlabStack device_slab(const DeviceGeometry &geometry, const MaterialSet &materials, double lambda_um,
                      Polarization polarization);

enum class BendModel
{
    straight, ///< m λ = 2π R n_eff(λ)
    airy      ///< leading Airy-zero correction for the curved boundary
};

struct WgmResonance
{
    int m = 0;
    double wavelength_um = 0.0;
};

struct WgmOptions
{
    double lambda_lo_um = 0.4;
    double lambda_hi_um = 1.2;
    BendModel model = BendModel::straight;
    Polarization polarization = Polarization::te; ///< used by the Airy model only
};

/// Solves m λ = 2π R n_eff(λ) for each m in [m_lo, m_hi] by bracketing and
/// bisection inside the wavelength window. With BendModel::airy the
/// right-hand side becomes ν + 2^{-1/3} a₁ ν^{1/3} − P/√(n²−1), ν = m + ½,
/// with P = 1/n for TE (in-plane E) and P = n for TM.
///
/// Throws DomainError when some m has no root in the window.
std::vector<WgmResonance> wgm_resonances(double radius_um, const std::function<double(double)> &n_eff, int m_lo,
                                         int m_hi, const WgmOptions &options = {});

/// λ² / (2π R n_g), in nm.
double analytic_fsr(double lambda_um, double radius_um, double n_group);

enum class CavityMode
{
    tm,
    te
};

/// n-th positive zero of J_m (derivative = false) or J_m' (derivative = true).
double bessel_zero(int m, int n, bool derivative);

/// Resonant frequency (THz) of the (m, n, p) mode of a closed PEC cylinder
/// of radius a and height L. TM needs p ≥ 0, TE needs p ≥ 1; n ≥ 1.
double pec_cylinder_modes(double radius_um, double height_um, int m, int n, int p, CavityMode type);

} // namespace wgmcav::oracle

#endif // WGMCAV_ORACLE_HPP
