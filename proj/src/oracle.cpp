#include "wgmcav/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wgmcav/errors.hpp"
#include "wgmcav/units.hpp"

namespace wgmcav::oracle
{
namespace
{
constexpr int kScanPoints = 4000;

// Tangential field F (E_y for TE, H_y for TM) and its scaled derivative
// G = F'/w, with w = 1 (TE) or n² (TM), carried from the top cladding down.
struct Boundary
{
    double value;
    double scale;
};

Boundary boundary_condition(const SlabStack &stack, double k0, double n_eff)
{
    const bool tm = stack.polarization == Polarization::tm;
    const auto weight = [tm](double n) { return tm ? n * n : 1.0; };
    const auto decay = [&](double n) { return k0 * std::sqrt(std::max(0.0, n_eff * n_eff - n * n)); };

    const double n_top = stack.layers.front().index;
    double f = 1.0;
    double g = decay(n_top) / weight(n_top);
    for (std::size_t j = 1; j + 1 < stack.layers.size(); ++j) {
        const double n = stack.layers[j].index;
        const double d = stack.layers[j].thickness;
        const double w = weight(n);
        const double k2 = k0 * k0 * (n * n - n_eff * n_eff);
        double nf, ng;
        if (std::abs(k2) * d * d < 1e-24) {
            nf = f + g * w * d;
            ng = g;
        } else if (k2 > 0.0) {
            const double k = std::sqrt(k2);
            const double q = k / w;
            nf = f * std::cos(k * d) + g * std::sin(k * d) / q;
            ng = -q * f * std::sin(k * d) + g * std::cos(k * d);
        } else {
            const double k = std::sqrt(-k2);
            const double q = k / w;
            nf = f * std::cosh(k * d) + g * std::sinh(k * d) / q;
            ng = q * f * std::sinh(k * d) + g * std::cosh(k * d);
        }
        const double norm = std::max(std::abs(nf), std::abs(ng));
        f = nf / norm;
        g = ng / norm;
    }
    const double n_bot = stack.layers.back().index;
    const double tail = decay(n_bot) / weight(n_bot) * f;
    return {g + tail, std::abs(g) + std::abs(tail)};
}

std::vector<double> roots(const SlabStack &stack, double lambda_um)
{
    const double lo = std::max(stack.layers.front().index, stack.layers.back().index);
    double hi = 0.0;
    for (const auto &l : stack.layers)
        hi = std::max(hi, l.index);
    std::vector<double> out;
    if (!(hi > lo))
        return out;
    const double eps = 1e-12 * hi;
    const auto f = [&](double n) { return slab_dispersion_residual(stack, lambda_um, n); };
    double x0 = lo + eps;
    double f0 = f(x0);
    for (int j = 1; j <= kScanPoints; ++j) {
        const double x1 = lo + eps + (hi - lo - 2.0 * eps) * static_cast<double>(j) / kScanPoints;
        const double f1 = f(x1);
        if (f0 == 0.0) {
            out.push_back(x0);
        } else if (f0 * f1 < 0.0) {
            double a = x0, b = x1, fa = f0;
            for (int it = 0; it < 200 && b - a > 1e-15 * b; ++it) {
                const double c = 0.5 * (a + b);
                const double fc = f(c);
                if (fa * fc <= 0.0) {
                    b = c;
                } else {
                    a = c;
                    fa = fc;
                }
            }
            out.push_back(0.5 * (a + b));
        }
        x0 = x1;
        f0 = f1;
    }
    std::sort(out.begin(), out.end(), std::greater<>());
    return out;
}

} // namespace

void validate(const SlabStack &stack)
{
    if (stack.layers.size() < 3)
        throw ValidationError("layers", "a slab stack needs at least three layers");
    if (stack.polarization == Polarization::hybrid)
        throw ValidationError("polarization", "slab modes are TE or TM");
    for (std::size_t j = 0; j < stack.layers.size(); ++j) {
        if (!(stack.layers[j].index > 0.0))
            throw ValidationError("index", "layer indices must be positive");
        if (j > 0 && j + 1 < stack.layers.size() && !(stack.layers[j].thickness > 0.0))
            throw ValidationError("thickness", "inner layer thicknesses must be positive");
    }
}

double slab_dispersion_residual(const SlabStack &stack, double lambda_um, double n_eff)
{
    if (!(lambda_um > 0.0))
        throw ValidationError("wavelength", "wavelength must be positive");
    const Boundary b = boundary_condition(stack, 2.0 * units::kPi / lambda_um, n_eff);
    return b.scale > 0.0 ? b.value / b.scale : 0.0;
}

std::vector<SlabMode> slab_neff(const SlabStack &stack, double lambda_um)
{
    validate(stack);
    if (!(lambda_um > 0.0))
        throw ValidationError("wavelength", "wavelength must be positive");
    const std::vector<double> n = roots(stack, lambda_um);
    const double h = 1e-4 * lambda_um;
    const std::vector<double> n_minus = roots(stack, lambda_um - h);
    const std::vector<double> n_plus = roots(stack, lambda_um + h);

    std::vector<SlabMode> out;
    for (std::size_t j = 0; j < n.size(); ++j) {
        SlabMode mode;
        mode.n_eff = n[j];
        mode.order = static_cast<int>(j);
        // The same order on both sides gives a centred difference; near cutoff
        // fall back to whichever side still guides it.
        double slope = 0.0;
        if (j < n_minus.size() && j < n_plus.size())
            slope = (n_plus[j] - n_minus[j]) / (2.0 * h);
        else if (j < n_minus.size())
            slope = (n[j] - n_minus[j]) / h;
        else if (j < n_plus.size())
            slope = (n_plus[j] - n[j]) / h;
        mode.n_group = n[j] - lambda_um * slope;
        out.push_back(mode);
    }
    return out;
}

SlabStack device_slab(const DeviceGeometry &geometry, const MaterialSet &materials, double lambda_um,
                      Polarization polarization)
{
    const double n_clad = refractive_index(materials.cladding, lambda_um);
    const double n_guide = refractive_index(materials.guiding, lambda_um);
    const double n_sub = refractive_index(materials.substrate, lambda_um);
    SlabStack stack;
    stack.polarization = polarization;
    stack.layers.push_back({n_clad, 0.0});
    stack.layers.push_back({n_guide, geometry.layer_thickness});
    if (geometry.etch_depth > 0.0) {
        stack.layers.push_back({n_sub, geometry.etch_depth});
        stack.layers.push_back({n_clad, 0.0});
    } else {
        stack.layers.push_back({n_sub, 0.0});
    }
    return stack;
}

std::vector<WgmResonance> wgm_resonances(double radius_um, const std::function<double(double)> &n_eff, int m_lo,
                                         int m_hi, const WgmOptions &options)
{
    if (!(radius_um > 0.0))
        throw ValidationError("radius", "radius must be positive");
    if (m_lo < 1 || m_hi < m_lo)
        throw ValidationError("m_range", "m range must satisfy 1 <= m_lo <= m_hi");
    if (!(options.lambda_hi_um > options.lambda_lo_um) || !(options.lambda_lo_um > 0.0))
        throw ValidationError("window", "wavelength window must satisfy 0 < lo < hi");

    const double airy = 1.8557571; // 2^{-1/3} times the first zero of Ai(-x)
    const auto mismatch = [&](int m, double lambda) {
        const double n = n_eff(lambda);
        double target = static_cast<double>(m);
        if (options.model == BendModel::airy) {
            const double nu = m + 0.5;
            const double p = options.polarization == Polarization::tm ? n : 1.0 / n;
            target = nu + airy * std::cbrt(nu) - p / std::sqrt(n * n - 1.0);
        }
        return 2.0 * units::kPi * radius_um * n / lambda - target;
    };

    std::vector<WgmResonance> out;
    constexpr int scan = 400;
    for (int m = m_lo; m <= m_hi; ++m) {
        double found = -1.0;
        double a = options.lambda_lo_um;
        double fa = mismatch(m, a);
        for (int j = 1; j <= scan && found < 0.0; ++j) {
            const double b = options.lambda_lo_um +
                             (options.lambda_hi_um - options.lambda_lo_um) * static_cast<double>(j) / scan;
            const double fb = mismatch(m, b);
            if (fa == 0.0) {
                found = a;
            } else if (fa * fb < 0.0) {
                double lo = a, hi = b, flo = fa;
                for (int it = 0; it < 100 && hi - lo > 1e-14; ++it) {
                    const double c = 0.5 * (lo + hi);
                    const double fc = mismatch(m, c);
                    if (flo * fc <= 0.0) {
                        hi = c;
                    } else {
                        lo = c;
                        flo = fc;
                    }
                }
                found = 0.5 * (lo + hi);
            }
            a = b;
            fa = fb;
        }
        if (found < 0.0) {
            std::ostringstream os;
            os << "no resonance for m = " << m << " in [" << options.lambda_lo_um << ", " << options.lambda_hi_um
               << "] um";
            throw DomainError(os.str());
        }
        out.push_back({m, found});
    }
    return out;
}

double analytic_fsr(double lambda_um, double radius_um, double n_group)
{
    if (!(lambda_um > 0.0) || !(radius_um > 0.0) || !(n_group > 0.0))
        throw ValidationError("fsr", "wavelength, radius and group index must be positive");
    return lambda_um * lambda_um / (2.0 * units::kPi * radius_um * n_group) * 1e3;
}

double bessel_zero(int m, int n, bool derivative)
{
    if (m < 0 || n < 1)
        throw ValidationError("mode_indices", "Bessel zeros need m >= 0 and n >= 1");
    const double nu = static_cast<double>(m);
    const auto f = [&](double x) {
        if (!derivative)
            return std::cyl_bessel_j(nu, x);
        if (m == 0)
            return -std::cyl_bessel_j(1.0, x);
        return 0.5 * (std::cyl_bessel_j(nu - 1.0, x) - std::cyl_bessel_j(nu + 1.0, x));
    };
    // Zeros are at least ~π apart; a step of 0.05 cannot skip one.
    const double step = 0.05;
    double a = 0.01 + (derivative ? std::max(0.0, nu - 1.0) : nu);
    double fa = f(a);
    int count = 0;
    for (int j = 0; j < 1000000; ++j) {
        const double b = a + step;
        const double fb = f(b);
        if (fa * fb < 0.0) {
            double lo = a, hi = b, flo = fa;
            for (int it = 0; it < 100 && hi - lo > 1e-15 * hi; ++it) {
                const double c = 0.5 * (lo + hi);
                const double fc = f(c);
                if (flo * fc <= 0.0) {
                    hi = c;
                } else {
                    lo = c;
                    flo = fc;
                }
            }
            if (++count == n)
                return 0.5 * (lo + hi);
        }
        a = b;
        fa = fb;
    }
    throw NumericalError("Bessel zero search did not converge");
}

double pec_cylinder_modes(double radius_um, double height_um, int m, int n, int p, CavityMode type)
{
    if (!(radius_um > 0.0))
        throw ValidationError("radius", "radius must be positive");
    if (m < 0 || n < 1)
        throw ValidationError("mode_indices", "cylinder modes need m >= 0 and n >= 1");
    if (type == CavityMode::tm && p < 0)
        throw ValidationError("mode_indices", "TM cylinder modes need p >= 0");
    if (type == CavityMode::te && p < 1)
        throw ValidationError("mode_indices", "TE cylinder modes need p >= 1");
    if (p > 0 && !(height_um > 0.0))
        throw ValidationError("height", "height must be positive for p > 0");
    const double chi = bessel_zero(m, n, type == CavityMode::te);
    const double kr = chi / radius_um;
    const double kz = p > 0 ? static_cast<double>(p) * units::kPi / height_um : 0.0;
    return units::kSpeedOfLight / (2.0 * units::kPi) * std::hypot(kr, kz);
}

} // namespace wgmcav::oracle
