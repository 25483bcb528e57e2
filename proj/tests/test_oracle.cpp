#include <doctest.h>

#include <cmath>

#include "wgmcav/oracle.hpp"
#include "wgmcav/units.hpp"

using namespace wgmcav;
using namespace wgmcav::oracle;

namespace
{
// Closed-form three-layer guide: cover n1 / core n2 (thickness t) / substrate n3.
// tan(κt) = κ(p1 + p3)/(κ² − p1 p3) with p_i = γ_i for TE and γ_i n2²/n_i² for TM.
double three_layer_equation(double n_eff, double lambda, double n1, double n2, double n3, double t, bool tm)
{
    const double k0 = 2.0 * units::kPi / lambda;
    const double kappa = k0 * std::sqrt(n2 * n2 - n_eff * n_eff);
    double p1 = k0 * std::sqrt(n_eff * n_eff - n1 * n1);
    double p3 = k0 * std::sqrt(n_eff * n_eff - n3 * n3);
    if (tm) {
        p1 *= n2 * n2 / (n1 * n1);
        p3 *= n2 * n2 / (n3 * n3);
    }
    // Written without the tangent so the function is continuous in n_eff.
    return (kappa * kappa - p1 * p3) * std::sin(kappa * t) - kappa * (p1 + p3) * std::cos(kappa * t);
}

double fundamental_three_layer(double lambda, double n1, double n2, double n3, double t, bool tm)
{
    // Scan down from the core index for the first sign change, then bisect.
    const double lo_bound = std::max(n1, n3) + 1e-9;
    const int steps = 20000;
    double prev_n = n2 - 1e-9;
    double prev_f = three_layer_equation(prev_n, lambda, n1, n2, n3, t, tm);
    for (int s = 1; s <= steps; ++s) {
        const double n = n2 - 1e-9 - (n2 - lo_bound) * s / steps;
        const double f = three_layer_equation(n, lambda, n1, n2, n3, t, tm);
        if ((f > 0) != (prev_f > 0)) {
            double a = n, b = prev_n;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (a + b);
                if ((three_layer_equation(mid, lambda, n1, n2, n3, t, tm) > 0) ==
                    (three_layer_equation(a, lambda, n1, n2, n3, t, tm) > 0))
                    a = mid;
                else
                    b = mid;
            }
            return 0.5 * (a + b);
        }
        prev_n = n;
        prev_f = f;
    }
    return NAN;
}

SlabStack three_layer(double t, Polarization p)
{
    return SlabStack{{{1.0, 0.0}, {3.25, t}, {2.42, 0.0}}, p};
}

} // namespace

TEST_CASE("slab limits")
{
    SUBCASE("thick core approaches the core index")
    {
        const auto modes = slab_neff(three_layer(20.0, Polarization::te), 0.637);
        REQUIRE(!modes.empty());
        CHECK(modes.front().n_eff == doctest::Approx(3.25).epsilon(1e-3));
        CHECK(modes.front().n_eff < 3.25);
        for (std::size_t i = 1; i < modes.size(); ++i)
            CHECK(modes[i].n_eff < modes[i - 1].n_eff);
    }
    SUBCASE("thin core is cut off")
    {
        const auto modes = slab_neff(three_layer(0.005, Polarization::te), 0.637);
        CHECK(modes.empty());
    }
}

TEST_CASE("slab roots satisfy the dispersion relation")
{
    for (Polarization p : {Polarization::te, Polarization::tm})
        for (double t : {0.13, 0.25, 0.6}) {
            const SlabStack stack = three_layer(t, p);
            for (const SlabMode &mode : slab_neff(stack, 0.637))
                CHECK(std::abs(slab_dispersion_residual(stack, 0.637, mode.n_eff)) < 1e-10);
        }
}

TEST_CASE("fundamental index grows with thickness")
{
    double previous = 0.0;
    for (double t : {0.08, 0.1, 0.13, 0.18, 0.25, 0.4}) {
        const auto modes = slab_neff(three_layer(t, Polarization::te), 0.637);
        REQUIRE(!modes.empty());
        CHECK(modes.front().n_eff > previous);
        previous = modes.front().n_eff;
    }
}

TEST_CASE("device slab matches the closed-form three-layer guide")
{
    // The 0.6 μm pedestal is many decay lengths thick, so the four-layer
    // stack reduces to air / core / diamond.
    const DeviceGeometry g = build_geometry({{"d", 4.5}, {"t", 0.13}, {"h", 0.6}});
    for (Polarization p : {Polarization::te, Polarization::tm}) {
        const SlabStack stack = device_slab(g, MaterialSet{}, 0.637, p);
        CHECK(stack.layers.size() == 4);
        const auto modes = slab_neff(stack, 0.637);
        REQUIRE(!modes.empty());
        const double expected = fundamental_three_layer(0.637, 1.0, 3.25, 2.42, 0.13, p == Polarization::tm);
        CHECK(modes.front().n_eff == doctest::Approx(expected).epsilon(1e-7));
    }
    const auto te = slab_neff(device_slab(g, MaterialSet{}, 0.637, Polarization::te), 0.637);
    CHECK(te.front().n_eff == doctest::Approx(2.895).epsilon(2e-3));

    const DeviceGeometry flat = build_geometry({{"d", 4.5}, {"t", 0.13}, {"h", 0.0}});
    CHECK(device_slab(flat, MaterialSet{}, 0.637, Polarization::te).layers.size() == 3);
}

TEST_CASE("slab validation")
{
    CHECK_THROWS_AS(validate(SlabStack{{{1.0, 0.0}, {3.25, 0.1}}, Polarization::te}), ValidationError);
    CHECK_THROWS_AS(validate(SlabStack{{{1.0, 0.0}, {3.25, 0.0}, {2.42, 0.0}}, Polarization::te}), ValidationError);
    CHECK_THROWS_AS(validate(three_layer(0.13, Polarization::hybrid)), ValidationError);
}

TEST_CASE("whispering-gallery resonance condition")
{
    const auto constant = [](double) { return 2.589; };
    const auto one = wgm_resonances(3.25, constant, 83, 83);
    REQUIRE(one.size() == 1);
    const double expected = 2.0 * units::kPi * 3.25 * 2.589 / 83.0;
    CHECK(one.front().wavelength_um == doctest::Approx(expected).epsilon(1e-9));
    CHECK(one.front().wavelength_um == doctest::Approx(0.637).epsilon(1e-3));

    const auto doubled = wgm_resonances(3.25, constant, 166, 166, WgmOptions{0.2, 1.2});
    CHECK(doubled.front().wavelength_um == doctest::Approx(0.5 * expected).epsilon(1e-9));

    const auto range = wgm_resonances(3.25, constant, 80, 85);
    REQUIRE(range.size() == 6);
    for (std::size_t i = 1; i < range.size(); ++i)
        CHECK(range[i].wavelength_um < range[i - 1].wavelength_um);

    CHECK_THROWS_AS(wgm_resonances(3.25, constant, 83, 83, WgmOptions{0.4, 0.5}), DomainError);
}

TEST_CASE("Airy correction shortens the resonance wavelength at fixed m")
{
    const auto constant = [](double) { return 2.589; };
    WgmOptions airy;
    airy.model = BendModel::airy;
    const double straight = wgm_resonances(3.25, constant, 83, 83).front().wavelength_um;
    const double curved = wgm_resonances(3.25, constant, 83, 83, airy).front().wavelength_um;
    // m λ = 2πR n with the effective m replaced by ν + 1.8558 ν^{1/3} − P/√(n²−1).
    const double nu = 83.5;
    const double n = 2.589;
    const double m_eff = nu + 1.8557571 * std::cbrt(nu) - (1.0 / n) / std::sqrt(n * n - 1.0);
    CHECK(curved < straight);
    CHECK(curved == doctest::Approx(2.0 * units::kPi * 3.25 * n / m_eff).epsilon(1e-8));
}

TEST_CASE("analytic free spectral range")
{
    const double fsr = analytic_fsr(0.637, 3.25, 2.589);
    CHECK(fsr == doctest::Approx(0.637 * 0.637 / (2.0 * units::kPi * 3.25 * 2.589) * 1e3).epsilon(1e-12));
    CHECK(fsr == doctest::Approx(7.68).epsilon(1e-3));
    CHECK(analytic_fsr(0.637, 3.25, 2.0 * 2.589) == doctest::Approx(0.5 * fsr));
    CHECK(analytic_fsr(2.0 * 0.637, 3.25, 2.589) == doctest::Approx(4.0 * fsr));
    CHECK_THROWS_AS(analytic_fsr(0.637, 0.0, 2.589), ValidationError);
}

TEST_CASE("Bessel zeros")
{
    // Published values (Abramowitz and Stegun, tables 9.5).
    CHECK(bessel_zero(0, 1, false) == doctest::Approx(2.404825557695773).epsilon(1e-12));
    CHECK(bessel_zero(0, 2, false) == doctest::Approx(5.520078110286311).epsilon(1e-12));
    CHECK(bessel_zero(1, 1, false) == doctest::Approx(3.831705970207512).epsilon(1e-12));
    CHECK(bessel_zero(1, 1, true) == doctest::Approx(1.841183781340659).epsilon(1e-12));
    CHECK(bessel_zero(0, 1, true) == doctest::Approx(3.831705970207512).epsilon(1e-12));
    CHECK(bessel_zero(2, 1, false) == doctest::Approx(5.135622301840683).epsilon(1e-12));
}

TEST_CASE("closed PEC cylinder")
{
    const double nu = pec_cylinder_modes(1.0, 1.0, 0, 1, 0, CavityMode::tm);
    CHECK(nu == doctest::Approx(2.4048 * units::kSpeedOfLight / (2.0 * units::kPi)).epsilon(1e-4));
    CHECK(nu == doctest::Approx(114.8).epsilon(1e-3));
    CHECK(pec_cylinder_modes(2.0, 1.0, 0, 1, 0, CavityMode::tm) == doctest::Approx(0.5 * nu));

    // TM_011: ν² = (χ₀₁/2πa)² + (1/2L)² in units of c.
    const double a = 1.0, L = 0.8;
    const double expected = units::kSpeedOfLight *
                            std::hypot(2.404825557695773 / (2.0 * units::kPi * a), 1.0 / (2.0 * L));
    CHECK(pec_cylinder_modes(a, L, 0, 1, 1, CavityMode::tm) == doctest::Approx(expected).epsilon(1e-10));

    CHECK_THROWS_AS(pec_cylinder_modes(1.0, 1.0, 1, 1, 0, CavityMode::te), ValidationError);
    CHECK_THROWS_AS(pec_cylinder_modes(1.0, 1.0, 0, 0, 0, CavityMode::tm), ValidationError);
}
