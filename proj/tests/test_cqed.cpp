#include <doctest.h>

#include <cmath>
#include <limits>

#include "wgmcav/cqed.hpp"
#include "wgmcav/units.hpp"

using namespace wgmcav;

namespace
{
ResonantMode reference_mode(double q)
{
    ResonantMode mode;
    mode.m = 56;
    mode.wavelength_um = 0.637;
    mode.q_rad = std::numeric_limits<double>::infinity();
    mode.q_i = q;
    mode.mode_volume = 18.0;
    mode.eta = 0.57;
    return mode;
}
} // namespace

TEST_SUITE("cqed")
{
    TEST_CASE("cavity decay rate")
    {
        // κ/2π = ν/(2Q) with ν = c/λ, in GHz.
        const double nu_ghz = units::kSpeedOfLight / 0.637 * 1e3;
        CHECK(kappa(0.637, 9000) == doctest::Approx(nu_ghz / 18000.0).epsilon(1e-12));
        CHECK(kappa(0.637, 9000) == doctest::Approx(26.1).epsilon(2e-3));
        CHECK(kappa(0.637, 2.5e4) == doctest::Approx(9.41).epsilon(1e-3));
        CHECK(kappa(0.637, 1e300) < 1e-290);
        CHECK(kappa(0.637, std::numeric_limits<double>::infinity()) == 0.0);
        CHECK_THROWS_AS(kappa(0.637, 0.0), ValidationError);
    }

    TEST_CASE("zero-phonon-line Purcell factor")
    {
        const double direct = 3.0 / (4.0 * units::kPi * units::kPi) * (3.25 / 2.42) * 9000.0 * 0.57 * 0.57 / 18.0;
        CHECK(purcell_zpl(9000, 18, 0.57) == doctest::Approx(direct).epsilon(1e-12));
        CHECK(purcell_zpl(9000, 18, 0.57) == doctest::Approx(16.6).epsilon(3e-3));
        CHECK(purcell_zpl(2.5e4, 18, 0.57) == doctest::Approx(46.1).epsilon(2e-3));
        CHECK(purcell_zpl(9000, 18, 0.0) == 0.0);
        // Linear in Q, quadratic in η, inverse in V̄.
        CHECK(purcell_zpl(18000, 18, 0.57) == doctest::Approx(2.0 * purcell_zpl(9000, 18, 0.57)));
        CHECK(purcell_zpl(9000, 18, 1.14) == doctest::Approx(4.0 * purcell_zpl(9000, 18, 0.57)));
        CHECK(purcell_zpl(9000, 36, 0.57) == doctest::Approx(0.5 * purcell_zpl(9000, 18, 0.57)));
        CHECK_THROWS_AS(purcell_zpl(9000, 0.0, 0.57), ValidationError);
    }

    TEST_CASE("mode record uses the volume in its own convention")
    {
        ResonantMode mode = reference_mode(9000);
        CHECK(purcell_zpl(mode) == doctest::Approx(purcell_zpl(9000, 18, 0.57)));
        mode.standing_wave = true;
        CHECK(purcell_zpl(mode) == doctest::Approx(purcell_zpl(9000, 9, 0.57)));
    }

    TEST_CASE("coherent coupling rate")
    {
        const double g = coupling_g(16.6, 26.1, 0.0004);
        CHECK(g == doctest::Approx(std::sqrt(16.6 * 26.1 * 0.0004 / 2.0)).epsilon(1e-12));
        CHECK(g == doctest::Approx(0.295).epsilon(2e-3));
        CHECK(coupling_g(4.0 * 16.6, 26.1, 0.0004) == doctest::Approx(2.0 * g));
        CHECK(coupling_g(16.6, 26.1, 0.0) == 0.0);
        CHECK_THROWS_AS(coupling_g(-1.0, 26.1, 0.0004), ValidationError);
    }

    TEST_CASE("emission fraction into the mode")
    {
        const EmitterModel nv = nv_center();
        CHECK(nv.gamma_ghz == 0.013);
        CHECK(nv.gamma_zpl_ghz == 0.0004);
        CHECK(beta(16.6, nv) == doctest::Approx(16.6 * 0.0004 / (0.013 - 0.0004 + 16.6 * 0.0004)).epsilon(1e-12));
        CHECK(beta(16.6, nv) == doctest::Approx(0.345).epsilon(3e-3));
        CHECK(beta(1.0, nv) == doctest::Approx(0.0004 / 0.013).epsilon(1e-12));
        CHECK(beta(1e12, nv) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(beta(0.0, nv) == 0.0);
    }

    TEST_CASE("emitter validation")
    {
        EmitterModel e = nv_center();
        e.gamma_zpl_ghz = 0.02;
        CHECK_THROWS_AS(validate(e), ValidationError);
        e = nv_center();
        e.gamma_zpl_ghz = 0.0;
        CHECK_THROWS_AS(validate(e), ValidationError);
    }

    TEST_CASE("Purcell and coupling round trip")
    {
        for (double q : {1e3, 9000.0, 2.5e4, 1e6}) {
            const double f = purcell_zpl(q, 18, 0.57);
            const double k = kappa(0.637, q);
            const double g = coupling_g(f, k, 0.0004);
            const double back = 2.0 * g * g / (k * 0.0004);
            CHECK(std::abs(back - f) / f < 1e-12);
        }
    }

    TEST_CASE("full chain for the reference device")
    {
        const CqedParams p = cqed_parameters(reference_mode(9000), nv_center());
        CHECK(p.kappa_ghz == doctest::Approx(26.146).epsilon(1e-4));
        CHECK(p.purcell == doctest::Approx(16.58).epsilon(1e-3));
        CHECK(p.g_ghz == doctest::Approx(0.2944).epsilon(1e-3));
        CHECK(p.beta == doctest::Approx(0.345).epsilon(3e-3));

        const CqedParams better = cqed_parameters(reference_mode(2.5e4), nv_center());
        CHECK(better.purcell == doctest::Approx(46.05).epsilon(1e-3));
        CHECK(better.kappa_ghz == doctest::Approx(9.41).epsilon(1e-3));
    }
}
