#include <doctest.h>

#include <cmath>
#include <limits>

#include "wgmcav/modes.hpp"
#include "wgmcav/oracle.hpp"
#include "wgmcav/units.hpp"

using namespace wgmcav;

namespace
{
constexpr double kGuiding = 3.25 * 3.25;
constexpr double kDiamond = 2.42 * 2.42;

/// Small hand-built map: air everywhere, a guiding block for i in [i0, i1),
/// k in [k0, k1), and a diamond block below it.
IndexMap block_map(Eigen::Index i0, Eigen::Index i1, Eigen::Index k0, Eigen::Index k1)
{
    IndexMap map;
    map.dr = map.dz = 0.01;
    map.r_min = 1.0;
    map.z_min = -0.2;
    map.guiding_eps = kGuiding;
    map.substrate_eps = kDiamond;
    map.cladding_eps = 1.0;
    map.eps = Eigen::ArrayXXd::Ones(80, 60);
    map.eps.block(i0, k0, i1 - i0, k1 - k0) = kGuiding;
    map.eps.block(i0, 0, i1 - i0, k0) = kDiamond;
    return map;
}

ModeProfile empty_profile(const IndexMap &map, double wavelength)
{
    ModeProfile p;
    p.wavelength_um = wavelength;
    p.r_min = map.r_min;
    p.z_min = map.z_min;
    p.dr = map.dr;
    p.dz = map.dz;
    p.er = Eigen::ArrayXXcd::Zero(map.nr(), map.nz());
    p.ep = p.er;
    p.ez = p.er;
    return p;
}

ResonantMode mode_at(int m, double lambda, Polarization p = Polarization::te, int order = 0)
{
    ResonantMode mode;
    mode.m = m;
    mode.wavelength_um = lambda;
    mode.polarization = p;
    mode.radial_order = order;
    mode.q_rad = 1e5;
    return mode;
}

} // namespace

TEST_SUITE("modes")
{
    TEST_CASE("classification of synthetic profiles")
    {
        const IndexMap map = block_map(20, 70, 20, 33);
        ModeProfile p = empty_profile(map, 0.637);
        const double rc = map.r_center(50);
        for (Eigen::Index k = 0; k < map.nz(); ++k)
            for (Eigen::Index i = 0; i < map.nr(); ++i) {
                const double x = (map.r_center(i) - rc) / 0.08;
                p.er(i, k) = std::exp(-x * x);
                p.ez(i, k) = 0.1 * std::exp(-x * x);
            }
        SUBCASE("single radial lobe of E_r")
        {
            const ModeClass c = classify_mode(p, map);
            CHECK(c.polarization == Polarization::te);
            CHECK(c.radial_order == 0);
            CHECK(c.vertical_order == 0);
            CHECK(c.energy_ratio == doctest::Approx(100.0));
        }
        SUBCASE("antisymmetric across the layer")
        {
            const double zc = map.z_center(26);
            for (Eigen::Index k = 0; k < map.nz(); ++k)
                for (Eigen::Index i = 0; i < map.nr(); ++i)
                    p.er(i, k) *= (map.z_center(k) - zc) / 0.02;
            const ModeClass c = classify_mode(p, map);
            CHECK(c.radial_order == 0);
            CHECK(c.vertical_order == 1);
        }
        SUBCASE("two radial lobes of E_r")
        {
            for (Eigen::Index k = 0; k < map.nz(); ++k)
                for (Eigen::Index i = 0; i < map.nr(); ++i) {
                    const double x = (map.r_center(i) - rc) / 0.08;
                    p.er(i, k) *= std::complex<double>(0.0, x);
                }
            const ModeClass c = classify_mode(p, map);
            CHECK(c.polarization == Polarization::te);
            CHECK(c.radial_order == 1);
        }
        SUBCASE("dominant E_z")
        {
            p.er.swap(p.ez);
            const ModeClass c = classify_mode(p, map);
            CHECK(c.polarization == Polarization::tm);
            CHECK(c.radial_order == 0);
        }
        SUBCASE("equal in-plane energies")
        {
            p.ez = p.er;
            const ModeClass c = classify_mode(p, map);
            CHECK(c.polarization == Polarization::hybrid);
            CHECK(c.energy_ratio == doctest::Approx(1.0));
        }
    }

    TEST_CASE("uniform box field gives unit volume")
    {
        const IndexMap map = block_map(20, 70, 20, 33);
        ModeProfile p = empty_profile(map, 1.0);
        double volume = 0.0;
        for (Eigen::Index k = 20; k < 33; ++k)
            for (Eigen::Index i = 20; i < 70; ++i) {
                p.er(i, k) = 1.0;
                volume += 2.0 * units::kPi * map.r_center(i) * map.dr * map.dz;
            }
        // Choose λ so the filled volume is exactly (λ/n)³.
        p.wavelength_um = std::cbrt(volume) * 3.25;
        const VolumeOverlap v = mode_volume_and_eta(p, map);
        CHECK(v.mode_volume == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(v.eta == 0.0);
        CHECK(v.z_o > 0.0);
    }

    TEST_CASE("eta compares the diamond field with the peak")
    {
        const IndexMap map = block_map(20, 70, 20, 33);
        ModeProfile p = empty_profile(map, 0.637);
        p.er(40, 25) = 1.0;
        p.er(40, 19) = 0.5;
        const VolumeOverlap v = mode_volume_and_eta(p, map);
        CHECK(v.eta == doctest::Approx(0.5));
        CHECK(v.r_o == doctest::Approx(map.r_center(40)));

        IndexMap no_diamond = map;
        no_diamond.eps = (no_diamond.eps == kDiamond).select(1.0, no_diamond.eps);
        CHECK_THROWS_AS(mode_volume_and_eta(p, no_diamond), DomainError);
    }

    TEST_CASE("sidewall fraction of a uniform disk field")
    {
        const IndexMap map = block_map(0, 70, 20, 33);
        ModeProfile p = empty_profile(map, 0.637);
        p.er.block(0, 20, 70, 13) = 1.0;
        DeviceGeometry g;
        g.layer_thickness = 0.13;
        const double r_edge = map.r_min + 70 * map.dr;
        g.disk_diameter = 2.0 * r_edge;
        const double energy = kGuiding * units::kPi * (r_edge * r_edge - map.r_min * map.r_min) * 0.13;
        const double expected = 2.0 * units::kPi * r_edge * 0.13 / energy;
        CHECK(sidewall_field_fraction(p, map, g) == doctest::Approx(expected).epsilon(1e-9));
    }

    TEST_CASE("free spectral range per family")
    {
        const std::vector<ResonantMode> modes{mode_at(83, 0.6400), mode_at(82, 0.6477)};
        const auto points = fsr_dispersion(modes);
        REQUIRE(points.size() == 1);
        CHECK(points[0].family == "TE0");
        CHECK(points[0].m_lower == 82);
        CHECK(points[0].fsr_nm == doctest::Approx(7.7).epsilon(1e-9));
        CHECK(points[0].wavelength_mid_um == doctest::Approx(0.64385));

        // The analytic formula with the pair's own group index reproduces it.
        const double radius = 3.25;
        const double n_g = points[0].wavelength_mid_um * points[0].wavelength_mid_um /
                           (2.0 * units::kPi * radius * points[0].fsr_nm * 1e-3);
        CHECK(oracle::analytic_fsr(points[0].wavelength_mid_um, radius, n_g) == doctest::Approx(7.7).epsilon(1e-12));

        CHECK_THROWS_AS(fsr_dispersion({mode_at(83, 0.64)}), ValidationError);
        CHECK_THROWS_AS(fsr_dispersion({mode_at(83, 0.64), mode_at(81, 0.655)}), ValidationError);
    }

    TEST_CASE("lenient FSR segments for sweep output")
    {
        std::vector<ResonantMode> modes{mode_at(80, 0.660), mode_at(81, 0.652), mode_at(83, 0.637),
                                        mode_at(84, 0.630), mode_at(84, 0.6305), mode_at(81, 0.6522, Polarization::hybrid),
                                        mode_at(80, 0.662, Polarization::tm)};
        modes[4].q_rad = 10.0;
        const auto points = fsr_dispersion_segments(modes);
        REQUIRE(points.size() == 2);
        CHECK(points[0].m_lower == 80);
        CHECK(points[0].fsr_nm == doctest::Approx(8.0));
        CHECK(points[1].m_lower == 83);
        CHECK(points[1].fsr_nm == doctest::Approx(7.0));
    }

    TEST_CASE("quality factor budget")
    {
        CHECK(q_budget(1e6, 9000) == doctest::Approx(8920).epsilon(1e-4));
        CHECK(q_budget(9000, 9000) == doctest::Approx(4500));
        CHECK(q_budget(std::numeric_limits<double>::infinity(), 9000) == 9000.0);
        CHECK_THROWS_AS(q_budget(0.0, 9000), ValidationError);
        const auto many = q_budget(std::vector<double>{1e6, 9000}, 9000);
        CHECK(many[1] == doctest::Approx(4500));

        ResonantMode m = mode_at(56, 0.637);
        CHECK(m.q_total() == 1e5);
        m.q_i = 1e5;
        CHECK(m.q_total() == doctest::Approx(5e4));
    }

    TEST_CASE("sidewall roughness estimate")
    {
        const DeviceGeometry g = build_geometry({{"d", 4.5}, {"t", 0.13}, {"h", 0.6}});
        ResonantMode te0 = mode_at(56, 0.6451);
        te0.sidewall_fraction = 0.0749;
        const double q = estimate_q_roughness({3.0, 80.0}, te0, g);
        CHECK(q > 1.7e4 / 2.0);
        CHECK(q < 1.7e4 * 2.0);
        CHECK(q == doctest::Approx(1.7e4).epsilon(0.01));
        CHECK(estimate_q_roughness({1.5, 80.0}, te0, g) == doctest::Approx(4.0 * q).epsilon(1e-12));
        CHECK(std::isinf(estimate_q_roughness({0.0, 80.0}, te0, g)));

        ResonantMode bare = mode_at(56, 0.6451);
        CHECK_THROWS_AS(estimate_q_roughness({3.0, 80.0}, bare, g), ValidationError);
        CHECK_THROWS_AS(estimate_q_roughness({3.0, 0.0}, te0, g), ValidationError);
    }

    TEST_CASE("labels")
    {
        CHECK(family_label(Polarization::tm, 1) == "TM1");
        CHECK(family_label(Polarization::te, 0, 1) == "TE0v1");
        CHECK(polarization_from_string("TE") == Polarization::te);
        CHECK_THROWS_AS(polarization_from_string("TEM"), ValidationError);
        ResonantMode m = mode_at(56, 0.637);
        m.mode_volume = 37.2;
        CHECK(m.reported_mode_volume() == 37.2);
        m.standing_wave = true;
        CHECK(m.reported_mode_volume() == doctest::Approx(18.6));
    }
}
