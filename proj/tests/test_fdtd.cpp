#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>

#include "wgmcav/fdtd.hpp"
#include "wgmcav/harminv.hpp"
#include "wgmcav/oracle.hpp"
#include "wgmcav/units.hpp"

using namespace wgmcav;

namespace
{
SimConfig base_config(IndexMap map, int m, int pml_cells)
{
    SimConfig c;
    c.m = m;
    map.pml_cells = pml_cells;
    c.index_map = std::move(map);
    c.pml.cells = pml_cells;
    c.source.orientation = Orientation::radial;
    return c;
}

// Closed PEC cylinder of radius 1 μm and height 0.4 μm, on the axis.
SimConfig pec_cylinder(double spacing)
{
    SimConfig c = base_config(uniform_map(1.0, 0.0, 1.0, 0.0, 0.4, spacing, spacing, 0), 0, 0);
    c.source.orientation = Orientation::axial;
    c.source.r = 0.3;
    c.source.z = 0.2;
    c.source.center_thz = 114.8;
    c.source.width_thz = 15.0;
    c.steps_after_source = 20000;
    c.probes.push_back({"p", 0.3, 0.2, {FieldComponent::ez}});
    return c;
}

double max_abs(const Eigen::ArrayXXd &a) { return a.abs().maxCoeff(); }

} // namespace

TEST_SUITE("fdtd")
{
    TEST_CASE("initial state")
    {
        SimConfig c = base_config(uniform_map(4.0, 1.0, 2.0, -0.5, 0.5, 0.02, 0.02, 12), 10, 12);
        c.source.r = 1.4;
        c.probes.push_back({"a", 1.3, 0.1});
        Simulation<double> sim(c);
        CHECK(sim.step_index() == 0);
        const auto &f = sim.fields();
        for (const auto *a : {&f.er, &f.ep, &f.ez, &f.hr, &f.hp, &f.hz})
            CHECK(max_abs(*a) == 0.0);
        CHECK(sim.energy() == 0.0);
        CHECK(sim.dt() == doctest::Approx(default_time_step(c.index_map, 10, 0.5)));
        CHECK(sim.dt() < max_stable_dt(c.index_map, 10));
    }

    TEST_CASE("time step checked against the numerical stability bound")
    {
        // The bound comes from power iteration on the discrete curl-curl
        // operator, so it includes the m/r coupling. Power iteration approaches
        // the largest eigenvalue from below, hence the 2% margin.
        int rejected = 0;
        for (double r_min : {0.05, 0.2, 0.5, 0.8, 1.5}) {
            SimConfig c = base_config(uniform_map(1.0, r_min, r_min + 0.6, -0.3, 0.3, 0.01, 0.01, 0), 80, 0);
            c.courant = 0.99;
            c.source.r = r_min + 0.3;
            const bool unstable = default_time_step(c.index_map, 80, 0.99) > 0.98 * max_stable_dt(c.index_map, 80);
            if (unstable) {
                CHECK_THROWS_AS(Simulation<double>{c}, ValidationError);
                ++rejected;
            } else {
                CHECK_NOTHROW(Simulation<double>{c});
            }
            c.courant = 0.5;
            CHECK_NOTHROW(Simulation<double>{c});
        }
        CHECK(rejected >= 2);
        SimConfig c = base_config(uniform_map(1.0, 0.8, 1.4, -0.3, 0.3, 0.01, 0.01, 0), 80, 0);
        c.courant = 0.99;
        c.source.r = 1.1;
        CHECK_THROWS_AS(Simulation<double>{c}, ValidationError);
    }

    TEST_CASE("placement checks")
    {
        SimConfig c = base_config(uniform_map(1.0, 1.0, 2.0, -0.5, 0.5, 0.02, 0.02, 12), 10, 12);
        c.source.r = 1.4;
        c.probes.push_back({"edge", 1.95, 0.0});
        CHECK_THROWS_AS(Simulation<double>{c}, ValidationError);
        c.probes.clear();
        c.source.z = 0.45;
        CHECK_THROWS_AS(Simulation<double>{c}, ValidationError);
        c.source.z = 0.0;
        c.probes.push_back({"out", 2.5, 0.0});
        CHECK_THROWS_AS(Simulation<double>{c}, ValidationError);
    }

    TEST_CASE("pulse travels at c/n")
    {
        // Coaxial TEM pulse between PEC walls: E_r ∝ 1/r is divergence free on
        // the staggered grid and propagates like a plane wave along z.
        // The pulse spectrum falls to e⁻² at 20 cells per wavelength in the medium.
        const double dx = 0.025, n = 2.0;
        const double k_edge = 2.0 * units::kPi / (20.0 * dx);
        const double sigma = 2.0 / k_edge;
        SimConfig c = base_config(uniform_map(n * n, 1.0, 1.5, 0.0, 16.0, dx, dx, 0), 0, 0);
        c.source.amplitude = 0.0;
        c.source.r = 1.25;
        c.source.z = 1.0;
        Simulation<double> sim(c);
        const auto &ops = sim.operators();
        auto &er = sim.mutable_fields().er;
        for (Eigen::Index k = 0; k < er.cols(); ++k) {
            const double z = c.index_map.z_min + static_cast<double>(k) * dx;
            const double g = std::exp(-0.5 * std::pow((z - 4.0) / sigma, 2));
            for (Eigen::Index i = 0; i < er.rows(); ++i)
                er(i, k) = g / ops.r_half(i);
        }
        const ProbeSpec p1{"near", 1.25, 7.0, {FieldComponent::er}};
        const ProbeSpec p2{"far", 1.25, 11.0, {FieldComponent::er}};
        double w1 = 0, t1 = 0, w2 = 0, t2 = 0;
        while (sim.time() < 20.0) {
            sim.step();
            const double t = sim.time();
            const double a = sim.probe_value(p1, FieldComponent::er), b = sim.probe_value(p2, FieldComponent::er);
            if (t < 12.0) {
                w1 += a * a;
                t1 += t * a * a;
            }
            if (t > 8.0) {
                w2 += b * b;
                t2 += t * b * b;
            }
        }
        const double speed = 4.0 / (t2 / w2 - t1 / w1);
        CHECK(speed == doctest::Approx(1.0 / n).epsilon(0.01));
    }

    TEST_CASE("closed lossless cavity conserves energy")
    {
        SimConfig c = base_config(uniform_map(2.0, 0.5, 1.5, 0.0, 1.0, 0.02, 0.02, 0), 3, 0);
        c.source.r = 1.0;
        c.source.z = 0.5;
        c.source.center_thz = 300.0;
        c.source.width_thz = 40.0;
        Simulation<double> sim(c);
        while (sim.step_index() < sim.source_steps())
            sim.step();
        const double e0 = sim.conserved_energy();
        REQUIRE(e0 > 0.0);
        for (int s = 0; s < 10000; ++s)
            sim.step();
        CHECK(std::abs(sim.conserved_energy() - e0) / e0 <= 1e-10);
    }

    TEST_CASE("m = 0 decouples the azimuthal electric family")
    {
        for (Orientation o : {Orientation::radial, Orientation::axial}) {
            SimConfig c = base_config(uniform_map(2.0, 0.5, 1.5, -0.5, 0.5, 0.02, 0.02, 8), 0, 8);
            c.source.r = 1.0;
            c.source.orientation = o;
            Simulation<double> sim(c);
            for (int s = 0; s < 1500; ++s)
                sim.step();
            const auto &f = sim.fields();
            CHECK(max_abs(f.er) + max_abs(f.ez) > 0.0);
            CHECK(max_abs(f.ep) == 0.0);
            CHECK(max_abs(f.hr) == 0.0);
            CHECK(max_abs(f.hz) == 0.0);
        }
    }

    TEST_CASE("zero source gives zero series")
    {
        SimConfig c = base_config(uniform_map(2.0, 0.5, 1.5, -0.5, 0.5, 0.02, 0.02, 8), 5, 8);
        c.source.r = 1.0;
        c.source.amplitude = 0.0;
        c.steps_after_source = 500;
        c.probes.push_back({"a", 0.9, 0.1});
        const auto series = run_ringdown(c);
        REQUIRE(series.size() == 3);
        for (const auto &s : series) {
            CHECK(s.samples.size() == 500);
            for (const auto &v : s.samples)
                CHECK(v == std::complex<double>(0.0));
        }
    }

    TEST_CASE("conjugated source amplitude gives conjugated fields")
    {
        SimConfig c = base_config(uniform_map(2.0, 0.5, 1.5, -0.5, 0.5, 0.02, 0.02, 8), 7, 8);
        c.source.r = 1.0;
        c.source.amplitude = {0.3, 0.7};
        c.steps_after_source = 400;
        c.probes.push_back({"a", 0.9, 0.1});
        const auto forward = run_ringdown(c);
        c.source.amplitude = std::conj(c.source.amplitude);
        const auto mirrored = run_ringdown(c);
        c.source.amplitude = 1.0;
        const auto real = run_ringdown(c);
        double peak = 0.0, worst = 0.0, worst_linear = 0.0;
        for (std::size_t s = 0; s < forward.size(); ++s)
            for (std::size_t j = 0; j < forward[s].samples.size(); ++j) {
                peak = std::max(peak, std::abs(forward[s].samples[j]));
                worst = std::max(worst, std::abs(forward[s].samples[j] - std::conj(mirrored[s].samples[j])));
                worst_linear = std::max(
                    worst_linear, std::abs(forward[s].samples[j] - std::complex<double>(0.3, 0.7) * real[s].samples[j]));
            }
        REQUIRE(peak > 0.0);
        CHECK(worst <= 1e-12 * peak);
        CHECK(worst_linear <= 1e-12 * peak);
    }

    TEST_CASE("absorbing boundary reflection")
    {
        // Same run with the top boundary near the probe and far away; the
        // difference inside the window is the wave reflected by the top PML.
        const double dx = 0.025;
        auto make = [&](double z_top) {
            SimConfig c = base_config(uniform_map(1.0, 2.0, 4.5 + 12 * dx, -1.5 - 12 * dx, z_top + 12 * dx, dx, dx, 12),
                                      0, 12);
            c.source.r = 3.2;
            c.source.z = 0.0;
            c.source.center_thz = 300.0;
            c.source.width_thz = 40.0;
            c.probes.push_back({"top", 3.2, 1.3, {FieldComponent::er}});
            return c;
        };
        Simulation<double> near(make(1.5)), far(make(9.5));
        REQUIRE(near.dt() == far.dt());
        const ProbeSpec probe{"top", 3.2, 1.3, {FieldComponent::er}};
        double incident = 0.0, reflected = 0.0;
        while (far.time() < 17.0) {
            near.step();
            far.step();
            const double a = near.probe_value(probe, FieldComponent::er);
            const double b = far.probe_value(probe, FieldComponent::er);
            incident = std::max(incident, std::abs(b));
            reflected = std::max(reflected, std::abs(a - b));
        }
        REQUIRE(incident > 0.0);
        CHECK(reflected / incident <= 1e-4);
    }

    TEST_CASE("closed cylinder ringdown recovers the TM010 frequency")
    {
        const SimConfig c = pec_cylinder(0.02);
        const auto series = run_ringdown(c);
        REQUIRE(series.size() == 1);
        const auto found = harmonic_inversion(series.front(), {90.0, 140.0});
        REQUIRE(!found.empty());
        const double expected = oracle::pec_cylinder_modes(1.0, 0.4, 0, 1, 0, oracle::CavityMode::tm);
        CHECK(found.front().frequency_thz == doctest::Approx(expected).epsilon(0.01));
        CHECK(found.front().q > 1e6);
    }

    TEST_CASE("profile accumulation")
    {
        const SimConfig c = pec_cylinder(0.02);
        const auto found = harmonic_inversion(run_ringdown(c).front(), {90.0, 140.0});
        REQUIRE(!found.empty());
        const double nu = found.front().frequency_thz;

        const ModeProfile on = accumulate_profile(c, nu);
        const ModeProfile off = accumulate_profile(c, 180.0);
        CHECK(on.nr() == c.index_map.nr());
        CHECK(on.nz() == c.index_map.nz());
        CHECK(off.raw_norm / on.raw_norm < 0.05);
        // TM010 of a closed cylinder: E_z only, single radial lobe.
        CHECK(on.ez.abs2().sum() > 1e3 * (on.er.abs2().sum() + on.ep.abs2().sum()));

        const ModeProfile half = accumulate_profile(c, nu, 10000);
        const double rms = std::sqrt((on.intensity()).mean());
        const double diff = std::sqrt(((on.ez - half.ez).abs2() + (on.er - half.er).abs2()).mean());
        CHECK(diff / rms < 0.02);
    }

    TEST_CASE("resonances inside one DFT bin are demixed")
    {
        // TM010 and TM020 both excited, accumulated over a window far shorter
        // than their beat period. The source spectrum has no DC content, so no
        // static field is left behind.
        SimConfig c = pec_cylinder(0.02);
        c.source.center_thz = 190.0;
        c.source.width_thz = 40.0;
        c.steps_after_source = 6000;
        const double nu1 = oracle::pec_cylinder_modes(1.0, 0.4, 0, 1, 0, oracle::CavityMode::tm);
        const double nu2 = oracle::pec_cylinder_modes(1.0, 0.4, 0, 2, 0, oracle::CavityMode::tm);
        auto poles = harmonic_inversion(run_ringdown(c).front(), {80.0, 280.0});
        double largest = 0.0;
        for (const auto &h : poles)
            largest = std::max(largest, std::abs(h.amplitude));
        std::erase_if(poles, [&](const HarmonicComponent &h) {
            return h.residual >= 1e-4 || std::abs(h.amplitude) < 1e-3 * largest;
        });
        std::sort(poles.begin(), poles.end(),
                  [](const auto &a, const auto &b) { return a.frequency_thz < b.frequency_thz; });
        std::vector<double> targets, qs;
        for (const auto &h : poles) {
            targets.push_back(h.frequency_thz);
            qs.push_back(h.q > 0.0 ? h.q : std::numeric_limits<double>::infinity());
        }
        REQUIRE(targets.size() == 2);
        CHECK(targets[0] == doctest::Approx(nu1).epsilon(0.01));
        CHECK(targets[1] == doctest::Approx(nu2).epsilon(0.01));

        const long window = 120;
        const auto mixed = accumulate_profiles(c, targets, window).profiles;
        const auto clean = accumulate_profiles(c, targets, window, qs).profiles;
        const auto match = [&](const ModeProfile &p, double zero) {
            const Eigen::Index k = p.nz() / 2;
            double dot = 0.0, pp = 0.0, bb = 0.0;
            for (Eigen::Index i = 0; i < p.nr(); ++i) {
                const double r = p.r_min + (static_cast<double>(i) + 0.5) * p.dr;
                const double b = std::cyl_bessel_j(0.0, zero * r);
                dot += std::abs(p.ez(i, k)) * std::abs(b) * r;
                pp += std::norm(p.ez(i, k)) * r;
                bb += b * b * r;
            }
            return dot / std::sqrt(pp * bb);
        };
        const double chi01 = oracle::bessel_zero(0, 1, false), chi02 = oracle::bessel_zero(0, 2, false);
        CHECK(match(mixed[0], chi01) < 0.995);
        CHECK(match(mixed[1], chi02) < 0.995);
        CHECK(match(clean[0], chi01) > 0.9999);
        CHECK(match(clean[1], chi02) > 0.9999);
        CHECK_THROWS_AS(accumulate_profiles(c, targets, window, std::vector<double>{1e4}), ValidationError);
    }
}
